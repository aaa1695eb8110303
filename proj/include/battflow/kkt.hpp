#pragma once

#include <utility>
#include <vector>

#include "battflow/derivatives.hpp"
#include "battflow/problem.hpp"
#include "battflow/sparse.hpp"
#include "battflow/types.hpp"

namespace battflow {

/// Reduced Newton system [[M, G_X^T],[G_X, 0]]: per-time M blocks and
/// right-hand sides plus the equality residuals.
struct ReducedKkt {
  std::vector<SpMat> m_blocks;  // per t, nxt x nxt
  std::vector<Vec> n_blocks;    // per t, nxt
  Vec g_resid;                  // stacked equality residuals
};

/// The reordered arrowhead system: block-diagonal Upsilon_t bordered by the
/// storage coupling rows rho_t, with the storage multipliers last.
struct ArrowheadSystem {
  Index T = 0, ny = 0, n_gs = 0;
  std::vector<Index> n_ups;    // per-t block size N_Upsilon_t
  std::vector<Index> ups_off;  // size T+1 prefix offsets
  std::vector<SpMat> upsilon;  // per t
  std::vector<SpMat> rho;      // per t, n_gs x N_Upsilon_t
  std::vector<Vec> zeta;       // per t
  Vec gamma_rhs;               // n_gs

  Index total_dim() const { return ups_off[static_cast<size_t>(T)] + n_gs; }

  /// Arrowhead index -> row of the pre-reordering stacking
  /// [X; lambda_nl; lambda_lin; lambda_storage].
  std::vector<Index> perm_to_original;

  /// Assemble the full arrowhead matrix (used by the direct backend and by
  /// residual checks).
  SpMat assemble() const;
  Vec assemble_rhs() const;
};

ArrowheadSystem reorder_arrowhead(const ReducedKkt& rk, const DerivBundle& d, const Problem& p);

/// Predicted nonzero positions of each S_t and of the accumulated Schur
/// complement, derived from the availability schedules and pinned variables.
struct SchurPattern {
  std::vector<std::vector<std::pair<Index, Index>>> positions;  // per t, sorted
  std::vector<Index> nnz_per_block;
  Index total_nnz = 0;
  SpMat sigma_pattern;  // n_gs x n_gs with explicit zeros at every position
};

SchurPattern predict_schur_nnz(const Problem& p);

struct NnzLedger {
  Index block_factors = 0;  // live per-t LU factor entries
  Index schur_factor = 0;   // LDL^T factor entries
  Index direct_factor = 0;  // whole-matrix LU entries
  Index peak_live = 0;

  Index live() const { return block_factors + schur_factor + direct_factor; }
  void bump_peak() { peak_live = std::max(peak_live, live()); }
};

/// Block factorization with a Schur complement over the storage multipliers,
/// then forward/backward substitution. The solver object persists across
/// interior-point iterations and reuses symbolic work when block patterns
/// repeat.
class SchurSolver {
 public:
  explicit SchurSolver(const Problem& p);

  void factorize(const ArrowheadSystem& sys);
  std::pair<std::vector<Vec>, Vec> solve(const ArrowheadSystem& sys) const;

  const NnzLedger& ledger() const { return ledger_; }
  const SchurPattern& pattern() const { return pattern_; }
  const SpMat& sigma_c() const { return sigma_; }
  bool static_structure() const { return static_structure_; }
  long amd_calls_in_last_factorize() const { return amd_calls_last_; }
  bool ldl_dense_fallback() const { return ldl_.valid() && ldl_.dense_fallback(); }

 private:
  SchurPattern pattern_;
  bool static_structure_ = false;
  std::vector<LuFactors> block_lu_;
  std::vector<Permutation> block_perm_;
  std::vector<size_t> block_hash_;
  SpMat sigma_;
  Vec sigma_l_;
  LdlFactors ldl_;
  NnzLedger ledger_;
  long amd_calls_last_ = 0;

  // per-t scatter plan: value-array offsets into sigma_ for each predicted
  // (row, col) of S_t, plus the local row list of rho_t
  struct ScatterPlan {
    std::vector<Index> rows;             // global sigma rows touched by rho_t
    std::vector<std::pair<Index, Index>> local;  // (local r, local c) predicted
    std::vector<Index> value_offset;     // into sigma_.valuePtr()
  };
  std::vector<ScatterPlan> plans_;
  void build_plans(const Problem& p);

  std::pair<std::vector<Vec>, Vec> solve_once(const ArrowheadSystem& sys,
                                              const std::vector<Vec>& rhs_blocks,
                                              const Vec& rhs_border) const;
};

/// Direct sparse-LU baseline over the assembled arrowhead matrix.
class DirectSolver {
 public:
  DirectSolver() = default;

  void factorize(const ArrowheadSystem& sys);
  std::pair<std::vector<Vec>, Vec> solve(const ArrowheadSystem& sys) const;

  const NnzLedger& ledger() const { return ledger_; }

 private:
  LuFactors lu_{LuOrdering::Natural};  // fill order comes from the AMD permutation
  Permutation amd_;
  size_t amd_pattern_ = 0;
  SpMat assembled_;
  NnzLedger ledger_;
};

/// Infinity-norm residual of the assembled arrowhead system for a candidate
/// solution, scaled by (1 + max involved magnitude).
Real arrowhead_residual(const ArrowheadSystem& sys, const std::vector<Vec>& omega,
                        const Vec& dlam);

}  // namespace battflow
