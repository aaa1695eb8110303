#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "battflow/types.hpp"

namespace battflow {

// Minimal sparse kernel used by the KKT machinery. Factorizations are backed
// by Eigen (SparseLU / SimplicialLDLT / AMD); the wrappers pin down the
// contracts the rest of the code relies on: duplicate-summed CSC assembly,
// deterministic fill-reducing orderings, singularity reporting, and nnz
// accounting for the memory ledger.

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(std::string what, Index column)
      : std::runtime_error(std::move(what)), column_(column) {}
  /// Column of the offending pivot, or -1 when the backend does not say.
  Index column() const { return column_; }

 private:
  Index column_;
};

class AsymmetricMatrixError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// CSC matrix from (row, col, value) entries; duplicates are summed.
/// Entries that sum to zero are dropped unless keep_explicit_zeros is set
/// (pattern-stable assembly wants them kept).
SpMat from_triplets(Index nrows, Index ncols, const std::vector<Triplet>& entries,
                    bool keep_explicit_zeros = false);

struct Permutation {
  std::vector<Index> forward;  // forward[i] = new position of old index i

  Index size() const { return static_cast<Index>(forward.size()); }
  bool is_identity() const;
  bool is_valid() const;
  Permutation inverse() const;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, Index> matrix() const;

  static Permutation identity(Index n);
};

/// Symmetrically permute a square matrix: result = P * a * P^T with
/// result(p[i], p[j]) = a(i, j).
SpMat permute_symmetric(const SpMat& a, const Permutation& p);

/// Fill-reducing approximate-minimum-degree ordering of a square pattern
/// (pattern of A + A^T is used when the input is not symmetric).
/// Deterministic for a fixed input. Throws std::invalid_argument on
/// non-square input.
Permutation amd_order(const SpMat& pattern);

/// Number of amd_order invocations since start or the last reset; used by the
/// static-structure reuse tests.
long amd_call_count();
void reset_amd_call_count();

/// Column ordering used inside the LU. Colamd reorders columns for fill
/// (what the per-block factorization wants); Natural keeps the caller's
/// ordering, for use behind an explicit fill-reducing permutation.
enum class LuOrdering { Colamd, Natural };

/// Sparse LU with partial pivoting and row equilibration. Reusable: a second
/// factorize() with an unchanged pattern skips the symbolic analysis.
class LuFactors {
 public:
  explicit LuFactors(LuOrdering ordering = LuOrdering::Colamd);
  ~LuFactors();
  LuFactors(LuFactors&&) noexcept;
  LuFactors& operator=(LuFactors&&) noexcept;

  void factorize(const SpMat& a);  // throws SingularMatrixError

  Vec solve(const Vec& b) const;
  Mat solve(const Mat& b) const;

  bool valid() const;
  Index rows() const;
  Index nnz_l() const;
  Index nnz_u() const;
  Index factor_nnz() const { return nnz_l() + nnz_u(); }
  const Vec& row_scale() const;
  Permutation row_perm() const;
  Permutation col_perm() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

LuFactors lu_factor(const SpMat& a);
Vec lu_solve(const LuFactors& f, const Vec& b);

/// Sparse LDL^T for symmetric (possibly indefinite) matrices. The primary
/// path uses 1x1 pivots; if a pivot collapses the factorization is redone
/// with a dense Bunch-Kaufman LDL^T (1x1/2x2 pivots) and flagged.
class LdlFactors {
 public:
  LdlFactors();
  ~LdlFactors();
  LdlFactors(LdlFactors&&) noexcept;
  LdlFactors& operator=(LdlFactors&&) noexcept;

  void factorize(const SpMat& a);  // throws AsymmetricMatrixError, SingularMatrixError

  Vec solve(const Vec& b) const;

  bool valid() const;
  Index rows() const;
  Index nnz_l() const;
  Index factor_nnz() const;
  bool dense_fallback() const;  // Bunch-Kaufman path was taken
  bool used_2x2_pivot() const;
  Permutation perm() const;
  const Vec& scale() const;  // symmetric equilibration applied before factoring

  /// Explicit factors for verification: P (S a S) P^T = L D L^T with
  /// P = perm() and S = diag(scale()). D carries 1x1 blocks on the diagonal
  /// and 2x2 blocks via the subdiagonal.
  SpMat matrix_l() const;
  Mat block_d() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

LdlFactors ldl_factor(const SpMat& a);
Vec ldl_solve(const LdlFactors& f, const Vec& b);

}  // namespace battflow
