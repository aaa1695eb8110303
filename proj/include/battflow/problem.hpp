#pragma once

#include <vector>

#include "battflow/caseio.hpp"
#include "battflow/network.hpp"
#include "battflow/types.hpp"

namespace battflow {

/// Per-time variable groups, in this fixed order.
enum class VarGroup { Theta = 0, Vm, Pg, Qg, Soc, Pch, Pdch, Qs };

struct VarLayout {
  Index nb = 0, ng = 0, ny = 0, T = 0;
  Index nxt = 0;  // per-time width: 2 nb + 2 ng + 4 ny

  Index group_off(VarGroup g) const {
    switch (g) {
      case VarGroup::Theta: return 0;
      case VarGroup::Vm: return nb;
      case VarGroup::Pg: return 2 * nb;
      case VarGroup::Qg: return 2 * nb + ng;
      case VarGroup::Soc: return 2 * nb + 2 * ng;
      case VarGroup::Pch: return 2 * nb + 2 * ng + ny;
      case VarGroup::Pdch: return 2 * nb + 2 * ng + 2 * ny;
      case VarGroup::Qs: return 2 * nb + 2 * ng + 3 * ny;
    }
    return 0;
  }
  Index local(VarGroup g, Index k) const { return group_off(g) + k; }
  Index x_off(Index t) const { return t * nxt; }
  Index global(Index t, VarGroup g, Index k) const { return x_off(t) + local(g, k); }
  Index n_x() const { return T * nxt; }
};

/// A linear equality row e_v^T x_t = value (slack angle or a pinned variable).
struct LinEqRow {
  Index local;  // variable index within x_t
  Real value;
};

/// One side of a box constraint on an unpinned variable.
struct BoxRow {
  Index local;
  Real bound;
  bool upper;  // true: x - bound <= 0, false: bound - x <= 0
};

struct ConLayout {
  Index T = 0;
  Index ngn_t = 0;  // 2 nb nonlinear equality rows per t
  Index nhn_t = 0;  // 2 * (limited in-service lines) per t
  Index ny = 0;

  std::vector<Index> ngl;  // per-t linear equality count
  std::vector<Index> nhl;  // per-t box-row count

  // global row offsets, stacking order: all Gt, all Gl, all Gs / all Ht, all Hl
  std::vector<Index> gl_off;  // size T+1, relative to gl_base()
  std::vector<Index> hl_off;  // size T+1, relative to hl_base()

  Index gt_base() const { return 0; }
  Index gl_base() const { return T * ngn_t; }
  Index gs_base() const { return gl_base() + gl_off[static_cast<size_t>(T)]; }
  Index n_g() const { return gs_base() + T * ny; }

  Index ht_base() const { return 0; }
  Index hl_base() const { return T * nhn_t; }
  Index n_h() const { return hl_base() + hl_off[static_cast<size_t>(T)]; }

  Index gt_row(Index t, Index r) const { return t * ngn_t + r; }
  Index gl_row(Index t, Index r) const { return gl_base() + gl_off[static_cast<size_t>(t)] + r; }
  Index gs_row(Index t, Index i) const { return gs_base() + t * ny + i; }
  Index ht_row(Index t, Index r) const { return t * nhn_t + r; }
  Index hl_row(Index t, Index r) const { return hl_base() + hl_off[static_cast<size_t>(t)] + r; }
};

struct Problem {
  Case net;
  Admittances adm;
  Connectivity3d conn;
  VarLayout vars;
  ConLayout cons;

  Vec xmin, xmax;  // N_x bounds, +-inf where free; pinned vars have min == max
  std::vector<std::vector<LinEqRow>> lin_eq;  // per t, slack rows first
  std::vector<std::vector<BoxRow>> boxes;     // per t

  std::vector<Index> limited_lines;  // rows of `branch` with rateA > 0, in service
  Vec smax2;                         // squared p.u. flow limits for those lines

  // per-unit storage coefficients
  Vec emax_pu;      // E^max / baseMVA
  Vec psi_ch;       // charge efficiencies
  Vec psi_dch;     // discharge efficiencies
  Mat soc_lo;       // n_y x T effective SOC lower bounds

  // cost in per-unit power: cost(pg_pu) = c2 pg^2 + c1 pg + c0, gated by avg
  Vec cost_c2, cost_c1, cost_c0;     // active power, length n_g
  Vec qcost_c2, qcost_c1, qcost_c0;  // reactive, zero when absent
  Vec price_pu;                      // optional per-step linear tariff

  bool pinned(Index global_idx) const { return xmin[global_idx] == xmax[global_idx]; }
  bool soc_pinned(Index i, Index t) const {
    return pinned(vars.global(t, VarGroup::Soc, i));
  }
  bool pch_active(Index i, Index t) const {
    return net.avbp(i, t) == 1 && net.conch(i, t) == 1;
  }
  bool pdch_active(Index i, Index t) const {
    return net.avbp(i, t) == 1 && net.condi(i, t) == 1;
  }
};

Problem build_problem(const Case& c);

/// Complex bus voltages for time t from the stacked variable vector.
CVec voltages_at(const Problem& p, const Vec& x, Index t);

/// Stacked equality residuals, order [all nonlinear; all linear; all storage].
Vec eval_equalities(const Problem& p, const Vec& x);

/// Stacked inequality residuals, order [all line-flow; all box].
Vec eval_inequalities(const Problem& p, const Vec& x);

Real eval_objective(const Problem& p, const Vec& x);
Vec objective_gradient(const Problem& p, const Vec& x);

/// Flat start: bound midpoints, zero angles, unit voltage magnitudes.
Vec initial_point(const Problem& p);

}  // namespace battflow
