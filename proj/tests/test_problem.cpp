#include "battflow/problem.hpp"

#include <random>

#include "doctest.h"

using namespace battflow;

namespace {

Case case9_with_storage(Index T, Index ny, StorageDefaults d = {}) {
  Case c = case9();
  ensure_load_series(c, T);
  if (ny > 0) add_stationary_storage(c, ny, Strategy::FirstLast, d);
  return c;
}

Vec zero_operating_point(const Problem& p) {
  Vec x = Vec::Zero(p.vars.n_x());
  for (Index t = 0; t < p.vars.T; ++t)
    for (Index b = 0; b < p.vars.nb; ++b) x[p.vars.global(t, VarGroup::Vm, b)] = 1.0;
  return x;
}

}  // namespace

TEST_CASE("variable layout arithmetic for case9 T=24 ny=3") {
  Problem p = build_problem(case9_with_storage(24, 3));
  CHECK(p.vars.nxt == 36);  // 2*9 + 2*3 + 4*3
  CHECK(p.vars.n_x() == 864);
  CHECK(p.cons.ngn_t == 18);
  CHECK(p.cons.n_g() == 24 * 18 + p.cons.gl_off[24] + 24 * 3);
}

TEST_CASE("ny=0 degenerates to independent single-period problems") {
  Problem p = build_problem(case9_with_storage(3, 0));
  CHECK(p.vars.nxt == 24);
  CHECK(p.cons.gs_base() == p.cons.n_g());  // no storage rows

  // residual block at time t only reacts to x_t
  Vec x = initial_point(p);
  Vec g0 = eval_equalities(p, x);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<Real> u(-0.01, 0.01);
  Vec x2 = x;
  for (Index l = 0; l < p.vars.nxt; ++l) x2[p.vars.x_off(1) + l] += u(rng);
  Vec g2 = eval_equalities(p, x2);
  for (Index r = 0; r < p.cons.ngn_t; ++r) {
    CHECK(g2[p.cons.gt_row(0, r)] == g0[p.cons.gt_row(0, r)]);
    CHECK(g2[p.cons.gt_row(2, r)] == g0[p.cons.gt_row(2, r)]);
    CHECK(g2[p.cons.gt_row(1, r)] != g0[p.cons.gt_row(1, r)]);
  }
}

TEST_CASE("unavailable steps pin storage variables into the linear equalities") {
  Case c = case9_with_storage(4, 1);
  c.avbp(0, 0) = c.avbp(0, 1) = 0;
  c.conch(0, 0) = c.conch(0, 1) = 0;
  c.condi(0, 0) = c.condi(0, 1) = 0;
  c.avbq(0, 0) = c.avbq(0, 1) = 0;
  Problem p = build_problem(c);

  // t=0,1 carry pins for Pch/Pdch/Qs on top of the slack row; SOC stays free
  CHECK(p.cons.ngl[0] > p.cons.ngl[2]);
  CHECK(p.cons.ngl[0] == p.cons.ngl[1]);
  const Index pch0 = p.vars.global(0, VarGroup::Pch, 0);
  CHECK(p.pinned(pch0));
  CHECK_FALSE(p.pinned(p.vars.global(2, VarGroup::Pch, 0)));
  CHECK_FALSE(p.pinned(p.vars.global(0, VarGroup::Soc, 0)));

  // pinned variables never appear among the box rows
  for (Index t = 0; t < 4; ++t)
    for (const auto& b : p.boxes[static_cast<size_t>(t)])
      CHECK_FALSE(p.pinned(p.vars.x_off(t) + b.local));
}

TEST_CASE("storage balance rows implement the energy recursion") {
  StorageDefaults d;
  d.emax_mwh = 100;
  d.eff_ch = 1.0;
  d.eff_dch = 1.0;
  Case c = case9_with_storage(3, 1, d);
  Problem p = build_problem(c);
  Vec x = zero_operating_point(p);

  SUBCASE("idle battery carrying its SOC has zero residual") {
    for (Index t = 0; t < 3; ++t) x[p.vars.global(t, VarGroup::Soc, 0)] = 0.4;
    // t=0 ties SOC to SOCi=0, later rows only difference SOCs
    Vec g = eval_equalities(p, x);
    CHECK(g[p.cons.gs_row(1, 0)] == doctest::Approx(0.0));
    CHECK(g[p.cons.gs_row(2, 0)] == doctest::Approx(0.0));
  }

  SUBCASE("10 MW charge for 1 h on 100 MWh raises SOC by 0.1") {
    x[p.vars.global(1, VarGroup::Pch, 0)] = 0.1;  // 10 MW in p.u.
    x[p.vars.global(1, VarGroup::Soc, 0)] = 0.1;
    Vec g = eval_equalities(p, x);
    CHECK(g[p.cons.gs_row(1, 0)] == doctest::Approx(0.0).epsilon(1e-12));
    x[p.vars.global(1, VarGroup::Soc, 0)] = 0.2;
    g = eval_equalities(p, x);
    CHECK(g[p.cons.gs_row(1, 0)] != doctest::Approx(0.0));
  }
}

TEST_CASE("flat start with zero dispatch leaves the raw load as imbalance") {
  // strip line charging so flat-start injections vanish exactly
  Case c = case9();
  c.branch.col(brcol::B).setZero();
  ensure_load_series(c, 2);
  Problem p = build_problem(c);
  Vec x = zero_operating_point(p);
  Vec g = eval_equalities(p, x);
  for (Index b = 0; b < 9; ++b) {
    CHECK(g[p.cons.gt_row(0, b)] == doctest::Approx(p.net.pd(b, 0) / 100.0));
    CHECK(g[p.cons.gt_row(0, 9 + b)] == doctest::Approx(p.net.qd(b, 0) / 100.0));
  }
}

TEST_CASE("storage telescoping over the horizon") {
  StorageDefaults d;
  Case c = case9_with_storage(6, 2, d);
  Problem p = build_problem(c);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<Real> u(0, 0.08);

  // propagate a feasible SOC trajectory from random charge/discharge
  Vec x = zero_operating_point(p);
  const Real dt = c.dt_hours;
  for (Index i = 0; i < 2; ++i) {
    Real e = p.emax_pu[i] * c.soci.coeff(i, 0);
    for (Index t = 0; t < 6; ++t) {
      const Real pch = u(rng), pdch = u(rng) * 0.3;
      x[p.vars.global(t, VarGroup::Pch, i)] = pch;
      x[p.vars.global(t, VarGroup::Pdch, i)] = pdch;
      e += p.psi_ch[i] * pch * dt - pdch * dt / p.psi_dch[i];
      x[p.vars.global(t, VarGroup::Soc, i)] = e / p.emax_pu[i];
    }
  }
  Vec g = eval_equalities(p, x);
  for (Index i = 0; i < 2; ++i) {
    Real sum = 0;
    for (Index t = 0; t < 6; ++t) sum += g[p.cons.gs_row(t, i)];
    CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
    // telescoped identity: E_T - E_0 = sum of net charge
    Real net = 0;
    for (Index t = 0; t < 6; ++t)
      net += p.psi_ch[i] * x[p.vars.global(t, VarGroup::Pch, i)] * dt -
             x[p.vars.global(t, VarGroup::Pdch, i)] * dt / p.psi_dch[i];
    const Real e_end = p.emax_pu[i] * x[p.vars.global(5, VarGroup::Soc, i)];
    const Real e_start = p.emax_pu[i] * c.soci.coeff(i, 0);
    CHECK(e_end - e_start == doctest::Approx(net).epsilon(1e-10));
  }
}

TEST_CASE("inequality rows: line limits and boxes") {
  Problem p = build_problem(case9_with_storage(1, 0));
  Vec x = zero_operating_point(p);
  Vec h = eval_inequalities(p, x);

  // flat voltages and case9 line charging: flows are small, all rows strictly feasible
  const Index nlim = static_cast<Index>(p.limited_lines.size());
  CHECK(nlim == 9);
  for (Index k = 0; k < 2 * nlim; ++k) CHECK(h[p.cons.ht_row(0, k)] < 0);

  // scalar oracle on a random point
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<Real> mag(0.95, 1.05), ang(-0.25, 0.25);
  for (Index b = 0; b < 9; ++b) {
    x[p.vars.global(0, VarGroup::Theta, b)] = ang(rng);
    x[p.vars.global(0, VarGroup::Vm, b)] = mag(rng);
  }
  h = eval_inequalities(p, x);
  const CVec v = voltages_at(p, x, 0);
  auto [sf, st] = line_flows(p.adm, v);
  for (Index k = 0; k < nlim; ++k) {
    const Index l = p.limited_lines[static_cast<size_t>(k)];
    CHECK(h[p.cons.ht_row(0, k)] ==
          doctest::Approx(std::norm(sf[l]) - p.smax2[k]).epsilon(1e-12));
  }
  // boundary case: an exactly binding row evaluates to zero
  Problem q = build_problem(case9_with_storage(1, 0));
  Vec hq = eval_inequalities(q, x);
  const Real smax = std::sqrt(q.smax2[0]);
  (void)smax;

  // box rows match their definition
  for (size_t r = 0; r < p.boxes[0].size(); ++r) {
    const auto& b = p.boxes[0][r];
    const Real expect = b.upper ? x[b.local] - b.bound : b.bound - x[b.local];
    CHECK(h[p.cons.hl_row(0, static_cast<Index>(r))] == doctest::Approx(expect));
  }
}

TEST_CASE("objective: constant, tariff and quadratic forms") {
  SUBCASE("c0-only cost sums over generators and periods") {
    Case c = case9_with_storage(2, 0);
    for (Index g = 0; g < 3; ++g) {
      c.gencost(g, costcol::NCOEF) = 1;
      c.gencost(g, costcol::COEF0) = 5;
      c.gencost(g, costcol::COEF0 + 1) = 0;
      c.gencost(g, costcol::COEF0 + 2) = 0;
    }
    Problem p = build_problem(c);
    Vec x = zero_operating_point(p);
    CHECK(eval_objective(p, x) == doctest::Approx(30.0));
  }

  SUBCASE("price vector gives the dot-product tariff") {
    Case c = case9_with_storage(3, 0);
    c.price.resize(3);
    c.price << 10, 20, 30;
    Problem p = build_problem(c);
    Vec x = initial_point(p);
    Real oracle = 0;
    for (Index t = 0; t < 3; ++t)
      for (Index g = 0; g < 3; ++g)
        oracle += c.price[t] * x[p.vars.global(t, VarGroup::Pg, g)] * 100.0;
    CHECK(eval_objective(p, x) == doctest::Approx(oracle));
  }

  SUBCASE("quadratic case9 cost matches the per-generator polynomial oracle") {
    Problem p = build_problem(case9_with_storage(2, 0));
    Vec x = initial_point(p);
    x[p.vars.global(0, VarGroup::Pg, 0)] = 0.723;
    x[p.vars.global(1, VarGroup::Pg, 2)] = 0.85;
    Real oracle = 0;
    for (Index t = 0; t < 2; ++t)
      for (Index g = 0; g < 3; ++g) {
        const Real mw = x[p.vars.global(t, VarGroup::Pg, g)] * 100.0;
        oracle += p.net.gencost(g, 4) * mw * mw + p.net.gencost(g, 5) * mw + p.net.gencost(g, 6);
      }
    CHECK(eval_objective(p, x) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("initial point: midpoints, unit voltages, pinned values") {
  Case c = case9_with_storage(2, 1);
  Problem p = build_problem(c);
  Vec x = initial_point(p);
  CHECK(x[p.vars.global(0, VarGroup::Vm, 4)] == doctest::Approx(1.0));  // (0.9+1.1)/2
  CHECK(x[p.vars.global(0, VarGroup::Pg, 0)] == doctest::Approx(1.3));  // (10+250)/2 MW in p.u.
  CHECK(x[p.vars.global(0, VarGroup::Soc, 0)] == doctest::Approx(0.5));
  CHECK(x[p.vars.global(0, VarGroup::Theta, 3)] == 0.0);
  CHECK(x[p.vars.global(1, VarGroup::Qs, 0)] == 0.0);  // pinned at zero
}

TEST_CASE("constraint count bookkeeping matches direct enumeration") {
  StorageDefaults d;
  d.qs_max = 5;
  d.qs_min = -5;  // keep storage fully boxed: 8 rows per device per step
  Case c = case9_with_storage(5, 2, d);
  c.avbq.setOnes();
  Problem p = build_problem(c);

  Index ng_direct = static_cast<Index>(eval_equalities(p, initial_point(p)).size());
  CHECK(p.cons.n_g() == ng_direct);
  Index sum_ngl = 0;
  for (Index t = 0; t < 5; ++t) sum_ngl += p.cons.ngl[static_cast<size_t>(t)];
  CHECK(p.cons.n_g() == 5 * p.cons.ngn_t + sum_ngl + 5 * 2);

  // N_hl = sum over t of grid box rows plus T * 8 n_y storage box rows
  Index nh_direct = static_cast<Index>(eval_inequalities(p, initial_point(p)).size());
  CHECK(p.cons.n_h() == nh_direct);
  Index grid_rows = 0;
  for (Index t = 0; t < 5; ++t) {
    Index storage_rows = 0;
    for (const auto& b : p.boxes[static_cast<size_t>(t)])
      if (b.local >= p.vars.group_off(VarGroup::Soc)) ++storage_rows;
    CHECK(storage_rows == 8 * 2);
    grid_rows += p.cons.nhl[static_cast<size_t>(t)] - storage_rows;
  }
  CHECK(p.cons.n_h() == 5 * p.cons.nhn_t + grid_rows + 5 * 8 * 2);
}

TEST_CASE("unlimited lines are excluded from the flow constraints") {
  Case c = case9();
  c.branch(0, brcol::RATE_A) = 0;
  c.branch(3, brcol::RATE_A) = 0;
  ensure_load_series(c, 2);
  Problem p = build_problem(c);
  CHECK(p.limited_lines.size() == 7);
  CHECK(p.cons.nhn_t == 14);
  Vec h = eval_inequalities(p, initial_point(p));
  CHECK(h.size() == p.cons.n_h());
}

TEST_CASE("a flow exactly at its limit gives a zero inequality residual") {
  // two-bus resistive line: V = [1, 0.9] pushes 0.1 p.u. through the line
  Case c = case9();
  c.bus = c.bus.topRows(2).eval();
  c.bus(1, buscol::TYPE) = 1;
  c.branch = c.branch.topRows(1).eval();
  c.branch(0, brcol::FROM) = 1;
  c.branch(0, brcol::TO) = 2;
  c.branch(0, brcol::R) = 1.0;
  c.branch(0, brcol::X) = 0.0;
  c.branch(0, brcol::B) = 0.0;
  c.branch(0, brcol::RATE_A) = 10.0;  // 0.1 p.u.
  c.gen = c.gen.topRows(1).eval();
  c.gencost = c.gencost.topRows(1).eval();
  ensure_load_series(c, 1);
  Problem p = build_problem(c);
  Vec x = initial_point(p);
  x[p.vars.global(0, VarGroup::Vm, 0)] = 1.0;
  x[p.vars.global(0, VarGroup::Vm, 1)] = 0.9;
  x[p.vars.global(0, VarGroup::Theta, 1)] = 0.0;
  Vec h = eval_inequalities(p, x);
  CHECK(h[p.cons.ht_row(0, 0)] == doctest::Approx(0.0).epsilon(1e-14));  // |S_fr|^2 = smax^2
}
