#include "battflow/derivatives.hpp"

#include <random>

#include "doctest.h"

using namespace battflow;

namespace {

Case case9_with_storage(Index T, Index ny) {
  Case c = case9();
  ensure_load_series(c, T);
  if (ny > 0) add_stationary_storage(c, ny, Strategy::FirstLast);
  return c;
}

Vec random_interior(const Problem& p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> u(-1, 1);
  Vec x(p.vars.n_x());
  for (Index i = 0; i < p.vars.n_x(); ++i) {
    const Real lo = p.xmin[i], hi = p.xmax[i];
    if (lo == hi) {
      x[i] = lo;
    } else if (std::isfinite(lo) && std::isfinite(hi)) {
      x[i] = 0.5 * (lo + hi) + 0.35 * (hi - lo) * u(rng) * 0.5;
    } else {
      x[i] = 0.2 * u(rng);  // angles
    }
  }
  return x;
}

Real rel_err(const Mat& a, const Mat& fd) {
  return (a - fd).cwiseAbs().maxCoeff() / (1 + fd.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("fd oracle recovers linear maps exactly and x^2 at 2") {
  Mat a(3, 2);
  a << 1, -2, 0.5, 4, 3, 0;
  auto lin = [&a](const Vec& x) { return Vec(a * x); };
  Vec x0(2);
  x0 << 0.3, -0.8;
  CHECK((fd_jacobian(lin, x0) - a).cwiseAbs().maxCoeff() < 1e-9);

  auto sq = [](const Vec& x) { return Vec(x.array().square()); };
  Vec x1(1);
  x1 << 2.0;
  CHECK(fd_jacobian(sq, x1)(0, 0) == doctest::Approx(4.0).epsilon(1e-9));
  CHECK_THROWS_AS(fd_jacobian(sq, x1, 0.0), std::invalid_argument);
}

TEST_CASE("power-balance jacobian of an isolated bus vanishes") {
  // two buses, one out-of-service line: Ybus = 0
  Case c = case9_with_storage(1, 0);
  c.branch.col(brcol::STATUS).setZero();
  c.branch(0, brcol::STATUS) = 1;  // keep the case connected enough to build
  Problem p = build_problem(c);
  CVec v = CVec::Ones(9);
  SpCMat dth, dvm;
  jac_power_balance(p.adm, v, dth, dvm);
  // buses 2..8 are isolated (only line 1-4 in service)
  Mat th = Mat(dth.real()), vm = Mat(dvm.real());
  CHECK(dth.coeff(2, 2) == Complex(0, 0));
  CHECK(dvm.coeff(2, 2) == Complex(0, 0));

  CVec zero_v = CVec::Zero(9);
  CHECK_THROWS_AS(jac_power_balance(p.adm, zero_v, dth, dvm), std::invalid_argument);
}

TEST_CASE("equality jacobian matches central differences on case9") {
  Problem p = build_problem(case9_with_storage(3, 2));
  for (uint64_t seed : {11ull, 12ull, 13ull, 14ull, 15ull}) {
    Vec x = random_interior(p, seed);
    DerivBundle d = jac_all(p, x);
    auto fun = [&p](const Vec& xx) { return eval_equalities(p, xx); };
    Mat fd = fd_jacobian(fun, x);
    CHECK(rel_err(Mat(d.g_x), fd) < 1e-6);
  }
}

TEST_CASE("inequality jacobian matches central differences on case9") {
  Problem p = build_problem(case9_with_storage(2, 1));
  for (uint64_t seed : {21ull, 22ull, 23ull, 24ull, 25ull}) {
    Vec x = random_interior(p, seed);
    DerivBundle d = jac_all(p, x);
    auto fun = [&p](const Vec& xx) { return eval_inequalities(p, xx); };
    Mat fd = fd_jacobian(fun, x);
    CHECK(rel_err(Mat(d.h_x), fd) < 1e-6);
  }
}

TEST_CASE("objective gradient matches central differences") {
  Problem p = build_problem(case9_with_storage(2, 1));
  Vec x = random_interior(p, 31);
  auto fun = [&p](const Vec& xx) {
    Vec out(1);
    out[0] = eval_objective(p, xx);
    return out;
  };
  Mat fd = fd_jacobian(fun, x);
  DerivBundle d = jac_all(p, x);
  CHECK(rel_err(Mat(d.f_x.transpose()), fd) < 1e-7);
}

TEST_CASE("zero-flow line has a zero flow-limit jacobian row") {
  Case c = case9_with_storage(1, 0);
  Problem p = build_problem(c);
  CVec v = CVec::Ones(9);  // no charging used here: strip it first
  Case c2 = case9();
  c2.branch.col(brcol::B).setZero();
  ensure_load_series(c2, 1);
  Problem p2 = build_problem(c2);
  LineFlowJac lf = jac_line_flow(p2.adm, v, p2.limited_lines);
  // flat start, no charging: S = 0 on every line, so the product rule kills h_x
  for (Index k = 0; k < 9; ++k) CHECK(std::abs(lf.sf[k]) < 1e-14);
  DerivBundle d = jac_all(p2, initial_point(p2));
  for (Index k = 0; k < p2.cons.nhn_t; ++k) {
    // rows of ht at flat start vanish
    CHECK(d.ht[0].row(k).norm() < 1e-12);
  }
}

TEST_CASE("two-bus line-flow jacobian against symbolic differentiation") {
  // S^fr = V1^2 g - V1 V2 (g cos d + b sin d) + j(...) for y = g + jb; check dP/dd
  Case c = case9();
  c.bus = c.bus.topRows(2).eval();
  c.bus(0, buscol::ID) = 1;
  c.bus(1, buscol::ID) = 2;
  c.bus(1, buscol::TYPE) = 1;
  c.branch = c.branch.topRows(1).eval();
  c.branch(0, brcol::FROM) = 1;
  c.branch(0, brcol::TO) = 2;
  c.branch(0, brcol::R) = 0.02;
  c.branch(0, brcol::X) = 0.1;
  c.branch(0, brcol::B) = 0;
  c.gen = c.gen.topRows(1).eval();
  c.gencost = c.gencost.topRows(1).eval();
  ensure_load_series(c, 1);
  Problem p = build_problem(c);

  const Real v1 = 1.02, v2 = 0.97, d1 = 0.05, d2 = -0.03;
  CVec v(2);
  v << std::polar(v1, d1), std::polar(v2, d2);
  LineFlowJac lf = jac_line_flow(p.adm, v, {0});

  const Complex y = Complex(1) / Complex(0.02, 0.1);
  const Real g = y.real(), b = y.imag(), dd = d1 - d2;
  // P^fr = g v1^2 - v1 v2 (g cos dd + b sin dd)
  const Real dp_dd1 = -v1 * v2 * (-g * std::sin(dd) + b * std::cos(dd));
  const Real dp_dv1 = 2 * g * v1 - v2 * (g * std::cos(dd) + b * std::sin(dd));
  CHECK(lf.dsf_dth.coeff(0, 0).real() == doctest::Approx(dp_dd1).epsilon(1e-10));
  CHECK(lf.dsf_dvm.coeff(0, 0).real() == doctest::Approx(dp_dv1).epsilon(1e-10));
}

TEST_CASE("storage jacobian rows carry the four-entry template") {
  Problem p = build_problem(case9_with_storage(3, 2));
  Vec x = random_interior(p, 5);
  DerivBundle d = jac_all(p, x);
  const auto& v = p.vars;
  const auto& cl = p.cons;
  Mat gx(d.g_x);

  for (Index i = 0; i < 2; ++i) {
    // t = 0: no SOC_{t-1} column anywhere
    const Index r0 = cl.gs_row(0, i);
    CHECK(gx(r0, v.global(0, VarGroup::Soc, i)) == doctest::Approx(p.emax_pu[i]));
    CHECK(gx.row(r0).cwiseAbs().sum() ==
          doctest::Approx(p.emax_pu[i] + p.psi_ch[i] * 1.0 + 1.0 / p.psi_dch[i]));

    // t = 1, 2: exactly four nonzero groups
    for (Index t = 1; t < 3; ++t) {
      const Index r = cl.gs_row(t, i);
      CHECK(gx(r, v.global(t - 1, VarGroup::Soc, i)) == doctest::Approx(-p.emax_pu[i]));
      CHECK(gx(r, v.global(t, VarGroup::Soc, i)) == doctest::Approx(p.emax_pu[i]));
      CHECK(gx(r, v.global(t, VarGroup::Pch, i)) == doctest::Approx(-p.psi_ch[i] * 1.0));
      CHECK(gx(r, v.global(t, VarGroup::Pdch, i)) == doctest::Approx(1.0 / p.psi_dch[i]));
      Index nnz_row = 0;
      for (Index cidx = 0; cidx < v.n_x(); ++cidx)
        if (gx(r, cidx) != 0) ++nnz_row;
      CHECK(nnz_row == 4);
    }
  }
}

TEST_CASE("lagrangian hessian: cost-only case is the quadratic diagonal") {
  Problem p = build_problem(case9_with_storage(2, 1));
  Vec x = random_interior(p, 7);
  Vec lam = Vec::Zero(p.cons.n_g()), mu = Vec::Zero(p.cons.n_h());
  HessBundle h = hess_lagrangian(p, x, lam, mu);
  Mat lxx(h.lxx);
  for (Index t = 0; t < 2; ++t)
    for (Index g = 0; g < 3; ++g)
      CHECK(lxx(p.vars.global(t, VarGroup::Pg, g), p.vars.global(t, VarGroup::Pg, g)) ==
            doctest::Approx(2 * p.cost_c2[g]));
  lxx.diagonal().setZero();
  CHECK(lxx.cwiseAbs().maxCoeff() == 0);  // nothing off-diagonal without multipliers
}

TEST_CASE("storage rows and columns of the constraint hessian vanish") {
  Problem p = build_problem(case9_with_storage(2, 2));
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<Real> u(-1, 1);
  Vec x = random_interior(p, 8);
  Vec lam(p.cons.n_g()), mu(p.cons.n_h());
  for (Index i = 0; i < lam.size(); ++i) lam[i] = u(rng);
  for (Index i = 0; i < mu.size(); ++i) mu[i] = 0.5 + 0.5 * u(rng);
  HessBundle h = hess_lagrangian(p, x, lam, mu);
  Mat lxx(h.lxx);
  for (Index t = 0; t < 2; ++t)
    for (Index k = p.vars.group_off(VarGroup::Soc); k < p.vars.nxt; ++k) {
      CHECK(lxx.row(p.vars.x_off(t) + k).cwiseAbs().sum() == 0);
      CHECK(lxx.col(p.vars.x_off(t) + k).cwiseAbs().sum() == 0);
    }
}

TEST_CASE("lagrangian hessian matches differentiated gradient and is symmetric") {
  Problem p = build_problem(case9_with_storage(2, 1));
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<Real> u(-1, 1);
  Vec lam(p.cons.n_g()), mu(p.cons.n_h());
  for (Index i = 0; i < lam.size(); ++i) lam[i] = u(rng);
  for (Index i = 0; i < mu.size(); ++i) mu[i] = 0.5 + 0.5 * u(rng);

  for (uint64_t seed : {41ull, 42ull, 43ull}) {
    Vec x = random_interior(p, seed);
    HessBundle h = hess_lagrangian(p, x, lam, mu);

    auto grad = [&](const Vec& xx) {
      DerivBundle d = jac_all(p, xx);
      return Vec(d.f_x + d.g_x.transpose() * lam + d.h_x.transpose() * mu);
    };
    Mat fd = fd_jacobian(grad, x);
    CHECK(rel_err(Mat(h.lxx), fd) < 1e-5);

    Mat lxx(h.lxx);
    const Real scale = std::max(Real(1), lxx.cwiseAbs().maxCoeff());
    CHECK((lxx - lxx.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

TEST_CASE("appendix-C pattern containment for jacobians and hessian") {
  Problem p = build_problem(case9_with_storage(3, 2));
  Vec x = random_interior(p, 77);
  DerivBundle d = jac_all(p, x);
  HessBundle h = hess_lagrangian(p, x, Vec::Ones(p.cons.n_g()), Vec::Ones(p.cons.n_h()));
  const auto& v = p.vars;
  const auto& cl = p.cons;

  // ybus-or-diagonal pattern for the voltage blocks
  Mat ypat = Mat(p.adm.ybus.cwiseAbs().real());
  auto allowed_vblock = [&](Index r, Index cdx) {
    return ypat(r, cdx) != 0 || r == cdx;
  };

  // Gt rows: Re rows may touch Theta, V, Pg, Pch, Pdch; Im rows Theta, V, Qg, Qs
  for (Index k = 0; k < d.g_x.outerSize(); ++k)
    for (SpMat::InnerIterator it(d.g_x, k); it; ++it) {
      const Index r = static_cast<Index>(it.row()), cdx = static_cast<Index>(it.col());
      if (r >= cl.gl_base()) continue;
      const Index t = r / cl.ngn_t, lr = r % cl.ngn_t;
      const Index tc = cdx / v.nxt, lc = cdx % v.nxt;
      CHECK(t == tc);  // block diagonal in time
      const bool is_p_row = lr < v.nb;
      const Index bus = is_p_row ? lr : lr - v.nb;
      if (lc < v.group_off(VarGroup::Pg)) {
        CHECK(allowed_vblock(bus, lc % v.nb));
      } else if (is_p_row) {
        const bool ok = (lc >= v.group_off(VarGroup::Pg) && lc < v.group_off(VarGroup::Qg)) ||
                        (lc >= v.group_off(VarGroup::Pch) && lc < v.group_off(VarGroup::Qs));
        CHECK(ok);
      } else {
        const bool ok = (lc >= v.group_off(VarGroup::Qg) && lc < v.group_off(VarGroup::Soc)) ||
                        lc >= v.group_off(VarGroup::Qs);
        CHECK(ok);
      }
    }

  // H rows only touch Theta/V (line rows) or single variables (box rows)
  for (Index k = 0; k < d.h_x.outerSize(); ++k)
    for (SpMat::InnerIterator it(d.h_x, k); it; ++it) {
      const Index r = static_cast<Index>(it.row()), cdx = static_cast<Index>(it.col());
      const Index lc = cdx % v.nxt;
      if (r < cl.hl_base()) CHECK(lc < v.group_off(VarGroup::Pg));
    }

  // Hessian: only (Theta,V)^2 region plus Pg/Qg diagonal
  for (Index k = 0; k < h.lxx.outerSize(); ++k)
    for (SpMat::InnerIterator it(h.lxx, k); it; ++it) {
      const Index r = static_cast<Index>(it.row()), cdx = static_cast<Index>(it.col());
      const Index tr = r / v.nxt, tc = cdx / v.nxt;
      CHECK(tr == tc);
      const Index lr = r % v.nxt, lc = cdx % v.nxt;
      const bool voltage_block =
          lr < v.group_off(VarGroup::Pg) && lc < v.group_off(VarGroup::Pg);
      const bool cost_diag = lr == lc && lr >= v.group_off(VarGroup::Pg) &&
                             lr < v.group_off(VarGroup::Soc);
      CHECK((voltage_block || cost_diag));
      if (voltage_block) CHECK(allowed_vblock(lr % v.nb, lc % v.nb));
    }
}
