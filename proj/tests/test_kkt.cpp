#include "battflow/kkt.hpp"

#include <Eigen/Dense>

#include "battflow/solver.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace battflow;

namespace {

struct Fixture {
  Problem p;
  IterState s;
  DerivBundle d;
  HessBundle hess;
  Vec g, h;
  ReducedKkt rk;
  ArrowheadSystem sys;
};

Fixture make_fixture(const Case& c) {
  Fixture f{build_problem(c)};
  f.s.x = initial_point(f.p);
  f.g = eval_equalities(f.p, f.s.x);
  f.h = eval_inequalities(f.p, f.s.x);
  f.s.gamma = 1.0;
  f.s.z = (-f.h.array()).max(1.0);
  f.s.mu = f.s.gamma / f.s.z.array();
  f.s.lam = Vec::Zero(f.g.size());
  f.d = jac_all(f.p, f.s.x);
  f.hess = hess_lagrangian(f.p, f.s.x, f.s.lam, f.s.mu);
  f.rk = newton_system(f.p, f.s, f.d, f.hess, f.g, f.h);
  f.sys = reorder_arrowhead(f.rk, f.d, f.p);
  return f;
}

Case case9_storage(Index T, Index ny) {
  Case c = case9();
  ensure_load_series(c, T);
  if (ny > 0) add_stationary_storage(c, ny, Strategy::FirstLast);
  return c;
}

// AVBP = CONCH pattern behind the dynamic-structure figure, 5 devices x 10 steps
Case ev_pattern_case() {
  Case c = case9_storage(10, 5);
  const char* rows[5] = {"0011111100", "0001111000", "0011110000", "0000111110", "0000111000"};
  for (Index i = 0; i < 5; ++i)
    for (Index t = 0; t < 10; ++t) {
      c.avbp(i, t) = rows[i][t] - '0';
      c.conch(i, t) = c.avbp(i, t);
      c.condi(i, t) = 0;
      c.avbq(i, t) = 0;
    }
  return c;
}

}  // namespace

TEST_CASE("arrowhead un-permutes to the plain KKT stacking") {
  Fixture f = make_fixture(case9_storage(3, 2));
  const Index nx = f.p.vars.n_x(), ng = f.p.cons.n_g();

  // direct Eq-ordering assembly [[blkdiag(M), Gx^T],[Gx, 0]]
  Mat direct = Mat::Zero(nx + ng, nx + ng);
  for (Index t = 0; t < 3; ++t)
    direct.block(f.p.vars.x_off(t), f.p.vars.x_off(t), f.p.vars.nxt, f.p.vars.nxt) =
        Mat(f.rk.m_blocks[static_cast<size_t>(t)]);
  direct.block(nx, 0, ng, nx) = Mat(f.d.g_x);
  direct.block(0, nx, nx, ng) = Mat(f.d.g_x.transpose());

  Mat arrow = Mat(f.sys.assemble());
  CHECK(arrow.rows() == nx + ng);
  Mat unpermuted = Mat::Zero(nx + ng, nx + ng);
  const auto& perm = f.sys.perm_to_original;
  for (Index i = 0; i < arrow.rows(); ++i)
    for (Index j = 0; j < arrow.cols(); ++j)
      unpermuted(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]) = arrow(i, j);
  CHECK((unpermuted - direct).cwiseAbs().maxCoeff() < 1e-14);

  // rhs consistency: zeta/Gamma are the negated [N; g] in the same ordering
  Vec rhs = f.sys.assemble_rhs();
  for (Index t = 0; t < 3; ++t) {
    Vec expect = -f.rk.n_blocks[static_cast<size_t>(t)];
    CHECK((f.sys.zeta[static_cast<size_t>(t)].head(f.p.vars.nxt) - expect).lpNorm<Eigen::Infinity>() <
          1e-15);
  }
  CHECK(rhs.size() == nx + ng);
}

TEST_CASE("degenerate horizons") {
  SUBCASE("T=1 has a single block and only its own storage rows") {
    Fixture f = make_fixture(case9_storage(1, 2));
    CHECK(f.sys.T == 1);
    CHECK(f.sys.n_gs == 2);
    CHECK(f.sys.rho[0].nonZeros() == 6);  // soc, pch, pdch per device
  }
  SUBCASE("ny=0 is block diagonal with an empty border") {
    Fixture f = make_fixture(case9_storage(2, 0));
    CHECK(f.sys.n_gs == 0);
    CHECK(f.sys.gamma_rhs.size() == 0);
    SchurSolver schur(f.p);
    schur.factorize(f.sys);
    CHECK(schur.sigma_c().rows() == 0);
    auto [omega, dlam] = schur.solve(f.sys);
    CHECK(dlam.size() == 0);
    CHECK(arrowhead_residual(f.sys, omega, dlam) < 1e-9);
  }
}

TEST_CASE("schur nnz prediction: static golden counts") {
  Problem p = build_problem(case9_storage(10, 5));
  SchurPattern pat = predict_schur_nnz(p);
  CHECK(pat.total_nnz == 340);
  for (Index t = 0; t < 9; ++t) CHECK(pat.nnz_per_block[static_cast<size_t>(t)] == 40);
  CHECK(pat.nnz_per_block[9] == 25);

  // band property encoded in the predicted positions
  for (Index t = 0; t < 10; ++t)
    for (auto [r, c] : pat.positions[static_cast<size_t>(t)]) CHECK(std::abs(r - c) <= 5);
}

TEST_CASE("schur nnz prediction: dynamic EV pattern gives 202") {
  Problem p = build_problem(ev_pattern_case());
  SchurPattern pat = predict_schur_nnz(p);
  CHECK(pat.total_nnz == 202);
}

TEST_CASE("schur nnz prediction: tiny instance against brute force") {
  // n_y=1, T=2 static: S_1 has 4 entries, S_2 has 1, union is 4
  Problem p = build_problem(case9_storage(2, 1));
  SchurPattern pat = predict_schur_nnz(p);
  CHECK(pat.nnz_per_block[0] == 4);
  CHECK(pat.nnz_per_block[1] == 1);
  CHECK(pat.total_nnz == 4);
}

TEST_CASE("schur factorization matches a dense Schur oracle") {
  Fixture f = make_fixture(case9_storage(3, 2));
  SchurSolver schur(f.p);
  schur.factorize(f.sys);

  Mat oracle = Mat::Zero(f.sys.n_gs, f.sys.n_gs);
  for (Index t = 0; t < 3; ++t) {
    Mat ups = Mat(f.sys.upsilon[static_cast<size_t>(t)]);
    Mat rho = Mat(f.sys.rho[static_cast<size_t>(t)]);
    oracle -= rho * ups.fullPivLu().solve(rho.transpose());
  }
  Mat sigma = Mat(schur.sigma_c());
  CHECK((sigma - oracle).cwiseAbs().maxCoeff() <= 1e-8 * (1 + oracle.cwiseAbs().maxCoeff()));

  // sigma is symmetric
  CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <=
        1e-10 * (1 + sigma.cwiseAbs().maxCoeff()));
}

TEST_CASE("static case realizes exactly the predicted positions") {
  Fixture f = make_fixture(case9_storage(10, 5));
  SchurSolver schur(f.p);
  schur.factorize(f.sys);
  CHECK(schur.static_structure());
  CHECK(schur.sigma_c().nonZeros() == 340);

  // band property on realized values
  Mat sigma = Mat(schur.sigma_c());
  for (Index i = 0; i < sigma.rows(); ++i)
    for (Index j = 0; j < sigma.cols(); ++j)
      if (std::abs(i - j) > 5) CHECK(sigma(i, j) == 0.0);
}

TEST_CASE("dynamic EV case realizes exactly 202 stored entries") {
  Fixture f = make_fixture(ev_pattern_case());
  SchurSolver schur(f.p);
  schur.factorize(f.sys);
  CHECK_FALSE(schur.static_structure());
  CHECK(schur.sigma_c().nonZeros() == 202);
  auto [omega, dlam] = schur.solve(f.sys);
  CHECK(arrowhead_residual(f.sys, omega, dlam) < 1e-9);
}

TEST_CASE("one AMD ordering per solve in static mode, per pattern change otherwise") {
  Fixture f = make_fixture(case9_storage(6, 3));
  SchurSolver schur(f.p);
  schur.factorize(f.sys);
  CHECK(schur.static_structure());
  CHECK(schur.amd_calls_in_last_factorize() == 1);

  Fixture g = make_fixture(ev_pattern_case());
  SchurSolver dyn(g.p);
  dyn.factorize(g.sys);
  CHECK_FALSE(dyn.static_structure());
  CHECK(dyn.amd_calls_in_last_factorize() > 1);
  CHECK(dyn.amd_calls_in_last_factorize() <= 10);
}

TEST_CASE("schur and direct backends solve the same system") {
  Fixture f = make_fixture(case9_storage(3, 2));
  SchurSolver schur(f.p);
  schur.factorize(f.sys);
  auto [omega_s, dlam_s] = schur.solve(f.sys);
  CHECK(arrowhead_residual(f.sys, omega_s, dlam_s) < 1e-9);

  DirectSolver direct;
  direct.factorize(f.sys);
  auto [omega_d, dlam_d] = direct.solve(f.sys);
  CHECK(arrowhead_residual(f.sys, omega_d, dlam_d) < 1e-9);

  for (Index t = 0; t < 3; ++t) {
    const Vec& a = omega_s[static_cast<size_t>(t)];
    const Vec& b = omega_d[static_cast<size_t>(t)];
    CHECK((a - b).lpNorm<Eigen::Infinity>() <= 1e-8 * (1 + b.lpNorm<Eigen::Infinity>()));
  }
  CHECK((dlam_s - dlam_d).lpNorm<Eigen::Infinity>() <=
        1e-8 * (1 + dlam_d.lpNorm<Eigen::Infinity>()));

  // memory ledger: both sides accounted for
  CHECK(schur.ledger().peak_live > 0);
  CHECK(direct.ledger().peak_live > 0);
  CHECK(schur.ledger().block_factors > 0);
  CHECK(schur.ledger().schur_factor > 0);
}

TEST_CASE("direct solver on a diagonal system returns the rhs") {
  Fixture f = make_fixture(case9_storage(1, 0));
  // overwrite the single block with the identity
  ArrowheadSystem sys = f.sys;
  const Index n = sys.n_ups[0];
  sys.upsilon[0] = spdiag(Vec::Ones(n));
  sys.zeta[0] = Vec::LinSpaced(n, 1, n);
  DirectSolver direct;
  direct.factorize(sys);
  auto [omega, dlam] = direct.solve(sys);
  CHECK((omega[0] - sys.zeta[0]).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("AMD ordering never loses to natural order on a real Upsilon block") {
  Fixture f = make_fixture(case9_storage(1, 2));
  const SpMat& ups = f.sys.upsilon[0];
  Mat pattern = Mat(ups).cwiseAbs();
  Permutation amd = amd_order(ups);
  std::vector<Index> natural(static_cast<size_t>(ups.rows()));
  for (Index i = 0; i < ups.rows(); ++i) natural[static_cast<size_t>(i)] = i;
  const long amd_fill = battflow::testing::boolean_lu_fill(pattern, battflow::testing::order_from_perm(amd));
  const long nat_fill = battflow::testing::boolean_lu_fill(pattern, natural);
  CHECK(amd_fill <= nat_fill);
}

TEST_CASE("sigma_c solves identically through LDL^T and LU") {
  Fixture f = make_fixture(case9_storage(3, 1));
  SchurSolver schur(f.p);
  schur.factorize(f.sys);
  const SpMat& sigma = schur.sigma_c();
  REQUIRE(sigma.rows() == 3);

  Vec b(3);
  b << 0.3, -1.2, 0.7;
  Vec x_ldl = ldl_solve(ldl_factor(sigma), b);
  Vec x_lu = lu_solve(lu_factor(sigma), b);
  CHECK((x_ldl - x_lu).lpNorm<Eigen::Infinity>() <= 1e-9 * (1 + x_lu.lpNorm<Eigen::Infinity>()));
}
