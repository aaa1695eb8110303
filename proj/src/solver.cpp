#include "battflow/solver.hpp"

#include <chrono>
#include <cmath>

namespace battflow {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

Backend backend_from_string(const std::string& s) {
  if (s == "schur") return Backend::Schur;
  if (s == "direct-lu") return Backend::DirectLu;
  throw std::invalid_argument("unknown backend: " + s);
}

std::string to_string(Backend b) { return b == Backend::Schur ? "schur" : "direct-lu"; }

double Solution::total_kkt_seconds() const {
  double s = 0;
  for (const auto& t : timings) s += t.kkt_solve_s;
  return s;
}

double Solution::total_func_eval_seconds() const {
  double s = 0;
  for (const auto& t : timings) s += t.func_eval_s;
  return s;
}

ReducedKkt newton_system(const Problem& p, const IterState& s, const DerivBundle& d,
                         const HessBundle& hess, const Vec& g, const Vec& h) {
  const VarLayout& v = p.vars;
  const ConLayout& cl = p.cons;
  const Index nlim2 = cl.nhn_t;

  ReducedKkt rk;
  rk.g_resid = g;
  rk.m_blocks.resize(static_cast<size_t>(v.T));
  rk.n_blocks.resize(static_cast<size_t>(v.T));

  const Vec zinv_mu = s.mu.array() / s.z.array();

  // N = f_X + G_X' lam + H_X' mu + H_X' zinv (gamma e + mu h)
  Vec barrier_rhs = (s.gamma + s.mu.array() * h.array()) / s.z.array();
  Vec n_full = d.f_x + d.g_x.transpose() * s.lam + d.h_x.transpose() * s.mu +
               d.h_x.transpose() * barrier_rhs;

  for (Index t = 0; t < v.T; ++t) {
    const SpMat& ht = d.ht[static_cast<size_t>(t)];
    const SpMat& hb = d.hb[static_cast<size_t>(t)];
    Vec dt_line(nlim2), dt_box(cl.nhl[static_cast<size_t>(t)]);
    for (Index r = 0; r < nlim2; ++r) dt_line[r] = zinv_mu[cl.ht_row(t, r)];
    for (Index r = 0; r < dt_box.size(); ++r) dt_box[r] = zinv_mu[cl.hl_row(t, r)];

    SpMat m = hess.lxx_t[static_cast<size_t>(t)];
    if (nlim2 > 0) m = SpMat(m + SpMat(ht.transpose() * SpMat(dt_line.asDiagonal() * ht)));
    if (dt_box.size() > 0) m = SpMat(m + SpMat(hb.transpose() * SpMat(dt_box.asDiagonal() * hb)));
    m.makeCompressed();
    rk.m_blocks[static_cast<size_t>(t)] = std::move(m);
    rk.n_blocks[static_cast<size_t>(t)] = n_full.segment(v.x_off(t), v.nxt);
  }
  return rk;
}

std::pair<Vec, Vec> recover_step(const IterState& s, const Vec& h, const Vec& dx,
                                 const DerivBundle& d) {
  Vec dz = -h - s.z - d.h_x * dx;
  Vec dmu = -s.mu.array() + (s.gamma - s.mu.array() * dz.array()) / s.z.array();
  return {dz, dmu};
}

std::pair<Real, Real> step_lengths(const Vec& z, const Vec& mu, const Vec& dz, const Vec& dmu,
                                   Real xi) {
  Real ap = 1, ad = 1;
  for (Index i = 0; i < z.size(); ++i) {
    if (dz[i] < 0) ap = std::min(ap, -xi * z[i] / dz[i]);
    if (dmu[i] < 0) ad = std::min(ad, -xi * mu[i] / dmu[i]);
  }
  return {ap, ad};
}

Real update_barrier(const Vec& z, const Vec& mu, Real sigma) {
  if (z.size() == 0) return 0;
  return sigma * z.dot(mu) / static_cast<Real>(z.size());
}

Real full_kkt_residual(const Problem& p, const IterState& s, const DerivBundle& d,
                       const HessBundle& hess, const Vec& g, const Vec& h, const Vec& dx,
                       const Vec& dz, const Vec& dlam, const Vec& dmu) {
  (void)p;
  auto scaled = [](const Vec& r, std::initializer_list<Real> mags) {
    Real scale = 1;
    for (Real m : mags) scale = std::max(scale, m);
    return r.lpNorm<Eigen::Infinity>() / scale;
  };

  Vec lx = d.f_x + d.g_x.transpose() * s.lam + d.h_x.transpose() * s.mu;
  Vec r1 = hess.lxx * dx + d.g_x.transpose() * dlam + d.h_x.transpose() * dmu + lx;
  Vec r2 = s.mu.array() * dz.array() + s.z.array() * dmu.array() +
           (s.z.array() * s.mu.array() - s.gamma);
  Vec r3 = d.g_x * dx + g;
  Vec r4 = d.h_x * dx + dz + h + s.z;

  const Real m1 = std::max({Vec(hess.lxx * dx).lpNorm<Eigen::Infinity>(),
                            Vec(d.g_x.transpose() * dlam).lpNorm<Eigen::Infinity>(),
                            Vec(d.h_x.transpose() * dmu).lpNorm<Eigen::Infinity>(),
                            lx.lpNorm<Eigen::Infinity>()});
  const Real m2 = std::max((s.mu.array() * dz.array()).abs().maxCoeff(),
                           (s.z.array() * dmu.array()).abs().maxCoeff());
  const Real m3 = std::max(Vec(d.g_x * dx).lpNorm<Eigen::Infinity>(),
                           g.lpNorm<Eigen::Infinity>());
  const Real m4 = std::max({Vec(d.h_x * dx).lpNorm<Eigen::Infinity>(),
                            dz.lpNorm<Eigen::Infinity>(),
                            Vec(h + s.z).lpNorm<Eigen::Infinity>()});
  return std::max({scaled(r1, {m1}), scaled(r2, {m2}), scaled(r3, {m3}), scaled(r4, {m4})});
}

namespace {

struct Directions {
  Vec dx, dlam;
};

Directions split_direction(const ArrowheadSystem& sys, const Problem& p,
                           const std::vector<Vec>& omega, const Vec& dlam_s) {
  const VarLayout& v = p.vars;
  const ConLayout& cl = p.cons;
  Directions dir;
  dir.dx.resize(v.n_x());
  dir.dlam.resize(cl.n_g());
  for (Index t = 0; t < v.T; ++t) {
    const Vec& w = omega[static_cast<size_t>(t)];
    dir.dx.segment(v.x_off(t), v.nxt) = w.head(v.nxt);
    dir.dlam.segment(cl.gt_row(t, 0), cl.ngn_t) = w.segment(v.nxt, cl.ngn_t);
    dir.dlam.segment(cl.gl_row(t, 0), cl.ngl[static_cast<size_t>(t)]) =
        w.tail(cl.ngl[static_cast<size_t>(t)]);
  }
  if (sys.n_gs > 0) dir.dlam.segment(cl.gs_base(), sys.n_gs) = dlam_s;
  return dir;
}

}  // namespace

Solution solve(const Problem& p, const SolverOptions& opts) {
  const VarLayout& v = p.vars;
  Solution out;

  IterState s;
  s.x = initial_point(p);
  Vec g = eval_equalities(p, s.x);
  Vec h = eval_inequalities(p, s.x);
  const Index nh = static_cast<Index>(h.size());
  // Flat start is strictly interior for every box row, so the exact slack is
  // admissible and keeps thin rows on their own scale; rows violated at the
  // start fall back to the unit slack. The absolute floor keeps duals finite
  // on whisker-thin rows.
  s.gamma = 1.0;
  s.z.resize(nh);
  for (Index i = 0; i < nh; ++i) s.z[i] = h[i] < 0 ? std::max(-h[i], 1e-6) : 1.0;
  s.mu = s.gamma / s.z.array();
  s.lam = Vec::Zero(g.size());

  SchurSolver schur(p);
  DirectSolver direct;

  Real prev_cost = kInf;
  out.termination = "max_iter";

  for (s.iter = 0; s.iter < opts.max_iter; ++s.iter) {
    auto t_func = Clock::now();
    DerivBundle d = jac_all(p, s.x);
    const Real cost = eval_objective(p, s.x);

    // convergence tests
    Vec grad_l = d.f_x + d.g_x.transpose() * s.lam + d.h_x.transpose() * s.mu;
    Real mult_norm = 0;
    if (s.lam.size() > 0) mult_norm = s.lam.lpNorm<Eigen::Infinity>();
    if (s.mu.size() > 0) mult_norm = std::max(mult_norm, s.mu.lpNorm<Eigen::Infinity>());
    out.feas_g = g.size() > 0
                     ? g.lpNorm<Eigen::Infinity>() / (1 + s.x.lpNorm<Eigen::Infinity>())
                     : 0;
    out.feas_h = nh > 0 ? h.maxCoeff() : 0;
    out.grad = grad_l.lpNorm<Eigen::Infinity>() / (1 + mult_norm);
    out.comp = nh > 0 ? s.z.dot(s.mu) / static_cast<Real>(nh) : 0;
    out.cost_change = std::abs(cost - prev_cost) / (1 + std::abs(prev_cost));
    prev_cost = cost;

    if (out.feas_g <= opts.tol_feas && out.feas_h <= opts.tol_feas && out.grad <= opts.tol_grad &&
        out.comp <= opts.tol_comp) {
      out.converged = true;
      out.termination = "converged";
      break;
    }

    HessBundle hess = hess_lagrangian(p, s.x, s.lam, s.mu);
    ReducedKkt rk = newton_system(p, s, d, hess, g, h);
    ArrowheadSystem sys = reorder_arrowhead(rk, d, p);
    IterTiming timing;
    timing.func_eval_s = seconds_since(t_func);

    auto t_kkt = Clock::now();
    std::vector<Vec> omega;
    Vec dlam_s;
    Real backend_dev = 0;
    bool solved = false;
    for (int attempt = 0; attempt < 2 && !solved; ++attempt) {
      try {
        if (opts.backend == Backend::Schur) {
          schur.factorize(sys);
          std::tie(omega, dlam_s) = schur.solve(sys);
        } else {
          direct.factorize(sys);
          std::tie(omega, dlam_s) = direct.solve(sys);
        }
        solved = true;
      } catch (const SingularMatrixError&) {
        if (attempt == 1) {
          out.termination = "singular_kkt";
          break;
        }
        // one retry with diagonal regularization on M
        for (Index t = 0; t < v.T; ++t) {
          SpMat reg = spdiag(Vec::Constant(v.nxt, 1e-10));
          rk.m_blocks[static_cast<size_t>(t)] =
              SpMat(rk.m_blocks[static_cast<size_t>(t)] + reg);
        }
        sys = reorder_arrowhead(rk, d, p);
      }
    }
    if (!solved) break;

    Directions dir = split_direction(sys, p, omega, dlam_s);
    if (opts.cross_check) {
      if (opts.backend == Backend::Schur) {
        direct.factorize(sys);
      } else {
        schur.factorize(sys);
      }
      auto [omega2, dlam2] =
          opts.backend == Backend::Schur ? direct.solve(sys) : schur.solve(sys);
      Directions other = split_direction(sys, p, omega2, dlam2);
      Vec diff(dir.dx.size() + dir.dlam.size());
      diff << dir.dx - other.dx, dir.dlam - other.dlam;
      Vec ref(other.dx.size() + other.dlam.size());
      ref << other.dx, other.dlam;
      backend_dev = diff.lpNorm<Eigen::Infinity>() / (1 + ref.lpNorm<Eigen::Infinity>());
      out.max_backend_dev = std::max(out.max_backend_dev, backend_dev);
    }
    timing.kkt_solve_s = seconds_since(t_kkt);

    auto t_step = Clock::now();
    auto [dz, dmu] = recover_step(s, h, dir.dx, d);

    Real kkt_resid = 0;
    if (opts.check_full_kkt) {
      kkt_resid = full_kkt_residual(p, s, d, hess, g, h, dir.dx, dz, dir.dlam, dmu);
      out.max_kkt_residual = std::max(out.max_kkt_residual, kkt_resid);
    }

    auto [ap, ad] = step_lengths(s.z, s.mu, dz, dmu, opts.xi_ftb);
    if (std::max(ap, ad) < 1e-12) {
      out.termination = "step_collapse";
      break;
    }

    s.x += ap * dir.dx;
    s.z += ap * dz;
    s.lam += ad * dir.dlam;
    s.mu += ad * dmu;
    g = eval_equalities(p, s.x);
    h = eval_inequalities(p, s.x);
    s.gamma = update_barrier(s.z, s.mu, opts.sigma);
    timing.step_s = seconds_since(t_step);

    out.timings.push_back(timing);
    out.gamma_trace.push_back(s.gamma);

    if (opts.iter_hook) {
      SolverOptions::IterInfo info{};
      info.iter = s.iter;
      info.gamma = s.gamma;
      info.feas_g = out.feas_g;
      info.feas_h = out.feas_h;
      info.grad = out.grad;
      info.comp = out.comp;
      info.cost = cost;
      info.alpha_primal = ap;
      info.alpha_dual = ad;
      info.kkt_residual = kkt_resid;
      info.backend_dev = backend_dev;
      info.system = &sys;
      info.dx = &dir.dx;
      opts.iter_hook(info);
    }
  }

  out.x = s.x;
  out.z = s.z;
  out.lam = s.lam;
  out.mu = s.mu;
  out.objective = eval_objective(p, s.x);
  out.iterations = s.iter;
  out.peak_factor_nnz = std::max(schur.ledger().peak_live, direct.ledger().peak_live);
  return out;
}

}  // namespace battflow
