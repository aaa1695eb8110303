#pragma once

#include <functional>
#include <string>
#include <vector>

#include "battflow/kkt.hpp"

namespace battflow {

enum class Backend { Schur, DirectLu };

Backend backend_from_string(const std::string& s);
std::string to_string(Backend b);

struct IterState {
  Vec x;       // primal variables
  Vec z;       // slacks, strictly positive
  Vec lam;     // equality multipliers
  Vec mu;      // inequality multipliers, strictly positive
  Real gamma;  // barrier parameter
  int iter = 0;
};

struct SolverOptions {
  Real tol_feas = 1e-8;
  Real tol_grad = 1e-8;
  Real tol_comp = 1e-8;
  Real tol_cost = 1e-8;
  int max_iter = 150;
  Real sigma = 0.1;        // centering factor
  Real xi_ftb = 0.99995;   // fraction-to-boundary
  Backend backend = Backend::Schur;

  bool cross_check = false;     // also solve with the other backend, record deviation
  bool check_full_kkt = false;  // verify the unreduced 4-row system each iteration

  struct IterInfo {
    int iter;
    Real gamma, feas_g, feas_h, grad, comp, cost;
    Real alpha_primal, alpha_dual;
    Real kkt_residual;   // scaled, when check_full_kkt
    Real backend_dev;    // when cross_check
    const ArrowheadSystem* system;
    const Vec* dx;
  };
  std::function<void(const IterInfo&)> iter_hook;
};

struct IterTiming {
  double func_eval_s = 0;
  double kkt_solve_s = 0;
  double step_s = 0;
};

struct Solution {
  bool converged = false;
  std::string termination;  // converged | max_iter | singular_kkt | step_collapse
  Vec x, lam, mu, z;
  Real objective = 0;
  int iterations = 0;
  Real feas_g = 0, feas_h = 0, grad = 0, comp = 0;
  Real cost_change = 0;  // |f - f_prev| / (1 + |f_prev|) at the last test
  std::vector<IterTiming> timings;
  std::vector<Real> gamma_trace;
  Index peak_factor_nnz = 0;
  Real max_kkt_residual = 0;   // when check_full_kkt
  Real max_backend_dev = 0;    // when cross_check

  double total_kkt_seconds() const;
  double total_func_eval_seconds() const;
};

/// Reduced Newton system: M_t = Lxx_t + H_t^T diag(mu/z) H_t and the
/// right-hand side N.
ReducedKkt newton_system(const Problem& p, const IterState& s, const DerivBundle& d,
                         const HessBundle& hess, const Vec& g, const Vec& h);

/// Slack/dual direction recovery from the eliminated rows.
std::pair<Vec, Vec> recover_step(const IterState& s, const Vec& h, const Vec& dx,
                                 const DerivBundle& d);

/// Fraction-to-boundary primal/dual step lengths.
std::pair<Real, Real> step_lengths(const Vec& z, const Vec& mu, const Vec& dz, const Vec& dmu,
                                   Real xi);

/// gamma' = sigma * z^T mu / N_h.
Real update_barrier(const Vec& z, const Vec& mu, Real sigma);

/// Scaled infinity-norm residual of the unreduced 4-row Newton system for a
/// candidate direction.
Real full_kkt_residual(const Problem& p, const IterState& s, const DerivBundle& d,
                       const HessBundle& hess, const Vec& g, const Vec& h, const Vec& dx,
                       const Vec& dz, const Vec& dlam, const Vec& dmu);

Solution solve(const Problem& p, const SolverOptions& opts = {});

}  // namespace battflow
