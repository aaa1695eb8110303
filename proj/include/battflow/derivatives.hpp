#pragma once

#include <functional>
#include <vector>

#include "battflow/problem.hpp"
#include "battflow/types.hpp"

namespace battflow {

/// First derivatives of objective and constraints at a point, stacked and as
/// the per-time blocks the arrowhead reordering consumes.
struct DerivBundle {
  Vec f_x;    // N_x
  SpMat g_x;  // N_g x N_x
  SpMat h_x;  // N_h x N_x

  std::vector<SpMat> gt;    // per t: nonlinear equality rows wrt x_t (2nb x nxt)
  std::vector<SpMat> gl;    // per t: linear equality rows wrt x_t (ngl_t x nxt)
  std::vector<SpMat> gs_d;  // per t: storage rows of time t wrt x_t (ny x nxt)
  std::vector<SpMat> gs_c;  // per t<T-1: storage rows of time t+1 wrt x_t (ny x nxt)
  std::vector<SpMat> ht;    // per t: line-flow rows wrt x_t (nhn_t x nxt)
  std::vector<SpMat> hb;    // per t: box rows wrt x_t (nhl_t x nxt)
};

/// Lagrangian Hessian f_XX + G_XX(lambda) + H_XX(mu); block diagonal in time.
struct HessBundle {
  SpMat lxx;                 // N_x x N_x, both triangles stored
  std::vector<SpMat> lxx_t;  // per-t diagonal blocks (nxt x nxt)
};

/// Complex bus-injection Jacobians dS/dTheta and dS/dVm at voltages v.
void jac_power_balance(const Admittances& adm, const CVec& v, SpCMat& ds_dth, SpCMat& ds_dvm);

/// Complex line-flow Jacobians for the from and to line ends, restricted to
/// the given branch rows.
struct LineFlowJac {
  CVec sf, st;  // flows on the selected rows
  SpCMat dsf_dth, dsf_dvm, dst_dth, dst_dvm;  // rows x nb
};
LineFlowJac jac_line_flow(const Admittances& adm, const CVec& v,
                          const std::vector<Index>& rows);

DerivBundle jac_all(const Problem& p, const Vec& x);

HessBundle hess_lagrangian(const Problem& p, const Vec& x, const Vec& lam, const Vec& mu);

/// Dense central-difference Jacobian with componentwise step
/// h_i = step_scale * max(1, |x_i|).
Mat fd_jacobian(const std::function<Vec(const Vec&)>& fun, const Vec& x,
                Real step_scale = 1e-6);

}  // namespace battflow
