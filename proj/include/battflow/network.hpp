#pragma once

#include <vector>

#include "battflow/caseio.hpp"
#include "battflow/types.hpp"

namespace battflow {

/// Bus/line admittances and line-end incidence, per-unit on baseMVA.
struct Admittances {
  SpCMat ybus;  // n_b x n_b
  SpCMat yf;    // n_l x n_b  (in-service branches keep their row, zero otherwise)
  SpCMat yt;    // n_l x n_b
  SpMat cf;     // n_l x n_b incidence, one 1 per in-service row
  SpMat ct;
};

Admittances build_admittances(const Case& c);

/// S = diag(V) conj(Ybus V).
CVec bus_injections(const Admittances& adm, const CVec& v);

/// (S^fr, S^to) with S^fr = diag(Cf V) conj(Yf V).
std::pair<CVec, CVec> line_flows(const Admittances& adm, const CVec& v);

/// Time-indexed connectivity: column k of cch[t] maps device k's charging
/// draw to its bus when charge is active at t; analogous for the others.
struct Connectivity3d {
  std::vector<SpMat> cg;    // n_b x n_g per t
  std::vector<SpMat> cch;   // n_b x n_y per t
  std::vector<SpMat> cdch;  // n_b x n_y per t
  std::vector<SpMat> cs;    // n_b x n_y per t
};

Connectivity3d build_connectivity3d(const Case& c);

}  // namespace battflow
