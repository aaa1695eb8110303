#include "battflow/network.hpp"

#include <cmath>
#include <unordered_map>

namespace battflow {

Admittances build_admittances(const Case& c) {
  const Index nb = c.n_bus(), nl = c.n_branch();
  std::unordered_map<Real, Index> row_of;
  for (Index i = 0; i < nb; ++i) row_of.emplace(c.bus(i, buscol::ID), i);

  std::vector<CTriplet> yf, yt, ysh;
  std::vector<Triplet> cf, ct;
  for (Index l = 0; l < nl; ++l) {
    if (c.branch(l, brcol::STATUS) == 0) continue;
    const Index f = row_of.at(c.branch(l, brcol::FROM));
    const Index t = row_of.at(c.branch(l, brcol::TO));
    const Real r = c.branch(l, brcol::R), x = c.branch(l, brcol::X);
    if (r == 0 && x == 0)
      throw CaseError("BRANCH", l, brcol::R, "in-service branch with zero impedance");
    const Complex ys = Complex(1) / Complex(r, x);
    const Complex bc(0, c.branch(l, brcol::B) / 2);
    Real tap = c.branch(l, brcol::RATIO);
    if (tap == 0) tap = 1;
    const Real shift = c.branch(l, brcol::ANGLE) * M_PI / 180.0;
    const Complex tps = tap * std::exp(Complex(0, shift));

    const Complex yff = (ys + bc) / (tap * tap);
    const Complex yft = -ys / std::conj(tps);
    const Complex ytf = -ys / tps;
    const Complex ytt = ys + bc;

    yf.emplace_back(l, f, yff);
    yf.emplace_back(l, t, yft);
    yt.emplace_back(l, f, ytf);
    yt.emplace_back(l, t, ytt);
    cf.emplace_back(l, f, 1.0);
    ct.emplace_back(l, t, 1.0);
  }
  for (Index i = 0; i < nb; ++i) {
    const Complex sh(c.bus(i, buscol::GS) / c.base_mva, c.bus(i, buscol::BS) / c.base_mva);
    if (sh != Complex(0)) ysh.emplace_back(i, i, sh);
  }

  Admittances adm;
  adm.yf.resize(nl, nb);
  adm.yf.setFromTriplets(yf.begin(), yf.end());
  adm.yt.resize(nl, nb);
  adm.yt.setFromTriplets(yt.begin(), yt.end());
  adm.cf.resize(nl, nb);
  adm.cf.setFromTriplets(cf.begin(), cf.end());
  adm.ct.resize(nl, nb);
  adm.ct.setFromTriplets(ct.begin(), ct.end());
  SpCMat shunt(nb, nb);
  shunt.setFromTriplets(ysh.begin(), ysh.end());
  adm.ybus = SpCMat(adm.cf.cast<Complex>().transpose() * adm.yf) +
             SpCMat(adm.ct.cast<Complex>().transpose() * adm.yt) + shunt;
  adm.ybus.makeCompressed();
  return adm;
}

CVec bus_injections(const Admittances& adm, const CVec& v) {
  if (v.size() != adm.ybus.rows())
    throw std::invalid_argument("bus_injections: voltage length mismatch");
  return v.array() * (adm.ybus * v).array().conjugate();
}

std::pair<CVec, CVec> line_flows(const Admittances& adm, const CVec& v) {
  if (v.size() != adm.yf.cols()) throw std::invalid_argument("line_flows: voltage length mismatch");
  CVec vf = adm.cf.cast<Complex>() * v;
  CVec vt = adm.ct.cast<Complex>() * v;
  CVec sf = vf.array() * (adm.yf * v).array().conjugate();
  CVec st = vt.array() * (adm.yt * v).array().conjugate();
  return {sf, st};
}

Connectivity3d build_connectivity3d(const Case& c) {
  const Index nb = c.n_bus(), ng = c.n_gen(), ny = c.n_batt(), T = c.horizon();
  std::unordered_map<Real, Index> row_of;
  for (Index i = 0; i < nb; ++i) row_of.emplace(c.bus(i, buscol::ID), i);

  Connectivity3d conn;
  conn.cg.reserve(T);
  conn.cch.reserve(T);
  conn.cdch.reserve(T);
  conn.cs.reserve(T);
  for (Index t = 0; t < T; ++t) {
    std::vector<Triplet> g, ch, dch, s;
    for (Index k = 0; k < ng; ++k)
      if (c.gen(k, gencol::STATUS) != 0 && c.avg(k, t) == 1)
        g.emplace_back(row_of.at(c.gen(k, gencol::BUS)), k, 1.0);
    for (Index k = 0; k < ny; ++k) {
      const Index b = row_of.at(c.batt(k, battcol::BUS));
      if (c.avbp(k, t) == 1 && c.conch(k, t) == 1) ch.emplace_back(b, k, 1.0);
      if (c.avbp(k, t) == 1 && c.condi(k, t) == 1) dch.emplace_back(b, k, 1.0);
      if (c.avbp(k, t) == 1 && c.avbq(k, t) == 1) s.emplace_back(b, k, 1.0);
    }
    SpMat m(nb, ng);
    m.setFromTriplets(g.begin(), g.end());
    conn.cg.push_back(std::move(m));
    SpMat mch(nb, ny);
    mch.setFromTriplets(ch.begin(), ch.end());
    conn.cch.push_back(std::move(mch));
    SpMat mdch(nb, ny);
    mdch.setFromTriplets(dch.begin(), dch.end());
    conn.cdch.push_back(std::move(mdch));
    SpMat ms(nb, ny);
    ms.setFromTriplets(s.begin(), s.end());
    conn.cs.push_back(std::move(ms));
  }
  return conn;
}

}  // namespace battflow
