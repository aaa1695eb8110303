#include "battflow/derivatives.hpp"

#include <cmath>

namespace battflow {

namespace {

const Complex kJ(0, 1);

std::pair<SpMat, SpMat> split_real_imag(const SpCMat& m) {
  std::vector<Triplet> re, im;
  re.reserve(static_cast<size_t>(m.nonZeros()));
  im.reserve(static_cast<size_t>(m.nonZeros()));
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SpCMat::InnerIterator it(m, k); it; ++it) {
      re.emplace_back(static_cast<Index>(it.row()), static_cast<Index>(it.col()), it.value().real());
      im.emplace_back(static_cast<Index>(it.row()), static_cast<Index>(it.col()), it.value().imag());
    }
  SpMat mre(m.rows(), m.cols()), mim(m.rows(), m.cols());
  mre.setFromTriplets(re.begin(), re.end());
  mim.setFromTriplets(im.begin(), im.end());
  return {mre, mim};
}

void append_block(std::vector<Triplet>& out, const SpMat& block, Index row0, Index col0,
                  Real scale = 1.0) {
  for (Index k = 0; k < block.outerSize(); ++k)
    for (SpMat::InnerIterator it(block, k); it; ++it)
      out.emplace_back(row0 + static_cast<Index>(it.row()), col0 + static_cast<Index>(it.col()),
                       scale * it.value());
}

// Row-restricted line matrices (limited, in-service branches only).
struct LineSlice {
  SpCMat yf, yt;
  SpMat cf, ct;
};

LineSlice restrict_lines(const Admittances& adm, const std::vector<Index>& rows) {
  const Index nb = static_cast<Index>(adm.yf.cols());
  const Index nr = static_cast<Index>(rows.size());
  std::vector<Index> pick(static_cast<size_t>(adm.yf.rows()), -1);
  for (Index k = 0; k < nr; ++k) pick[static_cast<size_t>(rows[static_cast<size_t>(k)])] = k;

  std::vector<CTriplet> yf, yt;
  std::vector<Triplet> cf, ct;
  auto gather_c = [&](const SpCMat& src, std::vector<CTriplet>& dst) {
    for (Index c = 0; c < src.outerSize(); ++c)
      for (SpCMat::InnerIterator it(src, c); it; ++it)
        if (pick[static_cast<size_t>(it.row())] >= 0)
          dst.emplace_back(pick[static_cast<size_t>(it.row())], static_cast<Index>(it.col()),
                           it.value());
  };
  auto gather_r = [&](const SpMat& src, std::vector<Triplet>& dst) {
    for (Index c = 0; c < src.outerSize(); ++c)
      for (SpMat::InnerIterator it(src, c); it; ++it)
        if (pick[static_cast<size_t>(it.row())] >= 0)
          dst.emplace_back(pick[static_cast<size_t>(it.row())], static_cast<Index>(it.col()),
                           it.value());
  };
  gather_c(adm.yf, yf);
  gather_c(adm.yt, yt);
  gather_r(adm.cf, cf);
  gather_r(adm.ct, ct);

  LineSlice s;
  s.yf.resize(nr, nb);
  s.yf.setFromTriplets(yf.begin(), yf.end());
  s.yt.resize(nr, nb);
  s.yt.setFromTriplets(yt.begin(), yt.end());
  s.cf.resize(nr, nb);
  s.cf.setFromTriplets(cf.begin(), cf.end());
  s.ct.resize(nr, nb);
  s.ct.setFromTriplets(ct.begin(), ct.end());
  return s;
}

// Hessian of u^T S^bus for a complex weight u, split over (theta, |V|).
struct BusHess {
  SpCMat aa, av, va, vv;
};

BusHess d2s_bus(const SpCMat& ybus, const CVec& v, const CVec& u) {
  const CVec ibus = ybus * v;
  const CVec vmag_inv = v.cwiseAbs().cwiseInverse().cast<Complex>();

  SpCMat diag_v = spdiag(v);
  SpCMat diag_u = spdiag(u);
  SpCMat a = spdiag(CVec(u.array() * v.array()));
  SpCMat b = ybus * diag_v;
  SpCMat cmat = a * b.conjugate();
  SpCMat d = SpCMat(ybus.adjoint()) * diag_v;
  SpCMat e = spdiag(CVec(v.conjugate())) * SpCMat(d * diag_u - spdiag(CVec(d * u)));
  SpCMat f = cmat - a * spdiag(CVec(ibus.conjugate()));
  SpCMat g = spdiag(vmag_inv);

  BusHess h;
  h.aa = e + f;
  h.va = kJ * SpCMat(g * SpCMat(e - f));
  h.av = SpCMat(h.va.transpose());
  h.vv = g * SpCMat(SpCMat(cmat + SpCMat(cmat.transpose())) * g);
  return h;
}

// Hessian of w^T S^line for one line end.
BusHess d2s_branch(const SpCMat& cbr, const SpCMat& ybr, const CVec& v, const CVec& w) {
  const CVec vmag_inv = v.cwiseAbs().cwiseInverse().cast<Complex>();
  SpCMat diag_v = spdiag(v);
  SpCMat a = SpCMat(ybr.adjoint()) * SpCMat(spdiag(w) * cbr);
  SpCMat b = spdiag(CVec(v.conjugate())) * SpCMat(a * diag_v);
  SpCMat bt = SpCMat(b.transpose());
  SpCMat d = spdiag(CVec((a * v).array() * v.conjugate().array()));
  SpCMat e = spdiag(CVec((SpCMat(a.transpose()) * v.conjugate()).array() * v.array()));
  SpCMat f = b + bt;
  SpCMat g = spdiag(vmag_inv);

  BusHess h;
  h.aa = f - d - e;
  h.va = kJ * SpCMat(g * SpCMat(b - bt - d + e));
  h.av = SpCMat(h.va.transpose());
  h.vv = g * SpCMat(f * g);
  return h;
}

}  // namespace

void jac_power_balance(const Admittances& adm, const CVec& v, SpCMat& ds_dth, SpCMat& ds_dvm) {
  if (v.size() != adm.ybus.rows())
    throw std::invalid_argument("jac_power_balance: voltage length mismatch");
  for (Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) == 0)
      throw std::invalid_argument("jac_power_balance: zero voltage magnitude");

  const CVec ibus = adm.ybus * v;
  const CVec f = v.array() / v.cwiseAbs().array().cast<Complex>();
  SpCMat conj_y = adm.ybus.conjugate();
  SpCMat a = conj_y * spdiag(CVec(v.conjugate()));
  ds_dth = kJ * SpCMat(spdiag(v) * SpCMat(spdiag(CVec(ibus.conjugate())) - a));
  ds_dvm = SpCMat(spdiag(CVec(f.array() * ibus.conjugate().array()))) +
           SpCMat(spdiag(v) * SpCMat(conj_y * spdiag(CVec(f.conjugate()))));
}

LineFlowJac jac_line_flow(const Admittances& adm, const CVec& v,
                          const std::vector<Index>& rows) {
  const Index nb = static_cast<Index>(v.size());
  for (Index i = 0; i < nb; ++i)
    if (std::abs(v[i]) == 0)
      throw std::invalid_argument("jac_line_flow: zero voltage magnitude");

  LineSlice sl = restrict_lines(adm, rows);
  const CVec f = v.array() / v.cwiseAbs().array().cast<Complex>();
  SpCMat cfc = sl.cf.cast<Complex>();
  SpCMat ctc = sl.ct.cast<Complex>();

  LineFlowJac out;
  auto one_end = [&](const SpCMat& c, const SpCMat& y, CVec& s, SpCMat& dth, SpCMat& dvm) {
    const CVec il = y * v;
    const CVec vl = c * v;
    s = vl.array() * il.array().conjugate();
    SpCMat diag_il_conj = spdiag(CVec(il.conjugate()));
    SpCMat diag_vl = spdiag(vl);
    SpCMat yconj = y.conjugate();
    dth = kJ * SpCMat(SpCMat(diag_il_conj * SpCMat(c * spdiag(v))) -
                      SpCMat(diag_vl * SpCMat(yconj * spdiag(CVec(v.conjugate())))));
    dvm = SpCMat(diag_il_conj * SpCMat(c * spdiag(f))) +
          SpCMat(diag_vl * SpCMat(yconj * spdiag(CVec(f.conjugate()))));
  };
  one_end(cfc, sl.yf, out.sf, out.dsf_dth, out.dsf_dvm);
  one_end(ctc, sl.yt, out.st, out.dst_dth, out.dst_dvm);
  return out;
}

DerivBundle jac_all(const Problem& p, const Vec& x) {
  const VarLayout& v = p.vars;
  const ConLayout& cl = p.cons;
  const Case& c = p.net;
  const Real dt = c.dt_hours;
  const Index nb = v.nb, ny = v.ny, T = v.T;
  const Index nlim = static_cast<Index>(p.limited_lines.size());

  DerivBundle d;
  d.f_x = objective_gradient(p, x);
  d.gt.resize(static_cast<size_t>(T));
  d.gl.resize(static_cast<size_t>(T));
  d.gs_d.resize(static_cast<size_t>(T));
  d.gs_c.resize(static_cast<size_t>(T));
  d.ht.resize(static_cast<size_t>(T));
  d.hb.resize(static_cast<size_t>(T));

  std::vector<Triplet> gx_trips, hx_trips;

  for (Index t = 0; t < T; ++t) {
    const CVec volt = voltages_at(p, x, t);

    // power-balance block: [Re dS, Im dS] plus the constant connectivity columns
    SpCMat ds_dth, ds_dvm;
    jac_power_balance(p.adm, volt, ds_dth, ds_dvm);
    auto [re_th, im_th] = split_real_imag(ds_dth);
    auto [re_vm, im_vm] = split_real_imag(ds_dvm);

    std::vector<Triplet> gt_trips;
    append_block(gt_trips, re_th, 0, v.group_off(VarGroup::Theta));
    append_block(gt_trips, re_vm, 0, v.group_off(VarGroup::Vm));
    append_block(gt_trips, im_th, nb, v.group_off(VarGroup::Theta));
    append_block(gt_trips, im_vm, nb, v.group_off(VarGroup::Vm));
    const auto& cg = p.conn.cg[static_cast<size_t>(t)];
    for (Index k = 0; k < cg.outerSize(); ++k)
      for (SpMat::InnerIterator it(cg, k); it; ++it) {
        gt_trips.emplace_back(it.row(), v.local(VarGroup::Pg, it.col()), -1.0);
        gt_trips.emplace_back(nb + it.row(), v.local(VarGroup::Qg, it.col()), -1.0);
      }
    const auto& cch = p.conn.cch[static_cast<size_t>(t)];
    for (Index k = 0; k < cch.outerSize(); ++k)
      for (SpMat::InnerIterator it(cch, k); it; ++it)
        gt_trips.emplace_back(it.row(), v.local(VarGroup::Pch, it.col()), 1.0);
    const auto& cdch = p.conn.cdch[static_cast<size_t>(t)];
    for (Index k = 0; k < cdch.outerSize(); ++k)
      for (SpMat::InnerIterator it(cdch, k); it; ++it)
        gt_trips.emplace_back(it.row(), v.local(VarGroup::Pdch, it.col()), -1.0);
    const auto& cs = p.conn.cs[static_cast<size_t>(t)];
    for (Index k = 0; k < cs.outerSize(); ++k)
      for (SpMat::InnerIterator it(cs, k); it; ++it)
        gt_trips.emplace_back(nb + it.row(), v.local(VarGroup::Qs, it.col()), -1.0);
    SpMat gt(2 * nb, v.nxt);
    gt.setFromTriplets(gt_trips.begin(), gt_trips.end());
    d.gt[static_cast<size_t>(t)] = gt;
    append_block(gx_trips, gt, cl.gt_row(t, 0), v.x_off(t));

    // linear equality block A^grid
    const auto& eqs = p.lin_eq[static_cast<size_t>(t)];
    std::vector<Triplet> gl_trips;
    for (size_t r = 0; r < eqs.size(); ++r)
      gl_trips.emplace_back(static_cast<Index>(r), eqs[r].local, 1.0);
    SpMat gl(static_cast<Index>(eqs.size()), v.nxt);
    gl.setFromTriplets(gl_trips.begin(), gl_trips.end());
    d.gl[static_cast<size_t>(t)] = gl;
    append_block(gx_trips, gl, cl.gl_row(t, 0), v.x_off(t));

    // storage rows: A^s band (constant)
    if (ny > 0) {
      std::vector<Triplet> ds_trips;
      for (Index i = 0; i < ny; ++i) {
        ds_trips.emplace_back(i, v.local(VarGroup::Soc, i), p.emax_pu[i]);
        ds_trips.emplace_back(i, v.local(VarGroup::Pch, i), -p.psi_ch[i] * dt);
        ds_trips.emplace_back(i, v.local(VarGroup::Pdch, i), dt / p.psi_dch[i]);
      }
      SpMat gsd(ny, v.nxt);
      gsd.setFromTriplets(ds_trips.begin(), ds_trips.end());
      d.gs_d[static_cast<size_t>(t)] = gsd;
      append_block(gx_trips, gsd, cl.gs_row(t, 0), v.x_off(t));

      if (t + 1 < T) {
        std::vector<Triplet> c_trips;
        for (Index i = 0; i < ny; ++i)
          c_trips.emplace_back(i, v.local(VarGroup::Soc, i), -p.emax_pu[i]);
        SpMat gsc(ny, v.nxt);
        gsc.setFromTriplets(c_trips.begin(), c_trips.end());
        d.gs_c[static_cast<size_t>(t)] = gsc;
        append_block(gx_trips, gsc, cl.gs_row(t + 1, 0), v.x_off(t));
      } else {
        d.gs_c[static_cast<size_t>(t)] = SpMat(ny, v.nxt);
      }
    } else {
      d.gs_d[static_cast<size_t>(t)] = SpMat(0, v.nxt);
      d.gs_c[static_cast<size_t>(t)] = SpMat(0, v.nxt);
    }

    // squared-magnitude flow limits: d|S|^2 = 2(Re S * Re dS + Im S * Im dS)
    LineFlowJac lf = jac_line_flow(p.adm, volt, p.limited_lines);
    auto [ref_th, imf_th] = split_real_imag(lf.dsf_dth);
    auto [ref_vm, imf_vm] = split_real_imag(lf.dsf_dvm);
    auto [ret_th, imt_th] = split_real_imag(lf.dst_dth);
    auto [ret_vm, imt_vm] = split_real_imag(lf.dst_dvm);
    SpMat re_sf = spdiag(Vec(lf.sf.real())), im_sf = spdiag(Vec(lf.sf.imag()));
    SpMat re_st = spdiag(Vec(lf.st.real())), im_st = spdiag(Vec(lf.st.imag()));

    std::vector<Triplet> ht_trips;
    SpMat hfr_th = SpMat(2 * (re_sf * ref_th + im_sf * imf_th));
    SpMat hfr_vm = SpMat(2 * (re_sf * ref_vm + im_sf * imf_vm));
    SpMat hto_th = SpMat(2 * (re_st * ret_th + im_st * imt_th));
    SpMat hto_vm = SpMat(2 * (re_st * ret_vm + im_st * imt_vm));
    append_block(ht_trips, hfr_th, 0, v.group_off(VarGroup::Theta));
    append_block(ht_trips, hfr_vm, 0, v.group_off(VarGroup::Vm));
    append_block(ht_trips, hto_th, nlim, v.group_off(VarGroup::Theta));
    append_block(ht_trips, hto_vm, nlim, v.group_off(VarGroup::Vm));
    SpMat ht(2 * nlim, v.nxt);
    ht.setFromTriplets(ht_trips.begin(), ht_trips.end());
    d.ht[static_cast<size_t>(t)] = ht;
    append_block(hx_trips, ht, cl.ht_row(t, 0), v.x_off(t));

    // box rows: +-identity
    const auto& box = p.boxes[static_cast<size_t>(t)];
    std::vector<Triplet> hb_trips;
    for (size_t r = 0; r < box.size(); ++r)
      hb_trips.emplace_back(static_cast<Index>(r), box[r].local, box[r].upper ? 1.0 : -1.0);
    SpMat hb(static_cast<Index>(box.size()), v.nxt);
    hb.setFromTriplets(hb_trips.begin(), hb_trips.end());
    d.hb[static_cast<size_t>(t)] = hb;
    append_block(hx_trips, hb, cl.hl_row(t, 0), v.x_off(t));
  }

  d.g_x.resize(cl.n_g(), v.n_x());
  d.g_x.setFromTriplets(gx_trips.begin(), gx_trips.end());
  d.h_x.resize(cl.n_h(), v.n_x());
  d.h_x.setFromTriplets(hx_trips.begin(), hx_trips.end());
  return d;
}

HessBundle hess_lagrangian(const Problem& p, const Vec& x, const Vec& lam, const Vec& mu) {
  const VarLayout& v = p.vars;
  const ConLayout& cl = p.cons;
  if (lam.size() != cl.n_g() || mu.size() != cl.n_h())
    throw std::invalid_argument("hess_lagrangian: multiplier length mismatch");
  const Index nb = v.nb, T = v.T;
  const Index nlim = static_cast<Index>(p.limited_lines.size());

  HessBundle h;
  h.lxx_t.resize(static_cast<size_t>(T));
  std::vector<Triplet> lxx_trips;

  for (Index t = 0; t < T; ++t) {
    const CVec volt = voltages_at(p, x, t);

    // power balance: weight u = lamP - j lamQ, contribution Re{ d2(u^T S) }
    CVec u(nb);
    for (Index b = 0; b < nb; ++b)
      u[b] = Complex(lam[cl.gt_row(t, b)], -lam[cl.gt_row(t, nb + b)]);
    BusHess gb = d2s_bus(p.adm.ybus, volt, u);

    std::vector<Triplet> bt;
    auto add_re = [&](const SpCMat& m, Index r0, Index c0, Real scale = 1.0) {
      for (Index k = 0; k < m.outerSize(); ++k)
        for (SpCMat::InnerIterator it(m, k); it; ++it)
          bt.emplace_back(r0 + static_cast<Index>(it.row()), c0 + static_cast<Index>(it.col()),
                          scale * it.value().real());
    };
    const Index tho = v.group_off(VarGroup::Theta), vmo = v.group_off(VarGroup::Vm);
    add_re(gb.aa, tho, tho);
    add_re(gb.av, tho, vmo);
    add_re(gb.va, vmo, tho);
    add_re(gb.vv, vmo, vmo);

    // flow-limit Hessian, from and to ends: weighted second derivative of S
    // plus the first-derivative outer product
    if (nlim > 0) {
      LineFlowJac lf = jac_line_flow(p.adm, volt, p.limited_lines);
      Vec mu_fr(nlim), mu_to(nlim);
      for (Index k = 0; k < nlim; ++k) {
        mu_fr[k] = mu[cl.ht_row(t, k)];
        mu_to[k] = mu[cl.ht_row(t, nlim + k)];
      }

      LineSlice sl = restrict_lines(p.adm, p.limited_lines);

      auto one_end = [&](const SpMat& cb, const SpCMat& yb, const CVec& s, const SpCMat& dth,
                         const SpCMat& dvm, const Vec& w) {
        const CVec wconj = s.conjugate().array() * w.array().cast<Complex>();
        BusHess sh = d2s_branch(cb.cast<Complex>(), yb, volt, wconj);
        SpCMat dmu = spdiag(CVec(w.cast<Complex>()));
        SpCMat o_aa = SpCMat(dth.transpose()) * SpCMat(dmu * dth.conjugate());
        SpCMat o_av = SpCMat(dth.transpose()) * SpCMat(dmu * dvm.conjugate());
        SpCMat o_va = SpCMat(dvm.transpose()) * SpCMat(dmu * dth.conjugate());
        SpCMat o_vv = SpCMat(dvm.transpose()) * SpCMat(dmu * dvm.conjugate());
        add_re(SpCMat(sh.aa + o_aa), tho, tho, 2.0);
        add_re(SpCMat(sh.av + o_av), tho, vmo, 2.0);
        add_re(SpCMat(sh.va + o_va), vmo, tho, 2.0);
        add_re(SpCMat(sh.vv + o_vv), vmo, vmo, 2.0);
      };
      one_end(sl.cf, sl.yf, lf.sf, lf.dsf_dth, lf.dsf_dvm, mu_fr);
      one_end(sl.ct, sl.yt, lf.st, lf.dst_dth, lf.dst_dvm, mu_to);
    }

    // objective curvature (zero under a linear tariff)
    if (p.price_pu.size() == 0)
      for (Index g = 0; g < v.ng; ++g) {
        if (p.net.gen(g, gencol::STATUS) == 0 || p.net.avg(g, t) == 0) continue;
        if (p.cost_c2[g] != 0)
          bt.emplace_back(v.local(VarGroup::Pg, g), v.local(VarGroup::Pg, g), 2 * p.cost_c2[g]);
        if (p.qcost_c2[g] != 0)
          bt.emplace_back(v.local(VarGroup::Qg, g), v.local(VarGroup::Qg, g), 2 * p.qcost_c2[g]);
      }

    SpMat blk(v.nxt, v.nxt);
    blk.setFromTriplets(bt.begin(), bt.end());
    h.lxx_t[static_cast<size_t>(t)] = blk;
    append_block(lxx_trips, blk, v.x_off(t), v.x_off(t));
  }

  h.lxx.resize(v.n_x(), v.n_x());
  h.lxx.setFromTriplets(lxx_trips.begin(), lxx_trips.end());
  return h;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& fun, const Vec& x, Real step_scale) {
  if (step_scale <= 0) throw std::invalid_argument("fd_jacobian: step must be positive");
  const Index n = static_cast<Index>(x.size());
  Vec probe = fun(x);
  Mat jac(probe.size(), n);
  Vec xp = x;
  for (Index i = 0; i < n; ++i) {
    const Real h = step_scale * std::max(Real(1), std::abs(x[i]));
    xp[i] = x[i] + h;
    Vec fplus = fun(xp);
    xp[i] = x[i] - h;
    Vec fminus = fun(xp);
    xp[i] = x[i];
    jac.col(i) = (fplus - fminus) / (2 * h);
  }
  return jac;
}

}  // namespace battflow
