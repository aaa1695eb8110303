#include "battflow/problem.hpp"

#include <cmath>

namespace battflow {

namespace {

bool gen_available(const Case& c, Index g, Index t) {
  return c.gen(g, gencol::STATUS) != 0 && c.avg(g, t) == 1;
}

void fill_bounds(Problem& p) {
  const Case& c = p.net;
  const VarLayout& v = p.vars;
  const Real base = c.base_mva;
  p.xmin = Vec::Constant(v.n_x(), -kInf);
  p.xmax = Vec::Constant(v.n_x(), kInf);

  for (Index t = 0; t < v.T; ++t) {
    for (Index b = 0; b < v.nb; ++b) {
      const Index iv = v.global(t, VarGroup::Vm, b);
      p.xmin[iv] = c.bus(b, buscol::VMIN);
      p.xmax[iv] = c.bus(b, buscol::VMAX);
    }
    for (Index g = 0; g < v.ng; ++g) {
      const Index ip = v.global(t, VarGroup::Pg, g);
      const Index iq = v.global(t, VarGroup::Qg, g);
      if (gen_available(c, g, t)) {
        p.xmin[ip] = c.gen(g, gencol::PMIN) / base;
        p.xmax[ip] = c.gen(g, gencol::PMAX) / base;
        p.xmin[iq] = c.gen(g, gencol::QMIN) / base;
        p.xmax[iq] = c.gen(g, gencol::QMAX) / base;
      } else {
        p.xmin[ip] = p.xmax[ip] = 0;
        p.xmin[iq] = p.xmax[iq] = 0;
      }
    }
    for (Index i = 0; i < v.ny; ++i) {
      const Index is = v.global(t, VarGroup::Soc, i);
      const Real lo = p.soc_lo(i, t);
      const Real hi = c.batt(i, battcol::SOC_MAX);
      if (lo > hi)
        throw CaseError("SOCMI", i, t, "required minimum SOC exceeds SOCmax");
      p.xmin[is] = lo;
      p.xmax[is] = hi;

      const Index ich = v.global(t, VarGroup::Pch, i);
      if (p.pch_active(i, t)) {
        p.xmin[ich] = 0;
        p.xmax[ich] = c.batt(i, battcol::PCH_MAX) / base;
      } else {
        p.xmin[ich] = p.xmax[ich] = 0;
      }
      const Index idch = v.global(t, VarGroup::Pdch, i);
      if (p.pdch_active(i, t)) {
        p.xmin[idch] = 0;
        p.xmax[idch] = c.batt(i, battcol::PDCH_MAX) / base;
      } else {
        p.xmin[idch] = p.xmax[idch] = 0;
      }
      const Index iqs = v.global(t, VarGroup::Qs, i);
      if (c.avbp(i, t) == 1 && c.avbq(i, t) == 1) {
        p.xmin[iqs] = c.batt(i, battcol::QS_MIN) / base;
        p.xmax[iqs] = c.batt(i, battcol::QS_MAX) / base;
      } else {
        p.xmin[iqs] = p.xmax[iqs] = 0;
      }
    }
  }
}

void fill_rows(Problem& p) {
  const Case& c = p.net;
  const VarLayout& v = p.vars;
  p.lin_eq.assign(static_cast<size_t>(v.T), {});
  p.boxes.assign(static_cast<size_t>(v.T), {});

  std::vector<Index> slack_buses;
  for (Index b = 0; b < v.nb; ++b)
    if (static_cast<int>(c.bus(b, buscol::TYPE)) == static_cast<int>(BusType::Slack))
      slack_buses.push_back(b);

  // Bounds on the box rows are relaxed by a whisker so that actives forced
  // exactly onto a bound by the equality chain (an EV's SOC outside its
  // presence window) keep a strict barrier interior. Well below tol_feas, so
  // invisible to the convergence tests.
  const Real relax = 1e-9;
  for (Index t = 0; t < v.T; ++t) {
    auto& eqs = p.lin_eq[static_cast<size_t>(t)];
    auto& box = p.boxes[static_cast<size_t>(t)];
    for (Index b : slack_buses) eqs.push_back({v.local(VarGroup::Theta, b), 0.0});
    for (Index l = 0; l < v.nxt; ++l) {
      const Index gi = v.x_off(t) + l;
      const Real lo = p.xmin[gi], hi = p.xmax[gi];
      if (lo == hi) {
        eqs.push_back({l, lo});
        continue;
      }
      if (std::isfinite(hi)) box.push_back({l, hi + relax * std::max(Real(1), std::abs(hi)), true});
      if (std::isfinite(lo)) box.push_back({l, lo - relax * std::max(Real(1), std::abs(lo)), false});
    }
  }
}

}  // namespace

Problem build_problem(const Case& c) {
  validate_case(c);

  Problem p;
  p.net = c;
  p.adm = build_admittances(c);
  p.conn = build_connectivity3d(c);

  p.vars.nb = c.n_bus();
  p.vars.ng = c.n_gen();
  p.vars.ny = c.n_batt();
  p.vars.T = c.horizon();
  p.vars.nxt = 2 * p.vars.nb + 2 * p.vars.ng + 4 * p.vars.ny;

  const Real base = c.base_mva;
  p.emax_pu.resize(p.vars.ny);
  p.psi_ch.resize(p.vars.ny);
  p.psi_dch.resize(p.vars.ny);
  p.soc_lo = Mat::Zero(p.vars.ny, p.vars.T);
  for (Index i = 0; i < p.vars.ny; ++i) {
    p.emax_pu[i] = c.batt(i, battcol::MBASE) / base;
    p.psi_ch[i] = c.batt(i, battcol::EFF_CH);
    p.psi_dch[i] = c.batt(i, battcol::EFF_DCH);
    for (Index t = 0; t < p.vars.T; ++t)
      p.soc_lo(i, t) = std::max(c.batt(i, battcol::SOC_MIN), c.socmi.coeff(i, t));
  }

  for (Index l = 0; l < c.n_branch(); ++l)
    if (c.branch(l, brcol::STATUS) != 0 && c.branch(l, brcol::RATE_A) > 0)
      p.limited_lines.push_back(l);
  p.smax2.resize(static_cast<Index>(p.limited_lines.size()));
  for (size_t k = 0; k < p.limited_lines.size(); ++k) {
    const Real s = c.branch(p.limited_lines[k], brcol::RATE_A) / base;
    p.smax2[static_cast<Index>(k)] = s * s;
  }

  const Index ng = p.vars.ng;
  p.cost_c2 = Vec::Zero(ng);
  p.cost_c1 = Vec::Zero(ng);
  p.cost_c0 = Vec::Zero(ng);
  p.qcost_c2 = Vec::Zero(ng);
  p.qcost_c1 = Vec::Zero(ng);
  p.qcost_c0 = Vec::Zero(ng);
  auto load_poly = [&](Index row, Vec& c2, Vec& c1, Vec& c0, Index g) {
    const int n = static_cast<int>(c.gencost(row, costcol::NCOEF));
    const Index first = costcol::COEF0;
    // coefficients are highest-degree first
    Real a2 = 0, a1 = 0, a0 = 0;
    if (n == 3) {
      a2 = c.gencost(row, first);
      a1 = c.gencost(row, first + 1);
      a0 = c.gencost(row, first + 2);
    } else if (n == 2) {
      a1 = c.gencost(row, first);
      a0 = c.gencost(row, first + 1);
    } else {
      a0 = c.gencost(row, first);
    }
    c2[g] = a2 * base * base;
    c1[g] = a1 * base;
    c0[g] = a0;
  };
  for (Index g = 0; g < ng; ++g) load_poly(g, p.cost_c2, p.cost_c1, p.cost_c0, g);
  if (c.has_reactive_cost())
    for (Index g = 0; g < ng; ++g) load_poly(ng + g, p.qcost_c2, p.qcost_c1, p.qcost_c0, g);
  if (c.price.size() > 0) p.price_pu = c.price * base;

  fill_bounds(p);
  fill_rows(p);

  p.cons.T = p.vars.T;
  p.cons.ny = p.vars.ny;
  p.cons.ngn_t = 2 * p.vars.nb;
  p.cons.nhn_t = 2 * static_cast<Index>(p.limited_lines.size());
  p.cons.ngl.resize(static_cast<size_t>(p.vars.T));
  p.cons.nhl.resize(static_cast<size_t>(p.vars.T));
  p.cons.gl_off.assign(static_cast<size_t>(p.vars.T) + 1, 0);
  p.cons.hl_off.assign(static_cast<size_t>(p.vars.T) + 1, 0);
  for (Index t = 0; t < p.vars.T; ++t) {
    p.cons.ngl[static_cast<size_t>(t)] = static_cast<Index>(p.lin_eq[static_cast<size_t>(t)].size());
    p.cons.nhl[static_cast<size_t>(t)] = static_cast<Index>(p.boxes[static_cast<size_t>(t)].size());
    p.cons.gl_off[static_cast<size_t>(t) + 1] =
        p.cons.gl_off[static_cast<size_t>(t)] + p.cons.ngl[static_cast<size_t>(t)];
    p.cons.hl_off[static_cast<size_t>(t) + 1] =
        p.cons.hl_off[static_cast<size_t>(t)] + p.cons.nhl[static_cast<size_t>(t)];
  }
  return p;
}

CVec voltages_at(const Problem& p, const Vec& x, Index t) {
  const VarLayout& v = p.vars;
  CVec out(v.nb);
  for (Index b = 0; b < v.nb; ++b)
    out[b] = std::polar(x[v.global(t, VarGroup::Vm, b)], x[v.global(t, VarGroup::Theta, b)]);
  return out;
}

Vec eval_equalities(const Problem& p, const Vec& x) {
  if (x.size() != p.vars.n_x()) throw std::invalid_argument("eval_equalities: bad X length");
  const VarLayout& v = p.vars;
  const ConLayout& cl = p.cons;
  const Case& c = p.net;
  const Real base = c.base_mva, dt = c.dt_hours;
  Vec g(cl.n_g());

  for (Index t = 0; t < v.T; ++t) {
    const CVec volt = voltages_at(p, x, t);
    const CVec s = bus_injections(p.adm, volt);
    const auto xt = x.segment(v.x_off(t), v.nxt);
    const auto pg = xt.segment(v.group_off(VarGroup::Pg), v.ng);
    const auto qg = xt.segment(v.group_off(VarGroup::Qg), v.ng);
    const auto pch = xt.segment(v.group_off(VarGroup::Pch), v.ny);
    const auto pdch = xt.segment(v.group_off(VarGroup::Pdch), v.ny);
    const auto qs = xt.segment(v.group_off(VarGroup::Qs), v.ny);

    Vec gp = s.real() + c.pd.col(t) / base - p.conn.cg[static_cast<size_t>(t)] * pg +
             p.conn.cch[static_cast<size_t>(t)] * pch - p.conn.cdch[static_cast<size_t>(t)] * pdch;
    Vec gq = s.imag() + c.qd.col(t) / base - p.conn.cg[static_cast<size_t>(t)] * qg -
             p.conn.cs[static_cast<size_t>(t)] * qs;
    g.segment(cl.gt_row(t, 0), v.nb) = gp;
    g.segment(cl.gt_row(t, v.nb), v.nb) = gq;

    const auto& eqs = p.lin_eq[static_cast<size_t>(t)];
    for (size_t r = 0; r < eqs.size(); ++r)
      g[cl.gl_row(t, static_cast<Index>(r))] = xt[eqs[r].local] - eqs[r].value;

    for (Index i = 0; i < v.ny; ++i) {
      Real acc = p.emax_pu[i] * xt[v.local(VarGroup::Soc, i)] -
                 p.psi_ch[i] * dt * xt[v.local(VarGroup::Pch, i)] +
                 dt / p.psi_dch[i] * xt[v.local(VarGroup::Pdch, i)] -
                 p.emax_pu[i] * c.soci.coeff(i, t);
      if (t > 0) acc -= p.emax_pu[i] * x[v.global(t - 1, VarGroup::Soc, i)];
      g[cl.gs_row(t, i)] = acc;
    }
  }
  return g;
}

Vec eval_inequalities(const Problem& p, const Vec& x) {
  if (x.size() != p.vars.n_x()) throw std::invalid_argument("eval_inequalities: bad X length");
  const VarLayout& v = p.vars;
  const ConLayout& cl = p.cons;
  const Index nlim = static_cast<Index>(p.limited_lines.size());
  Vec h(cl.n_h());

  for (Index t = 0; t < v.T; ++t) {
    const CVec volt = voltages_at(p, x, t);
    const auto [sf, st] = line_flows(p.adm, volt);
    for (Index k = 0; k < nlim; ++k) {
      const Index l = p.limited_lines[static_cast<size_t>(k)];
      h[cl.ht_row(t, k)] = std::norm(sf[l]) - p.smax2[k];
      h[cl.ht_row(t, nlim + k)] = std::norm(st[l]) - p.smax2[k];
    }
    const auto xt = x.segment(v.x_off(t), v.nxt);
    const auto& box = p.boxes[static_cast<size_t>(t)];
    for (size_t r = 0; r < box.size(); ++r)
      h[cl.hl_row(t, static_cast<Index>(r))] =
          box[r].upper ? xt[box[r].local] - box[r].bound : box[r].bound - xt[box[r].local];
  }
  return h;
}

Real eval_objective(const Problem& p, const Vec& x) {
  const VarLayout& v = p.vars;
  Real total = 0;
  for (Index t = 0; t < v.T; ++t) {
    for (Index g = 0; g < v.ng; ++g) {
      if (!gen_available(p.net, g, t)) continue;
      const Real pg = x[v.global(t, VarGroup::Pg, g)];
      if (p.price_pu.size() > 0) {
        total += p.price_pu[t] * pg;
      } else {
        total += p.cost_c2[g] * pg * pg + p.cost_c1[g] * pg + p.cost_c0[g];
        const Real qg = x[v.global(t, VarGroup::Qg, g)];
        total += p.qcost_c2[g] * qg * qg + p.qcost_c1[g] * qg + p.qcost_c0[g];
      }
    }
  }
  return total;
}

Vec objective_gradient(const Problem& p, const Vec& x) {
  const VarLayout& v = p.vars;
  Vec grad = Vec::Zero(v.n_x());
  for (Index t = 0; t < v.T; ++t)
    for (Index g = 0; g < v.ng; ++g) {
      if (!gen_available(p.net, g, t)) continue;
      const Index ip = v.global(t, VarGroup::Pg, g);
      if (p.price_pu.size() > 0) {
        grad[ip] = p.price_pu[t];
      } else {
        grad[ip] = 2 * p.cost_c2[g] * x[ip] + p.cost_c1[g];
        const Index iq = v.global(t, VarGroup::Qg, g);
        grad[iq] = 2 * p.qcost_c2[g] * x[iq] + p.qcost_c1[g];
      }
    }
  return grad;
}

Vec initial_point(const Problem& p) {
  const VarLayout& v = p.vars;
  Vec x(v.n_x());
  for (Index t = 0; t < v.T; ++t)
    for (Index l = 0; l < v.nxt; ++l) {
      const Index gi = v.x_off(t) + l;
      const Real lo = p.xmin[gi], hi = p.xmax[gi];
      Real val;
      if (lo == hi) {
        val = lo;
      } else if (std::isfinite(lo) && std::isfinite(hi)) {
        val = 0.5 * (lo + hi);
      } else if (l >= v.group_off(VarGroup::Vm) && l < v.group_off(VarGroup::Pg)) {
        val = 1.0;
      } else if (std::isfinite(lo)) {
        val = lo + 1.0;
      } else if (std::isfinite(hi)) {
        val = hi - 1.0;
      } else {
        val = 0.0;
      }
      x[gi] = val;
    }
  return x;
}

}  // namespace battflow
