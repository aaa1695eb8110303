#include "battflow/caseio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

namespace battflow {

using nlohmann::json;

CaseError::CaseError(std::string matrix, Index row, Index col, const std::string& what)
    : std::runtime_error(matrix + "(" + std::to_string(row) + "," + std::to_string(col) +
                         "): " + what),
      matrix_(std::move(matrix)),
      row_(row),
      col_(col) {}

Index Case::bus_row(Real ext_id) const {
  for (Index i = 0; i < n_bus(); ++i)
    if (bus(i, buscol::ID) == ext_id) return i;
  return -1;
}

namespace {

Mat parse_table(const json& doc, const char* key, Index min_cols, Index pad_cols) {
  if (!doc.contains(key)) throw CaseError(key, -1, -1, "missing required table");
  const json& rows = doc.at(key);
  if (!rows.is_array()) throw CaseError(key, -1, -1, "expected an array of rows");
  const Index n = static_cast<Index>(rows.size());
  Index width = min_cols;
  for (const auto& r : rows) width = std::max(width, static_cast<Index>(r.size()));
  width = std::max(width, pad_cols);
  Mat m = Mat::Zero(n, width);
  for (Index i = 0; i < n; ++i) {
    const json& r = rows[static_cast<size_t>(i)];
    if (static_cast<Index>(r.size()) < min_cols)
      throw CaseError(key, i, static_cast<Index>(r.size()),
                      "row has fewer than " + std::to_string(min_cols) + " columns");
    for (Index j = 0; j < static_cast<Index>(r.size()); ++j)
      m(i, j) = r[static_cast<size_t>(j)].get<Real>();
  }
  return m;
}

IMat parse_bitstrings(const json& doc, const char* key, Index nrows, Index ncols) {
  if (!doc.contains(key)) return IMat::Ones(nrows, ncols);
  const json& rows = doc.at(key);
  if (static_cast<Index>(rows.size()) != nrows)
    throw CaseError(key, static_cast<Index>(rows.size()), -1, "unexpected row count");
  IMat m(nrows, ncols);
  for (Index i = 0; i < nrows; ++i) {
    const std::string s = rows[static_cast<size_t>(i)].get<std::string>();
    if (static_cast<Index>(s.size()) != ncols)
      throw CaseError(key, i, static_cast<Index>(s.size()), "row width differs from horizon");
    for (Index t = 0; t < ncols; ++t) {
      const char ch = s[static_cast<size_t>(t)];
      if (ch != '0' && ch != '1') throw CaseError(key, i, t, "bitstring entries must be 0 or 1");
      m(i, t) = ch - '0';
    }
  }
  return m;
}

SpMat parse_sparse(const json& doc, const char* key, Index nrows, Index ncols) {
  std::vector<Triplet> trips;
  if (doc.contains(key)) {
    for (const auto& e : doc.at(key)) {
      if (e.size() != 3) throw CaseError(key, -1, -1, "entries must be [row, col, value]");
      const Index i = e[0].get<Index>(), t = e[1].get<Index>();
      if (i < 0 || i >= nrows || t < 0 || t >= ncols)
        throw CaseError(key, i, t, "index outside matrix");
      trips.emplace_back(i, t, e[2].get<Real>());
    }
  }
  SpMat m(nrows, ncols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Mat parse_dense(const json& doc, const char* key, Index nrows) {
  const json& rows = doc.at(key);
  if (static_cast<Index>(rows.size()) != nrows)
    throw CaseError(key, static_cast<Index>(rows.size()), -1, "unexpected row count");
  if (nrows == 0) return Mat(0, 0);
  const Index T = static_cast<Index>(rows[0].size());
  Mat m(nrows, T);
  for (Index i = 0; i < nrows; ++i) {
    const json& r = rows[static_cast<size_t>(i)];
    if (static_cast<Index>(r.size()) != T) throw CaseError(key, i, -1, "ragged row width");
    for (Index t = 0; t < T; ++t) m(i, t) = r[static_cast<size_t>(t)].get<Real>();
  }
  return m;
}

json dump_table(const Mat& m, Index used_cols = -1) {
  json rows = json::array();
  const Index w = used_cols < 0 ? static_cast<Index>(m.cols()) : used_cols;
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < w; ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json dump_bitstrings(const IMat& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::string s(static_cast<size_t>(m.cols()), '0');
    for (Index t = 0; t < m.cols(); ++t)
      if (m(i, t)) s[static_cast<size_t>(t)] = '1';
    rows.push_back(s);
  }
  return rows;
}

json dump_sparse(const SpMat& m) {
  json entries = json::array();
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      entries.push_back(json::array({it.row(), it.col(), it.value()}));
  return entries;
}

}  // namespace

Real ProfileSpec::active_scale(Real clock_hour) const {
  if (kind == Kind::Constant) return 1.0;
  Real h = std::fmod(clock_hour, 24.0);
  if (h < 0) h += 24.0;
  const Real t0 = trough_hour, p0 = peak_hour;
  if (h >= t0 && h <= p0) {
    const Real s = (h - t0) / (p0 - t0);
    return v_lo + (v_hi - v_lo) * 0.5 * (1 - std::cos(M_PI * s));
  }
  const Real hh = h < t0 ? h + 24.0 : h;
  const Real s = (hh - p0) / (t0 + 24.0 - p0);
  return v_hi - (v_hi - v_lo) * 0.5 * (1 - std::cos(M_PI * s));
}

std::pair<Mat, Mat> load_profiles(const Vec& base_p, const Vec& base_q, Index T,
                                  const ProfileSpec& profile) {
  if (T < 1) throw std::invalid_argument("load_profiles: T must be positive");
  Mat pd(base_p.size(), T), qd(base_q.size(), T);
  for (Index t = 0; t < T; ++t) {
    const Real clock = profile.start_hour + static_cast<Real>(t) * profile.step_hours;
    pd.col(t) = profile.active_scale(clock) * base_p;
    qd.col(t) = profile.q_scale * base_q;
  }
  return {pd, qd};
}

Case parse_case(const json& doc) {
  Case c;
  c.name = doc.value("name", "case");
  c.base_mva = doc.value("baseMVA", 100.0);
  c.dt_hours = doc.value("dt_hours", 1.0);

  c.bus = parse_table(doc, "bus", buscol::NCOL, buscol::NCOL);
  c.branch = parse_table(doc, "branch", 8, brcol::NCOL);
  c.gen = parse_table(doc, "gen", gencol::NCOL, gencol::NCOL);
  c.gencost = parse_table(doc, "gencost", costcol::NCOL_MIN, costcol::NCOL_MIN + 3);
  c.batt = doc.contains("batt") ? parse_table(doc, "batt", battcol::NCOL, battcol::NCOL)
                                : Mat(0, battcol::NCOL);

  const Index nb = c.n_bus();
  const Index ny = c.n_batt();

  Index T = -1;
  if (doc.contains("pd")) {
    c.pd = parse_dense(doc, "pd", nb);
    T = static_cast<Index>(c.pd.cols());
    if (!doc.contains("qd")) throw CaseError("QD", -1, -1, "pd present but qd missing");
    c.qd = parse_dense(doc, "qd", nb);
    if (c.qd.cols() != T) throw CaseError("QD", -1, static_cast<Index>(c.qd.cols()), "width differs from PD");
  } else if (doc.contains("T")) {
    T = doc.at("T").get<Index>();
    if (T < 1) throw CaseError("PD", -1, -1, "T must be positive");
    ProfileSpec prof;
    prof.step_hours = c.dt_hours;
    std::tie(c.pd, c.qd) =
        load_profiles(c.bus.col(buscol::PD), c.bus.col(buscol::QD), T, prof);
  } else {
    throw CaseError("PD", -1, -1, "either pd/qd series or T must be given");
  }

  c.avbp = parse_bitstrings(doc, "avbp", ny, T);
  c.conch = parse_bitstrings(doc, "conch", ny, T);
  c.condi = parse_bitstrings(doc, "condi", ny, T);
  c.avbq = parse_bitstrings(doc, "avbq", ny, T);
  c.avg = parse_bitstrings(doc, "avg", c.n_gen(), T);
  c.soci = parse_sparse(doc, "soci", ny, T);
  c.socmi = parse_sparse(doc, "socmi", ny, T);

  if (doc.contains("price")) {
    const json& p = doc.at("price");
    if (static_cast<Index>(p.size()) != T)
      throw CaseError("PRICE", -1, static_cast<Index>(p.size()), "price length differs from horizon");
    c.price.resize(T);
    for (Index t = 0; t < T; ++t) c.price[t] = p[static_cast<size_t>(t)].get<Real>();
  }

  validate_case(c);
  return c;
}

Case parse_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open case file: " + path);
  json doc = json::parse(in);
  Case c = parse_case(doc);
  if (c.name == "case") {
    auto slash = path.find_last_of('/');
    c.name = path.substr(slash == std::string::npos ? 0 : slash + 1);
    if (auto dot = c.name.find('.'); dot != std::string::npos) c.name = c.name.substr(0, dot);
  }
  return c;
}

json serialize_case(const Case& c) {
  json doc;
  doc["name"] = c.name;
  doc["baseMVA"] = c.base_mva;
  doc["dt_hours"] = c.dt_hours;
  doc["bus"] = dump_table(c.bus);
  doc["branch"] = dump_table(c.branch);
  doc["gen"] = dump_table(c.gen);
  doc["gencost"] = dump_table(c.gencost);
  if (c.batt.rows() > 0) doc["batt"] = dump_table(c.batt);
  if (c.n_batt() > 0) {
    doc["avbp"] = dump_bitstrings(c.avbp);
    doc["conch"] = dump_bitstrings(c.conch);
    doc["condi"] = dump_bitstrings(c.condi);
    doc["avbq"] = dump_bitstrings(c.avbq);
  }
  doc["avg"] = dump_bitstrings(c.avg);
  if (c.soci.nonZeros() > 0) doc["soci"] = dump_sparse(c.soci);
  if (c.socmi.nonZeros() > 0) doc["socmi"] = dump_sparse(c.socmi);
  doc["pd"] = dump_table(c.pd);
  doc["qd"] = dump_table(c.qd);
  if (c.price.size() > 0) {
    json p = json::array();
    for (Index t = 0; t < c.price.size(); ++t) p.push_back(c.price[t]);
    doc["price"] = p;
  }
  return doc;
}

void validate_case(const Case& c) {
  const Index nb = c.n_bus(), nl = c.n_branch(), ng = c.n_gen(), ny = c.n_batt(),
              T = c.horizon();
  if (nb < 1) throw CaseError("BUS", -1, -1, "at least one bus required");
  if (c.dt_hours <= 0) throw CaseError("BUS", -1, -1, "dt_hours must be positive");
  if (c.base_mva <= 0) throw CaseError("BUS", -1, -1, "baseMVA must be positive");

  std::unordered_map<Real, Index> ids;
  Index n_slack = 0;
  for (Index i = 0; i < nb; ++i) {
    if (!ids.emplace(c.bus(i, buscol::ID), i).second)
      throw CaseError("BUS", i, buscol::ID, "duplicate bus id");
    const int type = static_cast<int>(c.bus(i, buscol::TYPE));
    if (type < 1 || type > 3) throw CaseError("BUS", i, buscol::TYPE, "bus type must be 1, 2 or 3");
    if (type == 3) ++n_slack;
    if (c.bus(i, buscol::VMIN) > c.bus(i, buscol::VMAX))
      throw CaseError("BUS", i, buscol::VMIN, "Vmin exceeds Vmax");
    if (c.bus(i, buscol::VMIN) <= 0) throw CaseError("BUS", i, buscol::VMIN, "Vmin must be positive");
  }
  if (n_slack == 0) throw CaseError("BUS", -1, buscol::TYPE, "no slack (type 3) bus");

  for (Index l = 0; l < nl; ++l) {
    if (!ids.count(c.branch(l, brcol::FROM)))
      throw CaseError("BRANCH", l, brcol::FROM, "from-bus is not a declared bus");
    if (!ids.count(c.branch(l, brcol::TO)))
      throw CaseError("BRANCH", l, brcol::TO, "to-bus is not a declared bus");
  }
  for (Index g = 0; g < ng; ++g) {
    if (!ids.count(c.gen(g, gencol::BUS)))
      throw CaseError("GEN", g, gencol::BUS, "generator bus is not a declared bus");
    if (c.gen(g, gencol::PMIN) > c.gen(g, gencol::PMAX))
      throw CaseError("GEN", g, gencol::PMIN, "Pmin exceeds Pmax");
    if (c.gen(g, gencol::QMIN) > c.gen(g, gencol::QMAX))
      throw CaseError("GEN", g, gencol::QMIN, "Qmin exceeds Qmax");
  }
  if (c.gencost.rows() != ng && c.gencost.rows() != 2 * ng)
    throw CaseError("GENCOST", static_cast<Index>(c.gencost.rows()), -1,
                    "expected n_g or 2*n_g cost rows");
  for (Index g = 0; g < c.gencost.rows(); ++g) {
    if (static_cast<int>(c.gencost(g, costcol::MODEL)) != 2)
      throw CaseError("GENCOST", g, costcol::MODEL, "only polynomial cost model (2) is supported");
    const int ncoef = static_cast<int>(c.gencost(g, costcol::NCOEF));
    if (ncoef < 1 || ncoef > 3)
      throw CaseError("GENCOST", g, costcol::NCOEF, "polynomial degree must be at most 2");
  }

  for (Index i = 0; i < ny; ++i) {
    if (!ids.count(c.batt(i, battcol::BUS)))
      throw CaseError("BATT", i, battcol::BUS, "storage bus is not a declared bus");
    if (c.batt(i, battcol::SOC_MIN) > c.batt(i, battcol::SOC_MAX))
      throw CaseError("BATT", i, battcol::SOC_MIN, "SOCmin exceeds SOCmax");
    if (c.batt(i, battcol::QS_MIN) > c.batt(i, battcol::QS_MAX))
      throw CaseError("BATT", i, battcol::QS_MIN, "Qsmin exceeds Qsmax");
    if (c.batt(i, battcol::MBASE) <= 0)
      throw CaseError("BATT", i, battcol::MBASE, "energy capacity must be positive");
    for (Index col : {static_cast<Index>(battcol::EFF_CH), static_cast<Index>(battcol::EFF_DCH)}) {
      const Real eff = c.batt(i, col);
      if (!(eff > 0 && eff <= 1)) throw CaseError("BATT", i, col, "efficiency must lie in (0, 1]");
    }
  }

  auto check_binary = [T](const IMat& m, const char* nm, Index nrows) {
    if (m.rows() != nrows || (nrows > 0 && m.cols() != T))
      throw CaseError(nm, static_cast<Index>(m.rows()), static_cast<Index>(m.cols()),
                      "unexpected shape");
    for (Index i = 0; i < m.rows(); ++i)
      for (Index t = 0; t < T; ++t)
        if (m(i, t) != 0 && m(i, t) != 1) throw CaseError(nm, i, t, "entries must be 0 or 1");
  };
  check_binary(c.avbp, "AVBP", ny);
  check_binary(c.conch, "CONCH", ny);
  check_binary(c.condi, "CONDI", ny);
  check_binary(c.avbq, "AVBQ", ny);
  check_binary(c.avg, "AVG", ng);

  for (Index i = 0; i < ny; ++i)
    for (Index t = 0; t < T; ++t)
      if (c.avbp(i, t) == 0) {
        if (c.conch(i, t) != 0)
          throw CaseError("CONCH", i, t, "charge enabled while AVBP is 0");
        if (c.condi(i, t) != 0)
          throw CaseError("CONDI", i, t, "discharge enabled while AVBP is 0");
      }

  for (Index k = 0; k < c.soci.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.soci, k); it; ++it) {
      const Index i = it.row(), t = it.col();
      if (it.value() < 0 || it.value() > 1)
        throw CaseError("SOCI", i, t, "initial state of charge must lie in [0, 1]");
      const bool start = t == 0 && c.avbp(i, 0) == 1;
      const bool arrival = t > 0 && c.avbp(i, t - 1) == 0 && c.avbp(i, t) == 1;
      if (it.value() > 0 && !start && !arrival)
        throw CaseError("SOCI", i, t, "initial SOC outside an arrival step");
    }
  for (Index k = 0; k < c.socmi.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.socmi, k); it; ++it) {
      const Index i = it.row(), t = it.col();
      if (it.value() < 0 || it.value() > 1)
        throw CaseError("SOCMI", i, t, "minimum state of charge must lie in [0, 1]");
      const bool departure = c.avbp(i, t) == 1 && (t + 1 == T || c.avbp(i, t + 1) == 0);
      if (it.value() > 0 && !departure)
        throw CaseError("SOCMI", i, t, "minimum SOC outside a departure step");
    }

  if (c.pd.rows() != nb || c.qd.rows() != nb || c.qd.cols() != T)
    throw CaseError("PD", static_cast<Index>(c.pd.rows()), static_cast<Index>(c.pd.cols()),
                    "load series must be n_b x T");
  if (c.price.size() != 0 && c.price.size() != T)
    throw CaseError("PRICE", -1, static_cast<Index>(c.price.size()), "price length differs from horizon");
}

json merge_fragment(const json& case_doc, const json& fragment) {
  Case base = parse_case(case_doc);
  const Index T = base.horizon();
  const Index old = base.n_batt();

  if (!fragment.contains("batt")) throw CaseError("BATT", -1, -1, "fragment has no batt table");
  Mat fbatt = parse_table(fragment, "batt", battcol::NCOL, battcol::NCOL);
  const Index add = static_cast<Index>(fbatt.rows());
  IMat favbp = parse_bitstrings(fragment, "avbp", add, T);
  IMat fconch = parse_bitstrings(fragment, "conch", add, T);
  IMat fcondi = parse_bitstrings(fragment, "condi", add, T);
  IMat favbq = parse_bitstrings(fragment, "avbq", add, T);
  SpMat fsoci = parse_sparse(fragment, "soci", add, T);
  SpMat fsocmi = parse_sparse(fragment, "socmi", add, T);

  Mat batt(old + add, battcol::NCOL);
  if (old > 0) batt.topRows(old) = base.batt;
  batt.bottomRows(add) = fbatt;
  base.batt = batt;

  auto stack = [&](const IMat& a, const IMat& b) {
    IMat m(old + add, T);
    if (old > 0) m.topRows(old) = a;
    m.bottomRows(add) = b;
    return m;
  };
  base.avbp = stack(base.avbp, favbp);
  base.conch = stack(base.conch, fconch);
  base.condi = stack(base.condi, fcondi);
  base.avbq = stack(base.avbq, favbq);

  auto stack_sparse = [&](const SpMat& a, const SpMat& b) {
    std::vector<Triplet> trips;
    for (Index k = 0; k < a.outerSize(); ++k)
      for (SpMat::InnerIterator it(a, k); it; ++it) trips.emplace_back(it.row(), it.col(), it.value());
    for (Index k = 0; k < b.outerSize(); ++k)
      for (SpMat::InnerIterator it(b, k); it; ++it)
        trips.emplace_back(it.row() + old, it.col(), it.value());
    SpMat m(old + add, T);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  };
  base.soci = stack_sparse(base.soci, fsoci);
  base.socmi = stack_sparse(base.socmi, fsocmi);

  validate_case(base);
  return serialize_case(base);
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "first-last") return Strategy::FirstLast;
  if (s == "last-first") return Strategy::LastFirst;
  if (s == "load-bus") return Strategy::LoadBus;
  if (s == "fair-dist") return Strategy::FairDist;
  throw std::invalid_argument("unknown distribution strategy: " + s);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::FirstLast: return "first-last";
    case Strategy::LastFirst: return "last-first";
    case Strategy::LoadBus: return "load-bus";
    case Strategy::FairDist: return "fair-dist";
  }
  return "?";
}

IVec distribute_storage(const Case& c, Index n_y, Strategy strategy) {
  const Index nb = c.n_bus();
  if (nb < 1) throw std::invalid_argument("distribute_storage: empty network");
  IVec out(n_y);
  switch (strategy) {
    case Strategy::FirstLast:
      for (Index k = 0; k < n_y; ++k) out[k] = k % nb;
      break;
    case Strategy::LastFirst:
      for (Index k = 0; k < n_y; ++k) out[k] = nb - 1 - (k % nb);
      break;
    case Strategy::LoadBus: {
      std::vector<Index> loaded;
      for (Index i = 0; i < nb; ++i)
        if (c.bus(i, buscol::PD) != 0) loaded.push_back(i);
      if (loaded.empty())
        throw std::invalid_argument("distribute_storage: load-bus strategy needs a loaded bus");
      for (Index k = 0; k < n_y; ++k) out[k] = loaded[static_cast<size_t>(k) % loaded.size()];
      break;
    }
    case Strategy::FairDist: {
      const Index stride = std::max<Index>(1, nb / std::max<Index>(1, n_y));
      for (Index k = 0; k < n_y; ++k) out[k] = (k * stride) % nb;
      break;
    }
  }
  return out;
}

void add_stationary_storage(Case& c, Index n_y, Strategy strategy, const StorageDefaults& d) {
  const Index T = c.horizon();
  if (T < 1) throw std::invalid_argument("add_stationary_storage: case has no horizon");
  IVec rows = distribute_storage(c, n_y, strategy);
  const Index old = c.n_batt();
  Mat batt = Mat::Zero(old + n_y, battcol::NCOL);
  if (old > 0) batt.topRows(old) = c.batt;
  for (Index k = 0; k < n_y; ++k) {
    Index r = old + k;
    batt(r, battcol::BUS) = c.bus(rows[k], buscol::ID);
    batt(r, battcol::SOC_OPT) = 1;
    batt(r, battcol::PCH_OPT) = 1;
    batt(r, battcol::PDICH_OPT) = 1;
    batt(r, battcol::Q_INJ_OPT) = 0;
    batt(r, battcol::SOC_MAX) = d.soc_max;
    batt(r, battcol::SOC_MIN) = d.soc_min;
    batt(r, battcol::QS_MAX) = d.qs_max;
    batt(r, battcol::QS_MIN) = d.qs_min;
    batt(r, battcol::MBASE) = d.emax_mwh;
    batt(r, battcol::PCH_MAX) = d.pch_max_mw;
    batt(r, battcol::PDCH_MAX) = d.pdch_max_mw;
    batt(r, battcol::EFF_CH) = d.eff_ch;
    batt(r, battcol::EFF_DCH) = d.eff_dch;
  }
  c.batt = batt;

  auto grow_ones = [&](IMat& m) {
    IMat g = IMat::Ones(old + n_y, T);
    if (old > 0) g.topRows(old) = m;
    m = g;
  };
  grow_ones(c.avbp);
  grow_ones(c.conch);
  grow_ones(c.condi);
  grow_ones(c.avbq);

  std::vector<Triplet> si, sm;
  for (Index k = 0; k < c.soci.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.soci, k); it; ++it) si.emplace_back(it.row(), it.col(), it.value());
  for (Index k = 0; k < c.socmi.outerSize(); ++k)
    for (SpMat::InnerIterator it(c.socmi, k); it; ++it) sm.emplace_back(it.row(), it.col(), it.value());
  for (Index k = 0; k < n_y; ++k)
    if (d.soc_initial > 0) si.emplace_back(old + k, 0, d.soc_initial);
  c.soci.resize(old + n_y, T);
  c.soci.setFromTriplets(si.begin(), si.end());
  c.socmi.resize(old + n_y, T);
  c.socmi.setFromTriplets(sm.begin(), sm.end());
}

void ensure_load_series(Case& c, Index T, const ProfileSpec& profile) {
  if (c.horizon() == T) return;
  if (c.n_batt() > 0)
    throw std::invalid_argument("ensure_load_series: cannot change horizon after storage exists");
  ProfileSpec prof = profile;
  prof.step_hours = c.dt_hours;
  std::tie(c.pd, c.qd) = load_profiles(c.bus.col(buscol::PD), c.bus.col(buscol::QD), T, prof);
  c.avg = IMat::Ones(c.n_gen(), T);
  c.avbp.resize(0, T);
  c.conch.resize(0, T);
  c.condi.resize(0, T);
  c.avbq.resize(0, T);
  c.soci.resize(0, T);
  c.socmi.resize(0, T);
  if (c.price.size() > 0 && c.price.size() != T) c.price.resize(0);
}

Case synthetic_case(const SyntheticSpec& spec) {
  const Index nb = spec.n_bus;
  std::mt19937_64 rng(spec.seed);
  auto unif = [&rng]() { return static_cast<Real>(rng() >> 11) * 0x1.0p-53; };

  Case c;
  c.name = "synth" + std::to_string(nb);
  c.base_mva = 100;
  c.dt_hours = 1;

  c.bus = Mat::Zero(nb, buscol::NCOL);
  std::vector<Index> gen_buses;
  for (Index i = 0; i < nb; ++i) {
    c.bus(i, buscol::ID) = i + 1;
    const bool hosts_gen = i % spec.gen_every == 0;
    if (hosts_gen) gen_buses.push_back(i);
    c.bus(i, buscol::TYPE) = i == 0 ? 3 : (hosts_gen ? 2 : 1);
    const bool loaded = !hosts_gen && unif() < spec.load_fraction;
    if (loaded) {
      c.bus(i, buscol::PD) = spec.mean_load_mw * (0.5 + unif());
      c.bus(i, buscol::QD) = c.bus(i, buscol::PD) / 3;
    }
    c.bus(i, buscol::AREA) = 1;
    c.bus(i, buscol::VM) = 1;
    c.bus(i, buscol::BASE_KV) = 135;
    c.bus(i, buscol::ZONE) = 1;
    c.bus(i, buscol::VMAX) = 1.06;
    c.bus(i, buscol::VMIN) = 0.94;
  }

  std::vector<std::array<Real, 3>> edges;  // from, to + impedance seedling
  for (Index i = 0; i < nb; ++i) edges.push_back({Real(i + 1), Real((i + 1) % nb + 1), unif()});
  const Index chord_span = std::max<Index>(3, nb / 8);
  for (Index i = 0; i < nb; i += 5)
    edges.push_back({Real(i + 1), Real((i + chord_span) % nb + 1), unif()});

  c.branch = Mat::Zero(static_cast<Index>(edges.size()), brcol::NCOL);
  for (Index l = 0; l < static_cast<Index>(edges.size()); ++l) {
    const Real u = edges[static_cast<size_t>(l)][2];
    c.branch(l, brcol::FROM) = edges[static_cast<size_t>(l)][0];
    c.branch(l, brcol::TO) = edges[static_cast<size_t>(l)][1];
    c.branch(l, brcol::R) = 0.008 + 0.012 * u;
    c.branch(l, brcol::X) = 0.05 + 0.06 * u;
    c.branch(l, brcol::B) = 0.02 + 0.03 * u;
    c.branch(l, brcol::RATE_A) = spec.rate_a_mva;
    c.branch(l, brcol::STATUS) = 1;
  }

  const Real total_load = c.bus.col(buscol::PD).sum();
  const Index ng = static_cast<Index>(gen_buses.size());
  c.gen = Mat::Zero(ng, gencol::NCOL);
  c.gencost = Mat::Zero(ng, costcol::NCOL_MIN + 3);
  for (Index g = 0; g < ng; ++g) {
    const Real pmax = std::max<Real>(50, 2.5 * total_load / static_cast<Real>(ng));
    c.gen(g, gencol::BUS) = c.bus(gen_buses[static_cast<size_t>(g)], buscol::ID);
    c.gen(g, gencol::QMAX) = pmax;
    c.gen(g, gencol::QMIN) = -pmax;
    c.gen(g, gencol::VG) = 1;
    c.gen(g, gencol::MBASE) = 100;
    c.gen(g, gencol::STATUS) = 1;
    c.gen(g, gencol::PMAX) = pmax;
    c.gen(g, gencol::PMIN) = 0;
    c.gencost(g, costcol::MODEL) = 2;
    c.gencost(g, costcol::NCOEF) = 3;
    c.gencost(g, costcol::COEF0) = 0.02 + 0.06 * unif();
    c.gencost(g, costcol::COEF0 + 1) = 5 + 15 * unif();
    c.gencost(g, costcol::COEF0 + 2) = 0;
  }

  c.avg = IMat::Ones(ng, 0);
  c.avbp.resize(0, 0);
  c.conch.resize(0, 0);
  c.condi.resize(0, 0);
  c.avbq.resize(0, 0);
  c.soci.resize(0, 0);
  c.socmi.resize(0, 0);
  c.pd.resize(nb, 0);
  c.qd.resize(nb, 0);
  return c;
}

Case case9() {
  Case c;
  c.name = "case9";
  c.base_mva = 100;
  c.dt_hours = 1;
  c.bus.resize(9, buscol::NCOL);
  // id type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
  c.bus << 1, 3, 0, 0, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      2, 2, 0, 0, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      3, 2, 0, 0, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      4, 1, 0, 0, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      5, 1, 90, 30, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      6, 1, 0, 0, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      7, 1, 100, 35, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      8, 1, 0, 0, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9,
      9, 1, 125, 50, 0, 0, 1, 1, 0, 345, 1, 1.1, 0.9;
  c.branch.resize(9, brcol::NCOL);
  // from to r x b rateA rateB rateC ratio angle status
  c.branch << 1, 4, 0, 0.0576, 0, 250, 250, 250, 0, 0, 1,
      4, 5, 0.017, 0.092, 0.158, 250, 250, 250, 0, 0, 1,
      5, 6, 0.039, 0.17, 0.358, 150, 150, 150, 0, 0, 1,
      3, 6, 0, 0.0586, 0, 300, 300, 300, 0, 0, 1,
      6, 7, 0.0119, 0.1008, 0.209, 150, 150, 150, 0, 0, 1,
      7, 8, 0.0085, 0.072, 0.149, 250, 250, 250, 0, 0, 1,
      8, 2, 0, 0.0625, 0, 250, 250, 250, 0, 0, 1,
      8, 9, 0.032, 0.161, 0.306, 250, 250, 250, 0, 0, 1,
      9, 4, 0.01, 0.085, 0.176, 250, 250, 250, 0, 0, 1;
  c.gen.resize(3, gencol::NCOL);
  // bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin
  c.gen << 1, 72.3, 27.03, 300, -300, 1.04, 100, 1, 250, 10,
      2, 163, 6.54, 300, -300, 1.025, 100, 1, 300, 10,
      3, 85, -10.95, 300, -300, 1.025, 100, 1, 270, 10;
  c.gencost.resize(3, costcol::NCOL_MIN + 3);
  c.gencost << 2, 1500, 0, 3, 0.11, 5, 150,
      2, 2000, 0, 3, 0.085, 1.2, 600,
      2, 3000, 0, 3, 0.1225, 1, 335;
  c.batt.resize(0, battcol::NCOL);
  c.avg = IMat::Ones(3, 0);
  c.avbp.resize(0, 0);
  c.conch.resize(0, 0);
  c.condi.resize(0, 0);
  c.avbq.resize(0, 0);
  c.soci.resize(0, 0);
  c.socmi.resize(0, 0);
  c.pd.resize(9, 0);
  c.qd.resize(9, 0);
  return c;
}

}  // namespace battflow
