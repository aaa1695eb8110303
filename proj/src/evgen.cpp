#include "battflow/evgen.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

#include "battflow/caseio.hpp"

namespace battflow {

using nlohmann::json;

namespace {

// Box-Muller over mt19937_64 uniforms: identical streams on every platform.
class Sampler {
 public:
  explicit Sampler(uint64_t seed) : rng_(seed) {}

  Real uniform() { return static_cast<Real>(rng_() >> 11) * 0x1.0p-53; }

  Real normal(Real mean, Real stddev) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    Real u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const Real r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 rng_;
  Real spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace

EvGenParams EvGenParams::from_json(const json& doc) {
  EvGenParams p;
  p.n_ev = doc.value("n_ev", p.n_ev);
  p.T = doc.value("T", p.T);
  p.dt_hours = doc.value("dt_hours", p.dt_hours);
  p.window_start_hour = doc.value("window_start_hour", p.window_start_hour);
  p.mean_distance_km = doc.value("mean_distance_km", p.mean_distance_km);
  p.std_distance_km = doc.value("std_distance_km", p.std_distance_km);
  p.daily_distance_jitter = doc.value("daily_distance_jitter", p.daily_distance_jitter);
  p.frac_low_consumption = doc.value("frac_low_consumption", p.frac_low_consumption);
  p.low_kwh_per_100km = doc.value("low_kwh_per_100km", p.low_kwh_per_100km);
  p.high_kwh_per_100km = doc.value("high_kwh_per_100km", p.high_kwh_per_100km);
  p.mean_arrival_hour = doc.value("mean_arrival_hour", p.mean_arrival_hour);
  p.std_arrival_population_min = doc.value("std_arrival_population_min", p.std_arrival_population_min);
  p.std_arrival_daily_min = doc.value("std_arrival_daily_min", p.std_arrival_daily_min);
  p.work_offset_hours = doc.value("work_offset_hours", p.work_offset_hours);
  p.capacity_kwh = doc.value("capacity_kwh", p.capacity_kwh);
  p.soc_max = doc.value("soc_max", p.soc_max);
  p.soc_min = doc.value("soc_min", p.soc_min);
  p.eff_ch = doc.value("eff_ch", p.eff_ch);
  p.eff_dch = doc.value("eff_dch", p.eff_dch);
  p.seed = doc.value("seed", p.seed);
  if (doc.contains("charger_mix")) {
    p.charger_mix.clear();
    for (const auto& e : doc.at("charger_mix"))
      p.charger_mix.push_back({e.at("volts").get<Real>(), e.at("amps").get<Real>(),
                               e.at("fraction").get<Real>()});
  }
  return p;
}

json EvGenParams::to_json() const {
  json doc;
  doc["n_ev"] = n_ev;
  doc["T"] = T;
  doc["dt_hours"] = dt_hours;
  doc["window_start_hour"] = window_start_hour;
  doc["mean_distance_km"] = mean_distance_km;
  doc["std_distance_km"] = std_distance_km;
  doc["daily_distance_jitter"] = daily_distance_jitter;
  doc["frac_low_consumption"] = frac_low_consumption;
  doc["low_kwh_per_100km"] = low_kwh_per_100km;
  doc["high_kwh_per_100km"] = high_kwh_per_100km;
  doc["mean_arrival_hour"] = mean_arrival_hour;
  doc["std_arrival_population_min"] = std_arrival_population_min;
  doc["std_arrival_daily_min"] = std_arrival_daily_min;
  doc["work_offset_hours"] = work_offset_hours;
  doc["capacity_kwh"] = capacity_kwh;
  doc["soc_max"] = soc_max;
  doc["soc_min"] = soc_min;
  doc["eff_ch"] = eff_ch;
  doc["eff_dch"] = eff_dch;
  doc["seed"] = seed;
  json mix = json::array();
  for (const auto& m : charger_mix)
    mix.push_back({{"volts", m.volts}, {"amps", m.amps}, {"fraction", m.fraction}});
  doc["charger_mix"] = mix;
  return doc;
}

EvFleet generate_ev_schedules(const EvGenParams& p) {
  const Index n = p.n_ev, T = p.T;
  const Real window_hours = static_cast<Real>(T) * p.dt_hours;
  if (window_hours < p.work_offset_hours)
    throw std::invalid_argument("generate_ev_schedules: window shorter than the work offset");
  Real frac_sum = 0;
  for (const auto& m : p.charger_mix) frac_sum += m.fraction;
  if (std::abs(frac_sum - 1.0) > 1e-9)
    throw std::invalid_argument("generate_ev_schedules: charger mix fractions must sum to 1");
  if (p.frac_low_consumption < 0 || p.frac_low_consumption > 1)
    throw std::invalid_argument("generate_ev_schedules: consumption fraction outside [0, 1]");

  Sampler s(p.seed);

  EvFleet f;
  f.batt = Mat::Zero(n, battcol::NCOL);
  f.avbp = IMat::Zero(n, T);
  f.conch = IMat::Zero(n, T);
  f.condi = IMat::Zero(n, T);  // discharge inactive for EV fleets
  f.avbq = IMat::Zero(n, T);
  f.arrival_hour.resize(n);
  f.departure_hour.resize(n);
  f.distance_km.resize(n);
  f.charger_kw.resize(n);
  f.consumption_class.resize(n);

  std::vector<Triplet> soci, socmi;
  const Real w0 = p.window_start_hour;
  const Real w_end = w0 + window_hours;

  for (Index i = 0; i < n; ++i) {
    const Real arr_mean = s.normal(p.mean_arrival_hour, p.std_arrival_population_min / 60.0);
    const Real arr = arr_mean + s.normal(0.0, p.std_arrival_daily_min / 60.0);
    const Real dep = arr + p.work_offset_hours;

    const Real dist_mean = std::max<Real>(1.0, s.normal(p.mean_distance_km, p.std_distance_km));
    const Real dist = std::max<Real>(0.0, dist_mean * (1.0 + s.normal(0.0, p.daily_distance_jitter)));

    const bool low = s.uniform() < p.frac_low_consumption;
    const Real kwh_per_100 = low ? p.low_kwh_per_100km : p.high_kwh_per_100km;

    Real pick = s.uniform();
    Real kw = p.charger_mix.back().kw();
    for (const auto& m : p.charger_mix) {
      if (pick < m.fraction) {
        kw = m.kw();
        break;
      }
      pick -= m.fraction;
    }

    f.arrival_hour[i] = arr;
    f.departure_hour[i] = dep;
    f.distance_km[i] = dist;
    f.charger_kw[i] = kw;
    f.consumption_class[i] = low ? 0 : 1;

    // clip the connected interval into the window
    const Real a = std::min(std::max(arr, w0), w_end - p.dt_hours);
    const Real d = std::min(dep, w_end - p.dt_hours);
    const Index t_arr = static_cast<Index>(std::ceil((a - w0) / p.dt_hours - 1e-9));
    const Index t_dep = std::min<Index>(T - 1, static_cast<Index>(std::floor((d - w0) / p.dt_hours + 1e-9)));
    for (Index t = t_arr; t <= t_dep; ++t) {
      f.avbp(i, t) = 1;
      f.conch(i, t) = 1;
    }

    const Real energy_kwh = dist * kwh_per_100 / 100.0;
    const Real soc0 = std::max<Real>(0.0, (p.capacity_kwh - energy_kwh) / p.capacity_kwh);
    if (soc0 > 0) soci.emplace_back(i, t_arr, soc0);
    socmi.emplace_back(i, t_dep, p.soc_max);

    f.batt(i, battcol::BUS) = 0;  // placed later
    f.batt(i, battcol::SOC_OPT) = 1;
    f.batt(i, battcol::PCH_OPT) = 1;
    f.batt(i, battcol::PDICH_OPT) = 0;
    f.batt(i, battcol::Q_INJ_OPT) = 0;
    f.batt(i, battcol::SOC_MAX) = p.soc_max;
    f.batt(i, battcol::SOC_MIN) = p.soc_min;
    f.batt(i, battcol::QS_MAX) = 0;
    f.batt(i, battcol::QS_MIN) = 0;
    f.batt(i, battcol::MBASE) = p.capacity_kwh / 1000.0;  // MWh
    f.batt(i, battcol::PCH_MAX) = kw / 1000.0;            // MW
    f.batt(i, battcol::PDCH_MAX) = 0;
    f.batt(i, battcol::EFF_CH) = p.eff_ch;
    f.batt(i, battcol::EFF_DCH) = p.eff_dch;
  }

  f.soci.resize(n, T);
  f.soci.setFromTriplets(soci.begin(), soci.end());
  f.socmi.resize(n, T);
  f.socmi.setFromTriplets(socmi.begin(), socmi.end());
  return f;
}

json fleet_to_fragment(const EvFleet& fleet) {
  json doc;
  {
    json rows = json::array();
    for (Index i = 0; i < fleet.batt.rows(); ++i) {
      json r = json::array();
      for (Index j = 0; j < fleet.batt.cols(); ++j) r.push_back(fleet.batt(i, j));
      rows.push_back(std::move(r));
    }
    doc["batt"] = rows;
  }
  auto bits = [](const IMat& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      std::string s(static_cast<size_t>(m.cols()), '0');
      for (Index t = 0; t < m.cols(); ++t)
        if (m(i, t)) s[static_cast<size_t>(t)] = '1';
      rows.push_back(s);
    }
    return rows;
  };
  doc["avbp"] = bits(fleet.avbp);
  doc["conch"] = bits(fleet.conch);
  doc["condi"] = bits(fleet.condi);
  doc["avbq"] = bits(fleet.avbq);
  auto sparse = [](const SpMat& m) {
    json entries = json::array();
    for (Index k = 0; k < m.outerSize(); ++k)
      for (SpMat::InnerIterator it(m, k); it; ++it)
        entries.push_back(json::array({it.row(), it.col(), it.value()}));
    return entries;
  };
  doc["soci"] = sparse(fleet.soci);
  doc["socmi"] = sparse(fleet.socmi);
  return doc;
}

}  // namespace battflow
