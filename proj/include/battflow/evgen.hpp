#pragma once

#include <nlohmann/json_fwd.hpp>

#include <vector>

#include "battflow/types.hpp"

namespace battflow {

struct ChargerOption {
  Real volts = 230;
  Real amps = 10;
  Real fraction = 1;

  Real kw() const { return volts * amps / 1000.0; }
};

struct EvGenParams {
  Index n_ev = 1;
  Index T = 96;
  Real dt_hours = 0.25;
  Real window_start_hour = 12.0;  // simulation runs 12:00 to 12:00 next day

  Real mean_distance_km = 52;
  Real std_distance_km = 22;
  Real daily_distance_jitter = 0.10;  // relative sigma on the per-EV mean

  Real frac_low_consumption = 0.80;
  Real low_kwh_per_100km = 18;
  Real high_kwh_per_100km = 24;

  Real mean_arrival_hour = 17.0;
  Real std_arrival_population_min = 90;
  Real std_arrival_daily_min = 15;
  Real work_offset_hours = 9.5;  // departure = arrival + this

  std::vector<ChargerOption> charger_mix = {{230, 10, 0.70}, {230, 16, 0.20}, {230, 48, 0.10}};

  Real capacity_kwh = 40;
  Real soc_max = 1;
  Real soc_min = 0;
  Real eff_ch = 0.95;
  Real eff_dch = 0.97;

  uint64_t seed = 1;

  static EvGenParams from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// One generated EV fleet: BATT rows (bus column left 0 for later placement),
/// the five schedule matrices, and the raw per-EV samples for statistics.
struct EvFleet {
  Mat batt;                       // n_ev x battcol::NCOL
  IMat avbp, conch, condi, avbq;  // n_ev x T
  SpMat soci, socmi;

  Vec arrival_hour;    // sampled, pre-clipping
  Vec departure_hour;  // arrival + work offset, pre-clipping
  Vec distance_km;
  Vec charger_kw;
  IVec consumption_class;  // 0 = low, 1 = high
};

/// Deterministic for a fixed seed (hand-rolled Box-Muller, not
/// std::normal_distribution).
EvFleet generate_ev_schedules(const EvGenParams& p);

/// Case fragment document (batt + schedules) mergeable via merge_fragment.
nlohmann::json fleet_to_fragment(const EvFleet& fleet);

}  // namespace battflow
