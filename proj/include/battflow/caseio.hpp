#pragma once

#include <nlohmann/json_fwd.hpp>

#include <stdexcept>
#include <string>

#include "battflow/types.hpp"

namespace battflow {

// MATPOWER-style column layouts for the four grid tables plus the storage
// table. Tables are stored as dense row-per-element matrices.
namespace buscol {
enum { ID = 0, TYPE, PD, QD, GS, BS, AREA, VM, VA, BASE_KV, ZONE, VMAX, VMIN, NCOL };
}
namespace brcol {
enum { FROM = 0, TO, R, X, B, RATE_A, RATE_B, RATE_C, RATIO, ANGLE, STATUS, NCOL };
}
namespace gencol {
enum { BUS = 0, PG, QG, QMAX, QMIN, VG, MBASE, STATUS, PMAX, PMIN, NCOL };
}
namespace costcol {
enum { MODEL = 0, STARTUP, SHUTDOWN, NCOEF, COEF0, NCOL_MIN = 4 };
}
namespace battcol {
enum {
  BUS = 0,
  SOC_OPT,
  PCH_OPT,
  PDICH_OPT,
  Q_INJ_OPT,
  SOC_MAX,
  SOC_MIN,
  QS_MAX,
  QS_MIN,
  MBASE,     // energy capacity E^max, MWh
  PCH_MAX,   // MW
  PDCH_MAX,  // MW
  EFF_CH,
  EFF_DCH,
  NCOL
};
}

enum class BusType { PQ = 1, PV = 2, Slack = 3 };

struct Case {
  std::string name;
  Real base_mva = 100;
  Real dt_hours = 1;

  Mat bus;      // n_b x buscol::NCOL
  Mat branch;   // n_l x brcol::NCOL
  Mat gen;      // n_g x gencol::NCOL
  Mat gencost;  // n_g (or 2 n_g) rows, model/startup/shutdown/n/coeffs...
  Mat batt;     // n_y x battcol::NCOL

  IMat avbp, conch, condi, avbq;  // n_y x T binary schedules
  IMat avg;                       // n_g x T
  SpMat soci, socmi;              // n_y x T
  Mat pd, qd;                     // n_b x T, MW / MVAr
  Vec price;                      // optional length-T tariff, currency/MWh

  Index n_bus() const { return static_cast<Index>(bus.rows()); }
  Index n_branch() const { return static_cast<Index>(branch.rows()); }
  Index n_gen() const { return static_cast<Index>(gen.rows()); }
  Index n_batt() const { return static_cast<Index>(batt.rows()); }
  Index horizon() const { return static_cast<Index>(pd.cols()); }

  /// Row in `bus` for an external bus id.
  Index bus_row(Real ext_id) const;
  bool has_reactive_cost() const { return gencost.rows() == 2 * gen.rows() && gen.rows() > 0; }
};

/// Validation failure; names the offending matrix and cell.
class CaseError : public std::runtime_error {
 public:
  CaseError(std::string matrix, Index row, Index col, const std::string& what);
  const std::string& matrix() const { return matrix_; }
  Index row() const { return row_; }
  Index col() const { return col_; }

 private:
  std::string matrix_;
  Index row_, col_;
};

struct ProfileSpec {
  enum class Kind { Constant, Diurnal } kind = Kind::Diurnal;
  Real v_lo = 0.70;          // trough scaling
  Real v_hi = 1.15;          // peak scaling
  Real trough_hour = 4.0;    // clock hour of the minimum
  Real peak_hour = 19.0;     // clock hour of the maximum
  Real start_hour = 0.0;     // clock hour of step 0
  Real step_hours = 1.0;     // profile repeats every 24 h
  Real q_scale = 1.0;        // constant reactive scaling

  Real active_scale(Real clock_hour) const;
};

Case parse_case(const nlohmann::json& doc);
Case parse_case_file(const std::string& path);
nlohmann::json serialize_case(const Case& c);
void validate_case(const Case& c);  // throws CaseError

/// Merge an EV/storage fragment (batt + schedule matrices) into a case
/// document. Fragment columns must match the case horizon.
nlohmann::json merge_fragment(const nlohmann::json& case_doc, const nlohmann::json& fragment);

/// pd[:,t] = c_p(t) * base_p, qd[:,t] = c_q * base_q.
std::pair<Mat, Mat> load_profiles(const Vec& base_p, const Vec& base_q, Index T,
                                  const ProfileSpec& profile);

enum class Strategy { FirstLast, LastFirst, LoadBus, FairDist };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

/// Bus rows (0-based) hosting each of the n_y devices under a placement
/// strategy; cycles when n_y exceeds the candidate set.
IVec distribute_storage(const Case& c, Index n_y, Strategy strategy);

struct StorageDefaults {
  Real emax_mwh = 100;
  Real pch_max_mw = 10;
  Real pdch_max_mw = 10;
  Real eff_ch = 0.95;
  Real eff_dch = 0.97;
  Real soc_max = 1;
  Real soc_min = 0;
  Real qs_max = 0;
  Real qs_min = 0;
  Real soc_initial = 0;  // SOCi at t=1
};

/// Add n_y stationary devices (all-ones schedules) at the strategy's buses.
void add_stationary_storage(Case& c, Index n_y, Strategy strategy, const StorageDefaults& d = {});

/// Ensure the case has a T-column load time series (synthesizes from the bus
/// table's base loads when absent or when T differs).
void ensure_load_series(Case& c, Index T, const ProfileSpec& profile = {});

struct SyntheticSpec {
  Index n_bus = 30;
  uint64_t seed = 1;
  Real load_fraction = 0.6;    // fraction of buses carrying load
  Real mean_load_mw = 35;
  Real rate_a_mva = 250;
  Index gen_every = 6;         // one generator per this many buses
};

/// Deterministic meshed transmission-style case (ring plus chords).
Case synthetic_case(const SyntheticSpec& spec);

/// Standard 9-bus case, same data as the shipped case9.battcase.json.
Case case9();

}  // namespace battflow
