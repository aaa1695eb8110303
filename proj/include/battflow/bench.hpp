#pragma once

#include <string>
#include <vector>

#include "battflow/solver.hpp"

namespace battflow {

struct BenchConfig {
  std::string case_id;
  Case base_case;  // loads/storage are regenerated per cell
  std::vector<Index> t_list = {24};
  std::vector<Index> ny_list = {1};
  std::vector<Backend> backends = {Backend::Schur, Backend::DirectLu};
  std::vector<Strategy> strategies = {Strategy::FirstLast};
  int repeats = 1;
  uint64_t seed = 1;
  StorageDefaults storage;  // V-A defaults
  ProfileSpec profile;
  int max_iter = 150;
};

struct BenchRecord {
  std::string case_id;
  Index T = 0;
  Index ny = 0;
  std::string backend;
  std::string strategy;
  int repeat = 0;
  int iterations = 0;
  double kkt_total_s = 0;
  double s_per_iter = 0;
  double funceval_s = 0;
  Index peak_factor_nnz = 0;
  bool converged = false;
  Real objective = 0;
};

/// One record per (T, ny, backend, strategy, repeat), generated in sorted
/// order; cells run strictly sequentially.
std::vector<BenchRecord> run_bench(const BenchConfig& cfg);

std::string bench_csv_header();
std::string to_csv_row(const BenchRecord& r);
void write_bench_csv(const std::string& path, const std::vector<BenchRecord>& records);
void write_memory_csv(const std::string& path, const std::vector<BenchRecord>& records);

/// Log-log total-KKT-time curves over n_y, one polyline per (T, backend).
void write_time_svg(const std::string& path, const std::vector<BenchRecord>& records,
                    const std::string& title);

/// Simple polyline plot (shared by the bench and solve reports).
struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<Real> x, y;
};
void write_line_svg(const std::string& path, const std::string& title,
                    const std::vector<SvgSeries>& series, bool log_x, bool log_y);

}  // namespace battflow
