#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "battflow/bench.hpp"
#include "battflow/evgen.hpp"
#include "battflow/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace battflow;

namespace {

void apply_thread_env() {
  int threads = 1;
  if (const char* env = std::getenv("BATTFLOW_THREADS")) threads = std::max(1, std::atoi(env));
  Eigen::setNbThreads(threads);
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return json::parse(in);
}

Case load_case(const std::string& path, const std::string& merge_path) {
  if (!fs::exists(path)) {
    std::cerr << "case not found: " << path << "\n";
    std::exit(2);
  }
  json doc = load_json(path);
  if (!merge_path.empty()) {
    if (!fs::exists(merge_path)) {
      std::cerr << "fragment not found: " << merge_path << "\n";
      std::exit(2);
    }
    doc = merge_fragment(doc, load_json(merge_path));
  }
  Case c = parse_case(doc);
  if (c.name == "case") c.name = fs::path(path).stem().string();
  return c;
}

Real parse_dt(const std::string& text) {
  // "15min", "7.5min", "1h", "0.25h"
  std::string s = text;
  Real scale = 1.0;
  if (s.size() > 3 && s.substr(s.size() - 3) == "min") {
    scale = 1.0 / 60.0;
    s = s.substr(0, s.size() - 3);
  } else if (!s.empty() && s.back() == 'h') {
    s = s.substr(0, s.size() - 1);
  }
  return std::stod(s) * scale;
}

json solution_report(const Problem& p, const Solution& sol) {
  json doc;
  doc["converged"] = sol.converged;
  doc["termination"] = sol.termination;
  doc["iterations"] = sol.iterations;
  doc["objective"] = sol.objective;
  doc["kkt_residuals"] = {{"feas_eq", sol.feas_g},
                          {"feas_ineq", sol.feas_h},
                          {"gradient", sol.grad},
                          {"complementarity", sol.comp}};
  doc["timing_s"] = {{"kkt_solve", sol.total_kkt_seconds()},
                     {"function_eval", sol.total_func_eval_seconds()}};
  doc["peak_factor_nnz"] = sol.peak_factor_nnz;

  const VarLayout& v = p.vars;
  auto series = [&](VarGroup grp, Index count) {
    json rows = json::array();
    for (Index k = 0; k < count; ++k) {
      json row = json::array();
      for (Index t = 0; t < v.T; ++t) row.push_back(sol.x[p.vars.global(t, grp, k)]);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  doc["vm"] = series(VarGroup::Vm, v.nb);
  doc["va"] = series(VarGroup::Theta, v.nb);
  doc["pg_mw"] = json::array();
  for (Index g = 0; g < v.ng; ++g) {
    json row = json::array();
    for (Index t = 0; t < v.T; ++t)
      row.push_back(sol.x[p.vars.global(t, VarGroup::Pg, g)] * p.net.base_mva);
    doc["pg_mw"].push_back(std::move(row));
  }
  if (v.ny > 0) {
    doc["soc"] = series(VarGroup::Soc, v.ny);
    doc["pch_mw"] = json::array();
    doc["pdch_mw"] = json::array();
    for (Index i = 0; i < v.ny; ++i) {
      json ch = json::array(), dch = json::array();
      for (Index t = 0; t < v.T; ++t) {
        ch.push_back(sol.x[p.vars.global(t, VarGroup::Pch, i)] * p.net.base_mva);
        dch.push_back(sol.x[p.vars.global(t, VarGroup::Pdch, i)] * p.net.base_mva);
      }
      doc["pch_mw"].push_back(std::move(ch));
      doc["pdch_mw"].push_back(std::move(dch));
    }
  }
  return doc;
}

void write_profile_svg(const std::string& path, const Problem& p, const Solution& sol) {
  const VarLayout& v = p.vars;
  SvgSeries load{"total load MW", "#2c3e50", {}, {}};
  SvgSeries gen{"total generation MW", "#2980b9", {}, {}};
  SvgSeries charge{"storage net charge MW", "#27ae60", {}, {}};
  SvgSeries soc{"mean SOC x100", "#c0392b", {}, {}};
  for (Index t = 0; t < v.T; ++t) {
    Real pg = 0, ch = 0, s = 0;
    for (Index g = 0; g < v.ng; ++g) pg += sol.x[v.global(t, VarGroup::Pg, g)];
    for (Index i = 0; i < v.ny; ++i) {
      ch += sol.x[v.global(t, VarGroup::Pch, i)] - sol.x[v.global(t, VarGroup::Pdch, i)];
      s += sol.x[v.global(t, VarGroup::Soc, i)];
    }
    load.x.push_back(t);
    load.y.push_back(p.net.pd.col(t).sum());
    gen.x.push_back(t);
    gen.y.push_back(pg * p.net.base_mva);
    charge.x.push_back(t);
    charge.y.push_back(ch * p.net.base_mva);
    soc.x.push_back(t);
    soc.y.push_back(v.ny > 0 ? 100 * s / static_cast<Real>(v.ny) : 0);
  }
  write_line_svg(path, "loads, generation and storage operation",
                 {load, gen, charge, soc}, false, false);
}

int cmd_solve(const std::string& case_path, const std::string& merge_path,
              const std::string& ev_config, Index T, Index ny, const std::string& strategy,
              const std::string& backend, uint64_t seed, const std::string& out_dir, bool svg,
              int max_iter, const std::string& dt_text) {
  Case c = load_case(case_path, merge_path);
  if (!dt_text.empty()) c.dt_hours = parse_dt(dt_text);
  if (T == 0 && !dt_text.empty()) T = static_cast<Index>(std::lround(24.0 / c.dt_hours));
  if (T > 0 && T != c.horizon()) {
    ProfileSpec prof;
    prof.step_hours = c.dt_hours;
    if (!ev_config.empty()) prof.start_hour = 12.0;  // EV window runs noon to noon
    ensure_load_series(c, T, prof);
  }

  if (!ev_config.empty()) {
    EvGenParams params = EvGenParams::from_json(load_json(ev_config));
    params.T = c.horizon();
    params.dt_hours = c.dt_hours;
    params.seed = seed;
    EvFleet fleet = generate_ev_schedules(params);
    json frag = fleet_to_fragment(fleet);
    IVec rows = distribute_storage(c, params.n_ev, strategy_from_string(strategy));
    for (Index i = 0; i < params.n_ev; ++i)
      frag["batt"][static_cast<size_t>(i)][battcol::BUS] = c.bus(rows[i], buscol::ID);
    c = parse_case(merge_fragment(serialize_case(c), frag));
  } else if (ny > 0) {
    add_stationary_storage(c, ny, strategy_from_string(strategy));
  }

  Problem p = build_problem(c);
  SolverOptions opts;
  opts.backend = backend_from_string(backend);
  opts.max_iter = max_iter;
  Solution sol = solve(p, opts);

  fs::create_directories(out_dir);
  json report = solution_report(p, sol);
  std::ofstream(fs::path(out_dir) / "solution.json") << report.dump(1) << "\n";
  if (svg) write_profile_svg((fs::path(out_dir) / "profile.svg").string(), p, sol);

  std::cout << "case " << c.name << "  T=" << c.horizon() << "  ny=" << c.n_batt() << "  backend="
            << backend << "\n"
            << (sol.converged ? "converged" : ("failed: " + sol.termination)) << " in "
            << sol.iterations << " iterations, objective " << sol.objective << "\n"
            << "report: " << (fs::path(out_dir) / "solution.json").string() << "\n";
  if (!sol.converged) {
    std::cerr << "solver did not converge (" << sol.termination << ")\n";
    return 1;
  }
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(conv(item));
  return out;
}

int cmd_bench(const std::string& case_path, const std::string& t_csv, const std::string& ny_csv,
              const std::string& backends_csv, const std::string& strategies_csv, int repeats,
              uint64_t seed, const std::string& out_dir, int max_iter) {
  BenchConfig cfg;
  cfg.base_case = load_case(case_path, "");
  cfg.case_id = cfg.base_case.name;
  cfg.t_list = parse_list<Index>(
      t_csv, +[](const std::string& s) { return static_cast<Index>(std::stoi(s)); });
  cfg.ny_list = parse_list<Index>(
      ny_csv, +[](const std::string& s) { return static_cast<Index>(std::stoi(s)); });
  cfg.backends =
      parse_list<Backend>(backends_csv, +[](const std::string& s) { return backend_from_string(s); });
  cfg.strategies = parse_list<Strategy>(
      strategies_csv, +[](const std::string& s) { return strategy_from_string(s); });
  cfg.repeats = repeats;
  cfg.seed = seed;
  cfg.max_iter = max_iter;
  if (cfg.t_list.empty() || cfg.ny_list.empty() || cfg.backends.empty() ||
      cfg.strategies.empty()) {
    std::cerr << "bench: empty sweep list\n";
    return 1;
  }

  std::vector<BenchRecord> records = run_bench(cfg);
  fs::create_directories(out_dir);
  write_bench_csv((fs::path(out_dir) / "results.csv").string(), records);
  write_memory_csv((fs::path(out_dir) / "memory.csv").string(), records);
  write_time_svg((fs::path(out_dir) / (cfg.case_id + "_time.svg")).string(), records, cfg.case_id);

  int failures = 0;
  for (const auto& r : records)
    if (!r.converged) ++failures;
  std::cout << records.size() << " cells, " << failures << " unconverged; results in " << out_dir
            << "\n";
  return 0;
}

int cmd_evgen(const std::string& ev_config, Index n_ev, const std::string& dt_text, uint64_t seed,
              const std::string& out_path, const std::string& case_path,
              const std::string& strategy) {
  EvGenParams params;
  if (!ev_config.empty()) params = EvGenParams::from_json(load_json(ev_config));
  if (n_ev > 0) params.n_ev = n_ev;
  if (!dt_text.empty()) {
    params.dt_hours = parse_dt(dt_text);
    params.T = static_cast<Index>(std::lround(24.0 / params.dt_hours));
  }
  params.seed = seed;
  EvFleet fleet = generate_ev_schedules(params);
  json frag = fleet_to_fragment(fleet);
  if (!case_path.empty()) {
    Case host = load_case(case_path, "");
    IVec rows = distribute_storage(host, params.n_ev, strategy_from_string(strategy));
    for (Index i = 0; i < params.n_ev; ++i)
      frag["batt"][static_cast<size_t>(i)][battcol::BUS] = host.bus(rows[i], buscol::ID);
  }
  std::ofstream(out_path) << frag.dump() << "\n";
  std::cout << "wrote " << params.n_ev << " EV schedules (T=" << params.T << ", dt="
            << params.dt_hours << " h) to " << out_path << "\n";
  return 0;
}

int cmd_validate(const std::string& case_path, const std::string& merge_path) {
  try {
    Case c = load_case(case_path, merge_path);
    std::cout << "valid: " << c.name << " (n_b=" << c.n_bus() << ", n_l=" << c.n_branch()
              << ", n_g=" << c.n_gen() << ", n_y=" << c.n_batt() << ", T=" << c.horizon()
              << ")\n";
    return 0;
  } catch (const CaseError& e) {
    std::cerr << "invalid case: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"multi-period AC optimal power flow with storage"};
  app.require_subcommand(1);

  std::string case_path, merge_path, ev_config, out_dir = ".", out_file = "fragment.json";
  std::string strategy = "first-last", backend = "schur", dt_text;
  std::string t_csv = "24", ny_csv = "1", backends_csv = "schur,direct-lu",
              strategies_csv = "first-last";
  Index T = 0, ny = 0, n_ev = 0;
  uint64_t seed = 1;
  int repeats = 1, max_iter = 150;
  bool svg = false;

  auto* s = app.add_subcommand("solve", "solve one case and write a solution report");
  s->add_option("--case", case_path, "case file (*.battcase.json)")->required();
  s->add_option("--merge", merge_path, "storage/EV fragment to merge");
  s->add_option("--ev-config", ev_config, "EvGenParams JSON; generates and merges a fleet");
  s->add_option("--T", T, "horizon (re-synthesises loads when it differs)");
  s->add_option("--ny", ny, "number of stationary storage devices to add");
  s->add_option("--strategy", strategy, "first-last|last-first|load-bus|fair-dist");
  s->add_option("--backend", backend, "schur|direct-lu");
  s->add_option("--seed", seed, "seed for EV generation");
  s->add_option("--out", out_dir, "output directory");
  s->add_option("--max-iter", max_iter, "iteration cap");
  s->add_option("--dt", dt_text, "step length, e.g. 15min (EV runs)");
  s->add_flag("--svg", svg, "also write profile.svg");

  auto* b = app.add_subcommand("bench", "sweep (T, ny, backend, strategy) and write CSV/SVG");
  b->add_option("--case", case_path)->required();
  b->add_option("--T", t_csv, "comma-separated horizons");
  b->add_option("--ny", ny_csv, "comma-separated device counts");
  b->add_option("--backends", backends_csv);
  b->add_option("--strategies", strategies_csv);
  b->add_option("--repeats", repeats);
  b->add_option("--seed", seed);
  b->add_option("--out", out_dir);
  b->add_option("--max-iter", max_iter);

  auto* e = app.add_subcommand("evgen", "generate an EV schedule fragment");
  e->add_option("--ev-config", ev_config, "EvGenParams JSON");
  e->add_option("--n-ev", n_ev);
  e->add_option("--dt", dt_text, "step length, e.g. 15min or 1h");
  e->add_option("--seed", seed);
  e->add_option("--case", case_path, "host case: assigns fleet buses by --strategy");
  e->add_option("--strategy", strategy);
  e->add_option("--out", out_file, "fragment path");

  auto* v = app.add_subcommand("validate", "parse and validate a case document");
  v->add_option("--case", case_path)->required();
  v->add_option("--merge", merge_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed())
      return cmd_solve(case_path, merge_path, ev_config, T, ny, strategy, backend, seed, out_dir,
                       svg, max_iter, dt_text);
    if (b->parsed())
      return cmd_bench(case_path, t_csv, ny_csv, backends_csv, strategies_csv, repeats, seed,
                       out_dir, max_iter);
    if (e->parsed()) return cmd_evgen(ev_config, n_ev, dt_text, seed, out_file, case_path, strategy);
    if (v->parsed()) return cmd_validate(case_path, merge_path);
  } catch (const CaseError& err) {
    std::cerr << "case error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
