#include "battflow/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace battflow {

std::vector<BenchRecord> run_bench(const BenchConfig& cfg) {
  std::vector<BenchRecord> out;
  for (Index T : cfg.t_list)
    for (Index ny : cfg.ny_list)
      for (Backend backend : cfg.backends)
        for (Strategy strategy : cfg.strategies)
          for (int rep = 0; rep < cfg.repeats; ++rep) {
            Case c = cfg.base_case;
            ProfileSpec prof = cfg.profile;
            prof.step_hours = c.dt_hours;
            ensure_load_series(c, T, prof);
            if (ny > 0) add_stationary_storage(c, ny, strategy, cfg.storage);

            BenchRecord r;
            r.case_id = cfg.case_id;
            r.T = T;
            r.ny = ny;
            r.backend = to_string(backend);
            r.strategy = to_string(strategy);
            r.repeat = rep;
            try {
              Problem p = build_problem(c);
              SolverOptions opts;
              opts.backend = backend;
              opts.max_iter = cfg.max_iter;
              Solution sol = solve(p, opts);
              r.iterations = sol.iterations;
              r.kkt_total_s = sol.total_kkt_seconds();
              r.s_per_iter = sol.iterations > 0 ? r.kkt_total_s / sol.iterations : 0;
              r.funceval_s = sol.total_func_eval_seconds();
              r.peak_factor_nnz = sol.peak_factor_nnz;
              r.converged = sol.converged;
              r.objective = sol.objective;
            } catch (const std::exception&) {
              r.converged = false;  // cell failure recorded, sweep continues
            }
            out.push_back(std::move(r));
          }
  std::sort(out.begin(), out.end(), [](const BenchRecord& a, const BenchRecord& b) {
    return std::tie(a.case_id, a.T, a.ny, a.backend, a.strategy, a.repeat) <
           std::tie(b.case_id, b.T, b.ny, b.backend, b.strategy, b.repeat);
  });
  return out;
}

std::string bench_csv_header() {
  return "case,T,ny,backend,strategy,repeat,iterations,kkt_total_s,s_per_iter,"
         "funceval_s,peak_factor_nnz,converged,objective";
}

std::string to_csv_row(const BenchRecord& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.case_id << ',' << r.T << ',' << r.ny << ',' << r.backend << ',' << r.strategy << ','
     << r.repeat << ',' << r.iterations << ',' << r.kkt_total_s << ',' << r.s_per_iter << ','
     << r.funceval_s << ',' << r.peak_factor_nnz << ',' << (r.converged ? 1 : 0) << ','
     << r.objective;
  return os.str();
}

void write_bench_csv(const std::string& path, const std::vector<BenchRecord>& records) {
  std::ofstream out(path);
  out << bench_csv_header() << "\n";
  for (const auto& r : records) out << to_csv_row(r) << "\n";
}

void write_memory_csv(const std::string& path, const std::vector<BenchRecord>& records) {
  std::ofstream out(path);
  out << "case,T,ny,backend,strategy,repeat,peak_factor_nnz\n";
  for (const auto& r : records)
    out << r.case_id << ',' << r.T << ',' << r.ny << ',' << r.backend << ',' << r.strategy << ','
        << r.repeat << ',' << r.peak_factor_nnz << "\n";
}

void write_line_svg(const std::string& path, const std::string& title,
                    const std::vector<SvgSeries>& series, bool log_x, bool log_y) {
  const int width = 760, height = 520;
  const int ml = 70, mr = 20, mt = 40, mb = 50;

  Real xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
  auto tx = [log_x](Real v) { return log_x ? std::log10(std::max(v, Real(1e-12))) : v; };
  auto ty = [log_y](Real v) { return log_y ? std::log10(std::max(v, Real(1e-12))) : v; };
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (!(xmin < xmax)) {
    xmin -= 1;
    xmax += 1;
  }
  if (!(ymin < ymax)) {
    ymin -= 1;
    ymax += 1;
  }
  const Real xr = xmax - xmin, yr = ymax - ymin;
  auto px = [&](Real v) { return ml + (tx(v) - xmin) / xr * (width - ml - mr); };
  auto py = [&](Real v) { return height - mb - (ty(v) - ymin) / yr * (height - mt - mb); };

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const Real fx = xmin + xr * i / 4, fy = ymin + yr * i / 4;
    const Real vx = log_x ? std::pow(10, fx) : fx;
    const Real vy = log_y ? std::pow(10, fy) : fy;
    const Real gx = ml + (width - ml - mr) * i / 4.0;
    const Real gy = height - mb - (height - mt - mb) * i / 4.0;
    out << "<text x=\"" << gx << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << vx << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << vy << "</text>\n";
    out << "<line x1=\"" << gx << "\" y1=\"" << mt << "\" x2=\"" << gx << "\" y2=\""
        << height - mb << "\" stroke=\"#eeeeee\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << gy << "\" x2=\"" << width - mr << "\" y2=\"" << gy
        << "\" stroke=\"#eeeeee\"/>\n";
  }

  int legend_y = mt + 8;
  for (const auto& s : series) {
    if (s.x.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
          << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
    out << "<text x=\"" << width - mr - 150 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\""
        << s.color << "\">" << s.label << "</text>\n";
    legend_y += 14;
  }
  out << "</svg>\n";
}

void write_time_svg(const std::string& path, const std::vector<BenchRecord>& records,
                    const std::string& title) {
  const char* palette[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                           "#d35400", "#16a085", "#7f8c8d", "#2c3e50"};
  std::vector<SvgSeries> series;
  std::vector<std::pair<Index, std::string>> keys;
  for (const auto& r : records) {
    auto key = std::make_pair(r.T, r.backend);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  int ci = 0;
  for (const auto& [T, backend] : keys) {
    SvgSeries s;
    s.label = "T=" + std::to_string(T) + " " + backend;
    s.color = palette[ci++ % 8];
    // min over repeats/strategies per ny
    std::vector<std::pair<Real, Real>> pts;
    for (const auto& r : records) {
      if (r.T != T || r.backend != backend || !r.converged) continue;
      bool merged = false;
      for (auto& [x, y] : pts)
        if (x == static_cast<Real>(r.ny)) {
          y = std::min(y, static_cast<Real>(r.kkt_total_s));
          merged = true;
        }
      if (!merged) pts.emplace_back(r.ny, r.kkt_total_s);
    }
    std::sort(pts.begin(), pts.end());
    for (auto& [x, y] : pts) {
      s.x.push_back(std::max(x, Real(1)));  // log axis; ny=0 plotted at 1
      s.y.push_back(y);
    }
    series.push_back(std::move(s));
  }
  write_line_svg(path, title + " total KKT time vs n_y", series, true, true);
}

}  // namespace battflow
