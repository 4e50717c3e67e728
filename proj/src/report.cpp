#include "minmax/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "minmax/runner.hpp"

namespace minmax {

namespace fs = std::filesystem;
using nlohmann::json;

double trace_stability(const fs::path& trace, std::size_t window) {
  const auto rows = read_trace_csv(trace);
  if (rows.empty()) return 0.0;
  const std::size_t last = rows.back().iter;
  std::vector<double> phi;
  for (const auto& r : rows) {
    if (r.iter + window > last) phi.push_back(r.phi);
  }
  return stability_metric(phi, phi.size());
}

std::size_t median_index(const std::vector<double>& key) {
  if (key.empty()) throw std::invalid_argument("median of an empty set");
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  // NaN keys sort last so a diverged run is never the median by accident.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na = std::isnan(key[a]), nb = std::isnan(key[b]);
    if (na != nb) return nb;
    return !na && key[a] < key[b];
  });
  return order[(key.size() - 1) / 2];
}

namespace {

double number_or_nan(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nan("");
  return j[key].get<double>();
}

}  // namespace

RunRecord load_run(const fs::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) throw std::runtime_error("missing summary.json");
  json s;
  try {
    in >> s;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("unreadable summary.json: ") + e.what());
  }
  RunRecord r;
  r.dir = dir;
  r.label = s.value("label", std::string());
  r.seed = s.value("seed", std::uint64_t{0});
  r.status = s.value("status", std::string("unknown"));
  r.value = number_or_nan(s, "value");
  r.stability_window = s.value("stability_window", std::size_t{5000});
  if (s.contains("feasibility") && s["feasibility"].is_object()) {
    const json& f = s["feasibility"];
    r.marginal_error = number_or_nan(f, "marginal_error");
    if (f.contains("martingale_error") && !f["martingale_error"].is_null()) {
      r.martingale_error = f["martingale_error"].get<double>();
    }
  } else {
    r.marginal_error = std::nan("");
  }
  if (!fs::exists(dir / "trace.csv")) throw std::runtime_error("missing trace.csv");
  const auto rows = read_trace_csv(dir / "trace.csv");
  for (const auto& row : rows) {
    r.iterations.push_back(static_cast<double>(row.iter));
    r.running_return.push_back(row.running_return);
  }
  r.stability = trace_stability(dir / "trace.csv", r.stability_window);
  return r;
}

std::vector<fs::path> expand_run_dirs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    if (fs::exists(p / "summary.json") || fs::exists(p / "trace.csv") || !fs::is_directory(p)) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0) {
        children.push_back(e.path());
      }
    }
    if (children.empty()) {
      out.push_back(p);
      continue;
    }
    std::sort(children.begin(), children.end());
    out.insert(out.end(), children.begin(), children.end());
  }
  return out;
}

Report build_report(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("report needs at least one run directory");
  Report rep;
  for (const auto& d : run_dirs) {
    try {
      rep.runs.push_back(load_run(d));
    } catch (const std::exception& e) {
      rep.missing.push_back(d.string() + ": " + e.what());
    }
  }
  // Labels in order of first appearance; runs within a label in seed order.
  std::vector<std::string> labels;
  for (const auto& r : rep.runs) {
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  }
  for (const auto& label : labels) {
    std::vector<const RunRecord*> members;
    for (const auto& r : rep.runs) {
      if (r.label == label) members.push_back(&r);
    }
    std::stable_sort(members.begin(), members.end(),
                     [](const RunRecord* a, const RunRecord* b) { return a->seed < b->seed; });
    AggregateRow row;
    row.label = label;
    std::vector<double> stab;
    double mart = 0.0;
    std::size_t mart_count = 0;
    for (const RunRecord* r : members) {
      stab.push_back(r->stability);
      if (r->status != "completed") {
        ++row.aborted;
        continue;
      }
      ++row.runs;
      row.value += r->value;
      row.marginal_error += r->marginal_error;
      row.stability += r->stability;
      if (r->martingale_error) {
        mart += *r->martingale_error;
        ++mart_count;
      }
    }
    if (row.runs > 0) {
      const double n = static_cast<double>(row.runs);
      row.value /= n;
      row.marginal_error /= n;
      row.stability /= n;
    } else {
      row.value = row.marginal_error = row.stability = std::nan("");
    }
    if (mart_count > 0) row.martingale_error = mart / static_cast<double>(mart_count);
    row.median_run = members[median_index(stab)]->dir;
    rep.rows.push_back(row);
  }
  return rep;
}

std::string aggregate_csv(const Report& report) {
  std::string s = "label,runs,aborted,value,marginal_error,martingale_error,stability,median_run\n";
  for (const auto& r : report.rows) {
    s += r.label + ',' + std::to_string(r.runs) + ',' + std::to_string(r.aborted) + ',' +
         format_double(r.value) + ',' + format_double(r.marginal_error) + ',' +
         (r.martingale_error ? format_double(*r.martingale_error) : std::string()) + ',' +
         format_double(r.stability) + ',' + r.median_run.generic_string() + '\n';
  }
  return s;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Tick step of the form {1, 2, 5} x 10^k giving about five ticks.
double nice_step(double span) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

int tick_digits(double step) {
  return std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
}

}  // namespace

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label) {
  constexpr double W = 640, H = 400, left = 80, right = 20, top = 40, bottom = 60;
  double x0 = HUGE_VAL, x1 = -HUGE_VAL, y0 = HUGE_VAL, y1 = -HUGE_VAL;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
    << top + ph << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";

  const double xs = nice_step(x1 - x0), ys = nice_step(y1 - y0);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9 * xs; t += xs) {
    o << "<line x1=\"" << fixed(px(t), 1) << "\" y1=\"" << top + ph << "\" x2=\"" << fixed(px(t), 1)
      << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>";
    o << "<text x=\"" << fixed(px(t), 1) << "\" y=\"" << top + ph + 18
      << "\" text-anchor=\"middle\" font-size=\"11\">" << fixed(t, tick_digits(xs)) << "</text>\n";
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9 * ys; t += ys) {
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << fixed(py(t), 1) << "\" x2=\"" << left
      << "\" y2=\"" << fixed(py(t), 1) << "\" stroke=\"black\"/>";
    o << "<text x=\"" << left - 8 << "\" y=\"" << fixed(py(t) + 4, 1)
      << "\" text-anchor=\"end\" font-size=\"11\">" << fixed(t, tick_digits(ys)) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\" font-size=\"13\">" << escape_xml(x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 18 " << top + ph / 2 << ")\">" << escape_xml(y_label) << "</text>\n";

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"1\" points=\"";
    // Thin to at most ~2000 vertices; the last point is always kept.
    const std::size_t n = std::min(s.x.size(), s.y.size());
    const std::size_t stride = std::max<std::size_t>(1, n / 2000);
    bool first = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % stride != 0 && i + 1 != n) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << (first ? "" : " ") << fixed(px(s.x[i]), 2) << ',' << fixed(py(s.y[i]), 2);
      first = false;
    }
    o << "\"><title>" << escape_xml(s.name) << "</title></polyline>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_report(const Report& report, const fs::path& out) {
  fs::create_directories(out);
  {
    std::ofstream f(out / "aggregate.csv");
    f << aggregate_csv(report);
  }
  json j = {{"rows", json::array()}, {"runs", json::array()}, {"missing", report.missing}};
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"label", r.label},
                         {"runs", r.runs},
                         {"aborted", r.aborted},
                         {"value", r.value},
                         {"marginal_error", r.marginal_error},
                         {"martingale_error", r.martingale_error ? json(*r.martingale_error) : json()},
                         {"stability", r.stability},
                         {"median_run", r.median_run.generic_string()}});
  }
  for (const auto& r : report.runs) {
    j["runs"].push_back({{"dir", r.dir.generic_string()},
                         {"label", r.label},
                         {"seed", r.seed},
                         {"status", r.status},
                         {"value", r.value},
                         {"stability", r.stability}});
    const std::string name = r.label + "_seed_" + std::to_string(r.seed) + ".svg";
    std::ofstream f(out / name);
    f << svg_line_plot({{"seed " + std::to_string(r.seed), r.iterations, r.running_return}},
                       r.label + " (seed " + std::to_string(r.seed) + ")", "iteration",
                       "running return");
  }
  for (const auto& row : report.rows) {
    for (const auto& r : report.runs) {
      if (r.dir != row.median_run) continue;
      std::ofstream f(out / (row.label + "_median.svg"));
      f << svg_line_plot({{"median run", r.iterations, r.running_return}},
                         row.label + " (median run, seed " + std::to_string(r.seed) + ")",
                         "iteration", "running return");
    }
  }
  std::ofstream f(out / "report.json");
  f << j.dump(2) << '\n';
}

}  // namespace minmax
