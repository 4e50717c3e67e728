#include "minmax/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace minmax {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string trace_header(std::size_t terms) {
  std::string h = "iter,phi,cost_term";
  for (std::size_t j = 1; j <= terms; ++j) h += ",constraint_" + std::to_string(j);
  for (std::size_t j = 1; j <= terms; ++j) h += ",penalty_" + std::to_string(j);
  return h + ",running_return";
}

std::string trace_line(const TraceRow& row) {
  std::string s = std::to_string(row.iter);
  s += ',' + format_double(row.phi);
  s += ',' + format_double(row.cost_term);
  for (double v : row.constraint) s += ',' + format_double(v);
  for (double v : row.penalty) s += ',' + format_double(v);
  s += ',' + format_double(row.running_return);
  return s;
}

void write_trace_csv(const fs::path& path, const std::vector<TraceRow>& rows, std::size_t terms) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << trace_header(terms) << '\n';
  for (const auto& r : rows) out << trace_line(r) << '\n';
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("bad number '" + s + "' in trace");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<TraceRow> read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty trace");
  const auto header = split(line);
  if (header.size() < 4 || header.front() != "iter" || header.back() != "running_return" ||
      (header.size() - 4) % 2 != 0) {
    throw std::runtime_error(path.string() + ": unexpected trace header");
  }
  const std::size_t terms = (header.size() - 4) / 2;
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ": ragged row at iteration " + cells.front());
    }
    TraceRow r;
    r.iter = std::stoull(cells[0]);
    r.phi = parse_double(cells[1]);
    r.cost_term = parse_double(cells[2]);
    for (std::size_t j = 0; j < terms; ++j) r.constraint.push_back(parse_double(cells[3 + j]));
    for (std::size_t j = 0; j < terms; ++j) r.penalty.push_back(parse_double(cells[3 + terms + j]));
    r.running_return = parse_double(cells.back());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string run_label(const RunConfig& rc) {
  if (!rc.label.empty()) return rc.label;
  std::string s = rc.preset;
  if (rc.preset == "w2") s += "_d" + std::to_string(rc.problem.dim / 2);
  if (!rc.setting.empty()) s += "_" + rc.setting;
  s += "_" + to_string(rc.train.regularization.mode);
  s += "_ninf" + std::to_string(rc.train.inner_steps);
  return s;
}

json summary_json(const RunConfig& rc, const RunOutcome& out) {
  json j = {{"label", run_label(rc)},
            {"seed", out.seed},
            {"status", out.status},
            {"value", out.reported_value},
            {"objective_value", out.objective_value},
            {"report_sign", rc.problem.report_sign},
            {"algorithm_value", out.algorithm_value},
            {"stability", out.stability},
            {"stability_window", rc.stability_window},
            {"wall_clock_seconds", out.wall_clock_seconds},
            {"config", to_json(rc)},
            {"problem", to_json(rc.problem)}};
  if (out.feasibility) {
    j["feasibility"] = to_json(*out.feasibility);
  } else {
    j["feasibility"] = nullptr;
  }
  if (!out.completed()) {
    j["abort"] = {{"iteration", out.abort_iteration}, {"message", out.abort_message}};
  }
  return j;
}

RunOutcome run_seed(const RunConfig& rc, std::uint64_t seed, const fs::path& dir,
                    const std::function<void(const TraceRow&)>& on_row) {
  fs::create_directories(dir);
  RunOutcome out;
  out.seed = seed;
  out.dir = dir;

  TrainConfig cfg = rc.train;
  cfg.seed = seed;
  const std::size_t terms = rc.problem.terms.size();

  std::ofstream trace(dir / "trace.csv");
  if (!trace) throw std::runtime_error("cannot write " + (dir / "trace.csv").string());
  trace << trace_header(terms) << '\n';
  auto record = [&](const TraceRow& row) {
    if (row.iter % cfg.trace_stride == 0 || row.iter == cfg.iterations) {
      trace << trace_line(row) << '\n';
    }
    if (on_row) on_row(row);
  };

  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(rc.problem, make_networks(rc.problem, rc.network, cfg.mixtures, seed), cfg);
  try {
    trainer.run(record);
  } catch (const TrainingAborted& e) {
    out.status = "aborted";
    out.abort_iteration = e.iteration;
    out.abort_message = e.what();
  } catch (const NumericError& e) {
    out.status = "aborted";
    out.abort_iteration = trainer.iteration() + 1;
    out.abort_message = e.what();
  }
  trace.close();
  const auto& phi = trainer.phi_history();
  if (!phi.empty()) {
    out.algorithm_value = trainer.running_return().back();
    out.stability = stability_metric(phi, rc.stability_window);
  }

  if (out.completed()) {
    const Networks& nets = trainer.networks();
    const Array samples = evaluation_samples(nets.generator, rc.problem, rc.evaluation_samples,
                                             rc.evaluation_seed);
    out.objective_value = objective_value(samples, rc.problem.cost);
    out.reported_value = rc.problem.report_sign * out.objective_value;
    out.feasibility = feasibility_report(samples, rc.problem, rc.evaluation_seed);
    save_checkpoint(dir / "checkpoint.json", nets.generator, nets.discriminators);
  } else {
    out.objective_value = out.reported_value = std::nan("");
  }
  out.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ofstream summary(dir / "summary.json");
  summary << summary_json(rc, out).dump(2) << '\n';
  return out;
}

std::vector<RunOutcome> run_all(const RunConfig& rc, const fs::path& root, std::size_t workers) {
  const std::size_t n = rc.seeds.size();
  std::vector<RunOutcome> outcomes(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      const std::uint64_t seed = rc.seeds[k];
      try {
        outcomes[k] = run_seed(rc, seed, root / ("seed_" + std::to_string(seed)));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outcomes;
}

}  // namespace minmax
