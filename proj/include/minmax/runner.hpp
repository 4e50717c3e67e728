#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "minmax/config.hpp"
#include "minmax/evaluation.hpp"
#include "minmax/trainer.hpp"

namespace minmax {

/// Shortest round-trip decimal form of x ("nan", "inf", "-inf" otherwise).
std::string format_double(double x);

/// Trace CSV with header iter,phi,cost_term,constraint_1..,penalty_1..,running_return.
std::string trace_header(std::size_t terms);
std::string trace_line(const TraceRow& row);
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows,
                     std::size_t terms);
std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path);

struct RunOutcome {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  /// "completed" or "aborted"
  std::string status = "completed";
  /// Algorithm output: mean of the last N_r values of phi.
  double algorithm_value = 0.0;
  /// Monte-Carlo estimate of int f d theta_T on the evaluation streams.
  double objective_value = 0.0;
  /// report_sign times objective_value.
  double reported_value = 0.0;
  /// Standard deviation of phi over the trailing stability window.
  double stability = 0.0;
  double wall_clock_seconds = 0.0;
  std::optional<FeasibilityReport> feasibility;
  std::size_t abort_iteration = 0;
  std::string abort_message;

  bool completed() const { return status == "completed"; }
};

/// Label used to group runs in reports.
std::string run_label(const RunConfig& rc);

nlohmann::json summary_json(const RunConfig& rc, const RunOutcome& out);

/// Trains one seed and writes trace.csv, summary.json and checkpoint.json
/// into `dir`. A numeric abort is recorded in the summary, not thrown.
RunOutcome run_seed(const RunConfig& rc, std::uint64_t seed, const std::filesystem::path& dir,
                    const std::function<void(const TraceRow&)>& on_row = {});

/// Runs every seed of `rc` under root/seed_<k>, `workers` at a time.
/// Results are ordered by seed regardless of completion order.
std::vector<RunOutcome> run_all(const RunConfig& rc, const std::filesystem::path& root,
                                std::size_t workers);

}  // namespace minmax
