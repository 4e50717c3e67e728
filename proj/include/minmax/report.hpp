#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace minmax {

/// One run directory as seen by the report.
struct RunRecord {
  std::filesystem::path dir;
  std::string label;
  std::uint64_t seed = 0;
  std::string status;
  double value = 0.0;
  double marginal_error = 0.0;
  std::optional<double> martingale_error;
  /// Recomputed from trace.csv over the trailing window.
  double stability = 0.0;
  std::size_t stability_window = 0;
  std::vector<double> iterations;
  std::vector<double> running_return;
};

/// Table 1 columns, averaged over the completed runs of one label.
struct AggregateRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t aborted = 0;
  double value = 0.0;
  double marginal_error = 0.0;
  std::optional<double> martingale_error;
  double stability = 0.0;
  /// Directory of the run with median stability.
  std::filesystem::path median_run;
};

struct Report {
  std::vector<RunRecord> runs;
  std::vector<AggregateRow> rows;
  /// Directories whose trace.csv or summary.json is missing or unreadable.
  std::vector<std::string> missing;
};

/// Std dev of phi over rows with iter > last_iter - window, from trace.csv.
double trace_stability(const std::filesystem::path& trace, std::size_t window);

/// Index of the median by `key`, the lower one for an even count.
std::size_t median_index(const std::vector<double>& key);

RunRecord load_run(const std::filesystem::path& dir);

/// Expands directories that contain run directories (seed_*) one level.
std::vector<std::filesystem::path> expand_run_dirs(const std::vector<std::filesystem::path>& inputs);

/// Loads the runs and aggregates them by label. Throws on an empty input set.
Report build_report(const std::vector<std::filesystem::path>& run_dirs);

std::string aggregate_csv(const Report& report);

/// Line plot of one or more series, with axis labels and tick values.
struct Series {
  std::string name;
  std::vector<double> x, y;
};
std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label);

/// Writes aggregate.csv, report.json, one running-return SVG per run and a
/// median-run SVG per label into `out`.
void write_report(const Report& report, const std::filesystem::path& out);

}  // namespace minmax
