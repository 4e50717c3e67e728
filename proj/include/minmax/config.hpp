#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "minmax/evaluation.hpp"
#include "minmax/objective.hpp"
#include "minmax/problems.hpp"
#include "minmax/trainer.hpp"

namespace minmax {

/// Invalid or unknown configuration content. Carries the JSON path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything needed to reproduce a set of training runs.
struct RunConfig {
  /// Either a preset name ("ot", "dcot", "mot", "w2") or "custom".
  std::string preset = "mot";
  /// The original problem JSON, kept for the config echo.
  nlohmann::json problem_json;
  ProblemInstance problem;
  NetworkConfig network;
  TrainConfig train;
  /// Table 1 shorthand, if one was applied ("base", "mixtures", ...).
  std::string setting;
  std::vector<std::uint64_t> seeds{0};
  std::size_t stability_window = 5000;
  std::size_t evaluation_samples = kEvaluationSamples;
  std::uint64_t evaluation_seed = kEvaluationSeed;
  std::filesystem::path output;
  std::string label;
};

Distribution1D distribution_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const Distribution1D& d);

/// Preset by name or a full problem specification.
ProblemInstance problem_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProblemInstance& p);

nlohmann::json to_json(const RegularizationConfig& r);
RegularizationConfig regularization_from_json(const nlohmann::json& j);

/// Applies a Table 1 shorthand: base (U=0, c=1), mixtures (c=5),
/// unrolling (U=5), combined (U=5, c=5).
void apply_setting(TrainConfig& cfg, const std::string& setting);

/// Preset defaults for training (regularization, N, windows) before any
/// user overrides.
void apply_preset_defaults(RunConfig& rc);

/// Parses a run configuration. Unknown keys anywhere are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
/// The fully resolved configuration, re-parseable by run_config_from_json.
nlohmann::json to_json(const RunConfig& rc);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace minmax
