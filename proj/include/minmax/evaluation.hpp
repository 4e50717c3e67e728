#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "minmax/array.hpp"
#include "minmax/nets.hpp"
#include "minmax/problems.hpp"

namespace minmax {

inline constexpr std::size_t kChebyshevCount = 50;
inline constexpr double kChebyshevHalfWidth = 6.0;
/// Default sample count and seed for out-of-sample evaluation.
inline constexpr std::size_t kEvaluationSamples = 100000;
inline constexpr std::uint64_t kEvaluationSeed = 0x5eed'e7a1ULL;

/// T_j(x / 6), first kind, by the three-term recurrence. Not clamped.
double chebyshev(std::size_t j, double x);

/// |mean g_j(a) - mean g_j(b)| for j = 1..50.
std::vector<double> chebyshev_moment_gaps(std::span<const double> a, std::span<const double> b);

/// Average of the 50 moment gaps, averaged again over the given pairs of
/// one-dimensional samples.
double marginal_error(const std::vector<std::vector<double>>& generated,
                      const std::vector<std::vector<double>>& target);

/// |mean g_j(x_from) (x_to - x_from)| for j = 1..50, on rows of `samples`.
std::vector<double> martingale_gaps(const Array& samples, std::size_t from, std::size_t to);
double martingale_error(const Array& samples, std::size_t from, std::size_t to);

struct FeasibilityReport {
  double marginal_error = 0.0;
  std::optional<double> martingale_error;
  /// One vector of 50 gaps per compared marginal coordinate.
  std::vector<std::vector<double>> marginal_gaps;
  std::vector<std::string> marginal_labels;
  std::vector<double> martingale_gaps;
  std::size_t samples = 0;
};

nlohmann::json to_json(const FeasibilityReport& r);

/// n generated samples from the evaluation streams of `seed`.
Array evaluation_samples(const GeneratorEnsemble& generator, const ProblemInstance& problem,
                         std::size_t n = kEvaluationSamples,
                         std::uint64_t seed = kEvaluationSeed);

/// Chebyshev errors of `generated` against fresh target draws. Every sampler
/// term contributes each coordinate of its image; martingale-type terms
/// (e = x_to - x_from, pi = x_from, analytic-zero mu-side) feed the
/// martingale error.
FeasibilityReport feasibility_report(const Array& generated, const ProblemInstance& problem,
                                     std::uint64_t seed = kEvaluationSeed);

/// Monte-Carlo estimate of int f d theta_T.
double objective_value(const Array& generated, const CostFunction& f);
double objective_value(const GeneratorEnsemble& generator, const ProblemInstance& problem,
                       std::size_t n = kEvaluationSamples, std::uint64_t seed = kEvaluationSeed);

}  // namespace minmax
