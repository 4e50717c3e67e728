#include "minmax/evaluation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace minmax {
namespace {

constexpr std::uint64_t kLatentStream = 1000;
constexpr std::uint64_t kRoutingStream = 1001;
constexpr std::uint64_t kTargetStream = 1100;

// Accumulates sum_i g_j(x_i) w_i for j = 1..50 in one pass.
void accumulate(std::vector<double>& acc, double x, double w) {
  const double u = x / kChebyshevHalfWidth;
  double prev = 1.0, cur = u;
  for (std::size_t j = 1; j <= kChebyshevCount; ++j) {
    acc[j - 1] += cur * w;
    const double next = 2.0 * u * cur - prev;
    prev = cur;
    cur = next;
  }
}

std::vector<double> moments(std::span<const double> xs) {
  std::vector<double> m(kChebyshevCount, 0.0);
  for (double x : xs) accumulate(m, x, 1.0);
  for (double& v : m) v /= static_cast<double>(xs.size());
  return m;
}

bool is_martingale_term(const ConstraintTerm& t) {
  return t.target.kind == TargetSide::Kind::analytic_zero &&
         t.weight.kind == TermWeight::Kind::difference &&
         t.projection.kind == Projection::Kind::coordinates && t.projection.indices.size() == 1 &&
         t.projection.indices[0] == t.weight.from;
}

}  // namespace

double chebyshev(std::size_t j, double x) {
  const double u = x / kChebyshevHalfWidth;
  if (j == 0) return 1.0;
  double prev = 1.0, cur = u;
  for (std::size_t k = 1; k < j; ++k) {
    const double next = 2.0 * u * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

std::vector<double> chebyshev_moment_gaps(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("moment gaps need nonempty samples");
  const auto ma = moments(a), mb = moments(b);
  std::vector<double> gaps(kChebyshevCount);
  for (std::size_t j = 0; j < kChebyshevCount; ++j) gaps[j] = std::abs(ma[j] - mb[j]);
  return gaps;
}

double marginal_error(const std::vector<std::vector<double>>& generated,
                      const std::vector<std::vector<double>>& target) {
  if (generated.size() != target.size() || generated.empty()) {
    throw std::invalid_argument("marginal error needs matching, nonempty marginal lists");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    double acc = 0.0;
    for (double g : chebyshev_moment_gaps(generated[i], target[i])) acc += g;
    total += acc / static_cast<double>(kChebyshevCount);
  }
  return total / static_cast<double>(generated.size());
}

std::vector<double> martingale_gaps(const Array& samples, std::size_t from, std::size_t to) {
  const std::size_t n = samples.rows();
  if (n == 0 || from >= samples.cols() || to >= samples.cols()) {
    throw std::invalid_argument("martingale error needs samples with both coordinates");
  }
  std::vector<double> m(kChebyshevCount, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    accumulate(m, samples(i, from), samples(i, to) - samples(i, from));
  }
  for (double& v : m) v = std::abs(v / static_cast<double>(n));
  return m;
}

double martingale_error(const Array& samples, std::size_t from, std::size_t to) {
  double acc = 0.0;
  for (double g : martingale_gaps(samples, from, to)) acc += g;
  return acc / static_cast<double>(kChebyshevCount);
}

nlohmann::json to_json(const FeasibilityReport& r) {
  nlohmann::json j = {{"marginal_error", r.marginal_error},
                      {"samples", r.samples},
                      {"marginal_labels", r.marginal_labels},
                      {"marginal_gaps", r.marginal_gaps}};
  if (r.martingale_error) {
    j["martingale_error"] = *r.martingale_error;
    j["martingale_gaps"] = r.martingale_gaps;
  } else {
    j["martingale_error"] = nullptr;
  }
  return j;
}

Array evaluation_samples(const GeneratorEnsemble& generator, const ProblemInstance& problem,
                         std::size_t n, std::uint64_t seed) {
  Stream latent_rng(seed, kLatentStream), routing_rng(seed, kRoutingStream);
  const Array latents = problem.latent.sample(n, latent_rng);
  return generator.sample(latents, routing_rng);
}

FeasibilityReport feasibility_report(const Array& generated, const ProblemInstance& problem,
                                     std::uint64_t seed) {
  FeasibilityReport r;
  r.samples = generated.rows();
  std::vector<std::vector<double>> gen_cols, target_cols;
  std::optional<double> mart_total;
  std::size_t mart_terms = 0;

  for (std::size_t j = 0; j < problem.terms.size(); ++j) {
    const ConstraintTerm& term = problem.terms[j];
    if (is_martingale_term(term)) {
      auto gaps = martingale_gaps(generated, term.weight.from, term.weight.to);
      double acc = 0.0;
      for (double g : gaps) acc += g;
      mart_total = mart_total.value_or(0.0) + acc / static_cast<double>(kChebyshevCount);
      if (r.martingale_gaps.empty()) r.martingale_gaps = std::move(gaps);
      ++mart_terms;
      continue;
    }
    if (term.target.kind != TargetSide::Kind::sampler) continue;
    const Array z = term.projection.apply(generated);
    Stream target_rng(seed, kTargetStream + j);
    const auto target = sample_mu_side(term, generated.rows(), target_rng);
    for (std::size_t k = 0; k < z.cols(); ++k) {
      const Array gc = z.column(k), tc = target->column(k);
      gen_cols.push_back(gc.storage());
      target_cols.push_back(tc.storage());
      r.marginal_labels.push_back(z.cols() == 1 ? term.name
                                                : term.name + "[" + std::to_string(k) + "]");
      r.marginal_gaps.push_back(chebyshev_moment_gaps(gen_cols.back(), target_cols.back()));
    }
  }
  if (!gen_cols.empty()) r.marginal_error = marginal_error(gen_cols, target_cols);
  if (mart_total) r.martingale_error = *mart_total / static_cast<double>(mart_terms);
  return r;
}

double objective_value(const Array& generated, const CostFunction& f) {
  const Array v = f.evaluate(generated);
  double acc = 0.0;
  for (double x : v.storage()) acc += x;
  return v.size() == 0 ? 0.0 : acc / static_cast<double>(v.size());
}

double objective_value(const GeneratorEnsemble& generator, const ProblemInstance& problem,
                       std::size_t n, std::uint64_t seed) {
  return objective_value(evaluation_samples(generator, problem, n, seed), problem.cost);
}

}  // namespace minmax
