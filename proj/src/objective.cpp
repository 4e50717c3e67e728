#include "minmax/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minmax {

void RegularizationConfig::validate(std::size_t terms) const {
  switch (mode) {
    case Mode::none: return;
    case Mode::divergence:
      if (c.empty() || (c.size() != 1 && c.size() != terms)) {
        throw std::invalid_argument("divergence needs one c or one per term");
      }
      for (double v : c) {
        if (!(v > 0.0)) throw std::invalid_argument("divergence coefficient c must be > 0");
      }
      return;
    case Mode::lipschitz:
      if (!(lipschitz > 0.0)) throw std::invalid_argument("Lipschitz constant L must be > 0");
      if (!(lambda > 0.0)) throw std::invalid_argument("gradient penalty weight must be > 0");
      return;
  }
}

bool RegularizationConfig::penalizes(const ConstraintTerm& term) const {
  return mode == Mode::divergence && term.target.kind == TargetSide::Kind::sampler &&
         term.weight.kind == TermWeight::Kind::one;
}

std::string to_string(RegularizationConfig::Mode m) {
  switch (m) {
    case RegularizationConfig::Mode::none: return "none";
    case RegularizationConfig::Mode::divergence: return "divergence";
    case RegularizationConfig::Mode::lipschitz: return "lipschitz";
  }
  return "none";
}

RegularizationConfig::Mode regularization_mode_from_string(const std::string& s) {
  if (s == "none") return RegularizationConfig::Mode::none;
  if (s == "divergence") return RegularizationConfig::Mode::divergence;
  if (s == "lipschitz") return RegularizationConfig::Mode::lipschitz;
  throw std::invalid_argument("unknown regularization '" + s +
                              "' (expected none, divergence or lipschitz)");
}

bool ObjectiveBreakdown::all_finite() const {
  auto ok = [](double v) { return std::isfinite(v); };
  return ok(phi) && ok(cost_term) && std::all_of(constraint.begin(), constraint.end(), ok) &&
         std::all_of(penalty.begin(), penalty.end(), ok);
}

ObjectiveBreakdown ObjectiveGraph::breakdown() const {
  ObjectiveBreakdown b;
  b.phi = phi.value().item();
  b.cost_term = cost_term.value().item();
  for (const ad::Var& v : constraint) b.constraint.push_back(v.value().item());
  for (const auto& p : penalty) b.penalty.push_back(p ? p->value().item() : 0.0);
  return b;
}

namespace {

ad::Var one_sided_penalty(ad::Var grad, double L) {
  return ad::mean(ad::square(ad::relu(ad::row_norm(grad) - L)));
}

}  // namespace

ObjectiveGraph build_objective(ad::Tape& tape, const ProblemInstance& problem,
                               ad::Var generated, const std::vector<std::optional<Array>>& mu,
                               DiscriminatorSet& discriminators, const RegularizationConfig& reg,
                               bool train_discriminators, bool with_gradient_penalty) {
  const std::size_t J = problem.terms.size();
  if (mu.size() != J || discriminators.nets.size() != J) {
    throw std::invalid_argument("objective needs one mu batch and one discriminator per term");
  }
  const bool gp = with_gradient_penalty && reg.mode == RegularizationConfig::Mode::lipschitz;

  ObjectiveGraph g;
  g.cost_term = ad::mean(problem.cost.apply(tape, generated));
  ad::Var phi = g.cost_term;
  std::optional<ad::Var> gp_total;

  for (std::size_t j = 0; j < J; ++j) {
    const ConstraintTerm& term = problem.terms[j];
    MLP& net = discriminators.nets[j];

    ad::Var z = term.projection.apply(tape, generated);
    const MLP::Trace gen_trace = net.trace(tape, z, train_discriminators);
    ad::Var weighted = gen_trace.output;
    if (auto e = term.weight_values(tape, generated)) weighted = *e * weighted;
    ad::Var constraint = ad::mean(weighted);

    std::optional<ad::Var> penalty;
    std::optional<MLP::Trace> mu_trace;
    if (term.target.kind == TargetSide::Kind::sampler) {
      if (!mu[j]) throw std::invalid_argument("term '" + term.name + "' needs a mu batch");
      mu_trace = net.trace(tape, tape.constant(*mu[j]), train_discriminators);
      constraint = constraint - ad::mean(mu_trace->output);
      if (reg.penalizes(term)) {
        penalty = ad::mean(ad::square(mu_trace->output)) * (1.0 / reg.c_for(j));
      }
    }
    phi = phi + constraint;
    if (penalty) phi = phi + *penalty;

    if (gp) {
      ad::Var p = one_sided_penalty(net.input_gradient(tape, gen_trace), reg.lipschitz);
      if (mu_trace) p = p + one_sided_penalty(net.input_gradient(tape, *mu_trace), reg.lipschitz);
      p = p * reg.lambda;
      penalty = p;
      gp_total = gp_total ? *gp_total + p : p;
    }
    g.constraint.push_back(constraint);
    g.penalty.push_back(penalty);
  }

  g.phi = phi;
  g.discriminator_loss = gp_total ? phi + *gp_total : phi;
  g.generator_loss = -phi;
  return g;
}

void check_finite(const ObjectiveBreakdown& b, const ProblemInstance& problem) {
  if (!std::isfinite(b.cost_term)) throw NumericError("cost term is not finite", 0);
  for (std::size_t j = 0; j < b.constraint.size(); ++j) {
    const std::string& name = problem.terms.at(j).name;
    if (!std::isfinite(b.constraint[j])) {
      throw NumericError("constraint term '" + name + "' is not finite", j);
    }
    if (j < b.penalty.size() && !std::isfinite(b.penalty[j])) {
      throw NumericError("penalty of term '" + name + "' is not finite", j);
    }
  }
  if (!std::isfinite(b.phi)) throw NumericError("phi is not finite", 0);
}

namespace {

ObjectiveBreakdown evaluate_once(const ProblemInstance& problem, const Array& generated,
                                 const std::vector<std::optional<Array>>& mu,
                                 DiscriminatorSet& discriminators,
                                 const RegularizationConfig& reg) {
  ad::Tape tape;
  ad::Var x = tape.constant(generated);
  const ObjectiveGraph g =
      build_objective(tape, problem, x, mu, discriminators, reg, false, true);
  ObjectiveBreakdown b = g.breakdown();
  check_finite(b, problem);
  return b;
}

}  // namespace

ObjectiveBreakdown phi_plain(const ProblemInstance& problem, const Array& generated,
                             const std::vector<std::optional<Array>>& mu,
                             DiscriminatorSet& discriminators) {
  return evaluate_once(problem, generated, mu, discriminators, RegularizationConfig::none());
}

ObjectiveBreakdown phi_divergence(const ProblemInstance& problem, const Array& generated,
                                  const std::vector<std::optional<Array>>& mu,
                                  DiscriminatorSet& discriminators,
                                  const RegularizationConfig& reg) {
  if (reg.mode != RegularizationConfig::Mode::divergence) {
    throw std::invalid_argument("phi_divergence needs divergence mode");
  }
  reg.validate(problem.terms.size());
  return evaluate_once(problem, generated, mu, discriminators, reg);
}

ObjectiveBreakdown phi_lipschitz(const ProblemInstance& problem, const Array& generated,
                                 const std::vector<std::optional<Array>>& mu,
                                 DiscriminatorSet& discriminators,
                                 const RegularizationConfig& reg) {
  if (reg.mode != RegularizationConfig::Mode::lipschitz) {
    throw std::invalid_argument("phi_lipschitz needs lipschitz mode");
  }
  reg.validate(problem.terms.size());
  return evaluate_once(problem, generated, mu, discriminators, reg);
}

double call_price(std::span<const double> samples, double strike) {
  double acc = 0.0;
  for (double x : samples) acc += std::max(x - strike, 0.0);
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

WitnessResult witness_unboundedness(std::span<const double> nu_samples,
                                    std::span<const double> mu_samples, double scale,
                                    std::size_t grid_points) {
  if (nu_samples.empty() || mu_samples.empty()) {
    throw std::invalid_argument("witness needs nonempty samples");
  }
  if (grid_points < 2) throw std::invalid_argument("witness needs at least 2 strikes");
  const auto [nu_lo, nu_hi] = std::minmax_element(nu_samples.begin(), nu_samples.end());
  const auto [mu_lo, mu_hi] = std::minmax_element(mu_samples.begin(), mu_samples.end());
  const double lo = std::min(*nu_lo, *mu_lo), hi = std::max(*nu_hi, *mu_hi);

  WitnessResult best;
  double best_abs = -1.0;
  for (std::size_t k = 0; k < grid_points; ++k) {
    const double b = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid_points - 1);
    const double gap = call_price(nu_samples, b) - call_price(mu_samples, b);
    if (std::abs(gap) > best_abs) {
      best_abs = std::abs(gap);
      best.strike = b;
      best.gap = gap;
    }
  }

  auto payoff_variance = [&](std::span<const double> s) {
    const double m = call_price(s, best.strike);
    double acc = 0.0;
    for (double x : s) {
      const double d = std::max(x - best.strike, 0.0) - m;
      acc += d * d;
    }
    return acc / static_cast<double>(s.size());
  };
  best.noise_floor = 3.0 * std::sqrt(payoff_variance(nu_samples) / nu_samples.size() +
                                     payoff_variance(mu_samples) / mu_samples.size());
  best.indistinguishable = std::abs(best.gap) <= best.noise_floor;
  best.sign = best.gap > 0.0 ? -1.0 : 1.0;
  best.term_value = best.sign * scale * best.gap;
  return best;
}

}  // namespace minmax
