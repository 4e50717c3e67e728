#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "minmax/autodiff.hpp"
#include "minmax/nets.hpp"
#include "minmax/problems.hpp"

namespace minmax {

struct RegularizationConfig {
  enum class Mode { none, divergence, lipschitz };

  Mode mode = Mode::none;
  /// Divergence coefficients c_j in psi*(x) = x^2 / c_j. A single entry
  /// applies to every term.
  std::vector<double> c{25.0};
  /// Lipschitz constant L and gradient-penalty weight lambda.
  double lipschitz = 1.0;
  double lambda = 10.0;

  static RegularizationConfig none() { return {}; }
  static RegularizationConfig divergence(double c) { return {Mode::divergence, {c}, 1.0, 10.0}; }
  static RegularizationConfig lipschitz_penalty(double L, double lambda = 10.0) {
    return {Mode::lipschitz, {25.0}, L, lambda};
  }

  void validate(std::size_t terms) const;
  double c_for(std::size_t j) const { return c.size() == 1 ? c.front() : c.at(j); }
  /// Divergence mode penalizes only terms whose mu-side is a unit-weight
  /// sampler; analytic-zero terms stay exact Lagrangian terms.
  bool penalizes(const ConstraintTerm& term) const;
};

std::string to_string(RegularizationConfig::Mode m);
RegularizationConfig::Mode regularization_mode_from_string(const std::string& s);

/// Values of one objective evaluation.
struct ObjectiveBreakdown {
  /// The Lagrangian value. In divergence mode it includes the psi* terms.
  double phi = 0.0;
  double cost_term = 0.0;
  /// mean_gen e_j h_j(pi_j) - mu-side_j, per term.
  std::vector<double> constraint;
  /// Regularization per term: psi* mean in divergence mode, the gradient
  /// penalty (times lambda) in Lipschitz mode, otherwise zero.
  std::vector<double> penalty;

  bool all_finite() const;
};

/// Tape nodes of one objective evaluation.
struct ObjectiveGraph {
  ad::Var phi;
  ad::Var cost_term;
  std::vector<ad::Var> constraint;
  std::vector<std::optional<ad::Var>> penalty;
  /// Minimized by the discriminators: phi plus gradient penalties.
  ad::Var discriminator_loss;
  /// Minimized by the generator: -phi.
  ad::Var generator_loss;

  ObjectiveBreakdown breakdown() const;
};

/// Builds Phi on a tape.
///
/// `generated` is the n x d batch T(y). `mu` holds one batch per term, or
/// nullopt for analytic-zero terms. With `train_discriminators` false the
/// discriminator weights enter as constants. The gradient penalty is only
/// built when `with_gradient_penalty` is set and the mode is lipschitz.
ObjectiveGraph build_objective(ad::Tape& tape, const ProblemInstance& problem,
                               ad::Var generated, const std::vector<std::optional<Array>>& mu,
                               DiscriminatorSet& discriminators, const RegularizationConfig& reg,
                               bool train_discriminators, bool with_gradient_penalty);

/// Throws NumericError naming the first non-finite component.
void check_finite(const ObjectiveBreakdown& b, const ProblemInstance& problem);

ObjectiveBreakdown phi_plain(const ProblemInstance& problem, const Array& generated,
                             const std::vector<std::optional<Array>>& mu,
                             DiscriminatorSet& discriminators);
ObjectiveBreakdown phi_divergence(const ProblemInstance& problem, const Array& generated,
                                  const std::vector<std::optional<Array>>& mu,
                                  DiscriminatorSet& discriminators,
                                  const RegularizationConfig& reg);
/// `phi` is the plain Lagrangian; `penalty` holds the gradient penalties that
/// enter only the discriminator loss.
ObjectiveBreakdown phi_lipschitz(const ProblemInstance& problem, const Array& generated,
                                 const std::vector<std::optional<Array>>& mu,
                                 DiscriminatorSet& discriminators,
                                 const RegularizationConfig& reg);

/// Call price E(X - b)^+ of an empirical sample.
double call_price(std::span<const double> samples, double strike);

struct WitnessResult {
  double strike = 0.0;
  /// call_nu(strike) - call_mu(strike)
  double gap = 0.0;
  /// Three standard errors of the gap estimate.
  double noise_floor = 0.0;
  bool indistinguishable = true;
  /// The Lagrangian term int h dnu - int h dmu for h = s a (x - b)^+, with the
  /// sign s chosen so that the term equals -a |gap|.
  double term_value = 0.0;
  double sign = 1.0;
};

/// Finds the strike with the largest call-price gap on a grid spanning the
/// pooled samples and reports how far h(x) = a (x - b)^+ pushes Phi down.
WitnessResult witness_unboundedness(std::span<const double> nu_samples,
                                    std::span<const double> mu_samples, double scale,
                                    std::size_t grid_points = 401);

}  // namespace minmax
