#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "minmax/array.hpp"
#include "minmax/autodiff.hpp"
#include "minmax/cost.hpp"
#include "minmax/nets.hpp"
#include "minmax/rng.hpp"

namespace minmax {

/// One-dimensional law used for targets: normal, finite normal mixture,
/// Student-t or uniform.
struct Distribution1D {
  enum class Kind { normal, mixture, student_t, uniform };

  Kind kind = Kind::normal;
  // normal uses a single component; mixture uses all of them
  std::vector<double> weights{1.0};
  std::vector<double> means{0.0};
  std::vector<double> stddevs{1.0};
  unsigned df = 0;
  double low = 0.0, high = 1.0;

  static Distribution1D normal(double mean, double stddev);
  static Distribution1D mixture(std::vector<double> weights, std::vector<double> means,
                                std::vector<double> stddevs);
  static Distribution1D student_t(unsigned df);
  static Distribution1D uniform(double low, double high);

  void validate() const;
  double sample(Stream& rng) const;
  double mean() const;
  double variance() const;
  double cdf(double x) const;
  double quantile(double p) const;
  /// E[X; a < X <= b]. Infinite bounds are allowed.
  double partial_expectation(double a, double b) const;
  std::string describe() const;
};

/// Weight e_j: R^d -> R.
struct TermWeight {
  enum class Kind { one, difference };
  Kind kind = Kind::one;
  /// difference: e(x) = x[to] - x[from]
  std::size_t from = 0, to = 0;

  static TermWeight one() { return {}; }
  static TermWeight difference(std::size_t from, std::size_t to) {
    return {Kind::difference, from, to};
  }
};

/// Transformation pi_j: R^d -> R^{d_j}.
struct Projection {
  enum class Kind { coordinates, difference, identity };
  Kind kind = Kind::coordinates;
  std::vector<std::size_t> indices;
  /// difference: pi(x) = x[to] - x[from]
  std::size_t from = 0, to = 0;

  static Projection coordinates(std::vector<std::size_t> idx) {
    return {Kind::coordinates, std::move(idx), 0, 0};
  }
  static Projection difference(std::size_t from, std::size_t to) {
    return {Kind::difference, {}, from, to};
  }
  static Projection identity() { return {Kind::identity, {}, 0, 0}; }

  std::size_t image_dim(std::size_t d) const;
  Array apply(const Array& x) const;
  ad::Var apply(ad::Tape& tape, ad::Var x) const;
};

/// The mu-side of a term: either samples from (pi_j)_* mu with unit weight,
/// or the marker that the mu-integral vanishes for every h_j.
struct TargetSide {
  enum class Kind { sampler, analytic_zero };
  Kind kind = Kind::sampler;
  /// Independent coordinates of the d_j-dimensional target.
  std::vector<Distribution1D> coordinates;

  static TargetSide sampler(std::vector<Distribution1D> coords) {
    return {Kind::sampler, std::move(coords)};
  }
  static TargetSide analytic_zero() { return {Kind::analytic_zero, {}}; }
};

struct ConstraintTerm {
  std::string name;
  TermWeight weight;
  Projection projection;
  TargetSide target;

  std::size_t image_dim(std::size_t d) const { return projection.image_dim(d); }
  /// e_j on every row of X as n x 1; empty optional when e_j == 1.
  std::optional<Array> weight_values(const Array& x) const;
  std::optional<ad::Var> weight_values(ad::Tape& tape, ad::Var x) const;
};

struct LatentSpec {
  enum class Kind { uniform, normal };
  std::size_t dim = 2;
  /// uniform means U([-1, 1]^K)
  Kind kind = Kind::uniform;

  Array sample(std::size_t n, Stream& rng) const;
};

struct ProblemInstance {
  std::string name;
  std::size_t dim = 2;
  CostFunction cost = CostFunction::positive_sum();
  std::vector<ConstraintTerm> terms;
  LatentSpec latent;
  std::optional<Box> support_box;
  /// Multiplier applied to the optimum when reporting (W2 reports -value).
  double report_sign = 1.0;

  void validate() const;
  std::vector<std::size_t> term_dims() const;
};

/// n i.i.d. draws from the term's target, or nullopt for analytic-zero terms.
std::optional<Array> sample_mu_side(const ConstraintTerm& term, std::size_t n, Stream& rng);

ProblemInstance preset_ot(const Distribution1D& mu1, const Distribution1D& mu2,
                          CostFunction cost);
ProblemInstance preset_multi_marginal(const std::vector<Distribution1D>& marginals,
                                      CostFunction cost);
ProblemInstance preset_dcot();
ProblemInstance preset_mot();
ProblemInstance preset_w2(std::size_t d, double var1 = 1.0, double var2 = 4.0);

/// DCOT marginals N(0, 2^2) and the Student-t(8) law of x2 - x1.
Distribution1D dcot_marginal();
Distribution1D dcot_difference_law();
/// MOT marginals, normal mixtures with common mean -0.25.
Distribution1D mot_mu1();
Distribution1D mot_mu2();

}  // namespace minmax
