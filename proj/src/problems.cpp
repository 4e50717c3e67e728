#include "minmax/problems.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace minmax {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_partial(double m, double s, double a, double b) {
  const double za = std::isinf(a) ? a : (a - m) / s;
  const double zb = std::isinf(b) ? b : (b - m) / s;
  const double pa = std::isinf(za) ? 0.0 : std_normal_pdf(za);
  const double pb = std::isinf(zb) ? 0.0 : std_normal_pdf(zb);
  return m * (std_normal_cdf(zb) - std_normal_cdf(za)) + s * (pa - pb);
}

double student_pdf(unsigned df, double x) {
  return boost::math::pdf(boost::math::students_t(static_cast<double>(df)), x);
}

// Antiderivative of x f(x) for the Student-t density.
double student_first_moment_primitive(unsigned df, double x) {
  if (std::isinf(x)) return 0.0;
  const double nu = static_cast<double>(df);
  return -(nu + x * x) / (nu - 1.0) * student_pdf(df, x);
}

}  // namespace

Distribution1D Distribution1D::normal(double mean, double stddev) {
  Distribution1D d;
  d.kind = Kind::normal;
  d.means = {mean};
  d.stddevs = {stddev};
  d.validate();
  return d;
}

Distribution1D Distribution1D::mixture(std::vector<double> weights, std::vector<double> means,
                                       std::vector<double> stddevs) {
  Distribution1D d;
  d.kind = Kind::mixture;
  d.weights = std::move(weights);
  d.means = std::move(means);
  d.stddevs = std::move(stddevs);
  d.validate();
  return d;
}

Distribution1D Distribution1D::student_t(unsigned df) {
  Distribution1D d;
  d.kind = Kind::student_t;
  d.df = df;
  d.validate();
  return d;
}

Distribution1D Distribution1D::uniform(double low, double high) {
  Distribution1D d;
  d.kind = Kind::uniform;
  d.low = low;
  d.high = high;
  d.validate();
  return d;
}

void Distribution1D::validate() const {
  switch (kind) {
    case Kind::normal:
    case Kind::mixture: {
      if (means.empty() || means.size() != stddevs.size() || means.size() != weights.size()) {
        throw std::invalid_argument("normal mixture needs matching weights/means/stddevs");
      }
      if (kind == Kind::normal && means.size() != 1) {
        throw std::invalid_argument("normal has exactly one component");
      }
      double total = 0.0;
      for (std::size_t k = 0; k < means.size(); ++k) {
        if (!(stddevs[k] > 0.0)) throw std::invalid_argument("stddev must be > 0");
        if (!(weights[k] >= 0.0)) throw std::invalid_argument("mixture weight must be >= 0");
        total += weights[k];
      }
      if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
      return;
    }
    case Kind::student_t:
      if (df <= 2) throw std::invalid_argument("Student-t needs df > 2 so the variance exists");
      return;
    case Kind::uniform:
      if (!(low < high)) throw std::invalid_argument("uniform needs low < high");
      return;
  }
}

double Distribution1D::sample(Stream& rng) const {
  switch (kind) {
    case Kind::normal: return rng.normal(means[0], stddevs[0]);
    case Kind::mixture: {
      double u = rng.uniform();
      std::size_t k = 0;
      while (k + 1 < weights.size() && u >= weights[k]) {
        u -= weights[k];
        ++k;
      }
      return rng.normal(means[k], stddevs[k]);
    }
    case Kind::student_t: return rng.student_t(df);
    case Kind::uniform: return rng.uniform(low, high);
  }
  return 0.0;
}

double Distribution1D::mean() const {
  switch (kind) {
    case Kind::normal:
    case Kind::mixture: {
      double m = 0.0;
      for (std::size_t k = 0; k < means.size(); ++k) m += weights[k] * means[k];
      return m;
    }
    case Kind::student_t: return 0.0;
    case Kind::uniform: return 0.5 * (low + high);
  }
  return 0.0;
}

double Distribution1D::variance() const {
  switch (kind) {
    case Kind::normal:
    case Kind::mixture: {
      const double m = mean();
      double second = 0.0;
      for (std::size_t k = 0; k < means.size(); ++k) {
        second += weights[k] * (stddevs[k] * stddevs[k] + means[k] * means[k]);
      }
      return second - m * m;
    }
    case Kind::student_t: return static_cast<double>(df) / static_cast<double>(df - 2);
    case Kind::uniform: return (high - low) * (high - low) / 12.0;
  }
  return 0.0;
}

double Distribution1D::cdf(double x) const {
  if (x == -kInf) return 0.0;
  if (x == kInf) return 1.0;
  switch (kind) {
    case Kind::normal:
    case Kind::mixture: {
      double p = 0.0;
      for (std::size_t k = 0; k < means.size(); ++k) {
        p += weights[k] * std_normal_cdf((x - means[k]) / stddevs[k]);
      }
      return p;
    }
    case Kind::student_t:
      return boost::math::cdf(boost::math::students_t(static_cast<double>(df)), x);
    case Kind::uniform: return std::clamp((x - low) / (high - low), 0.0, 1.0);
  }
  return 0.0;
}

double Distribution1D::quantile(double p) const {
  if (p <= 0.0) return kind == Kind::uniform ? low : -kInf;
  if (p >= 1.0) return kind == Kind::uniform ? high : kInf;
  switch (kind) {
    case Kind::normal:
      return boost::math::quantile(boost::math::normal(means[0], stddevs[0]), p);
    case Kind::mixture: {
      double lo = kInf, hi = -kInf;
      for (std::size_t k = 0; k < means.size(); ++k) {
        const double q = boost::math::quantile(boost::math::normal(means[k], stddevs[k]), p);
        lo = std::min(lo, q);
        hi = std::max(hi, q);
      }
      for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) < p ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    case Kind::student_t:
      return boost::math::quantile(boost::math::students_t(static_cast<double>(df)), p);
    case Kind::uniform: return low + p * (high - low);
  }
  return 0.0;
}

double Distribution1D::partial_expectation(double a, double b) const {
  if (!(a < b)) return 0.0;
  switch (kind) {
    case Kind::normal:
    case Kind::mixture: {
      double e = 0.0;
      for (std::size_t k = 0; k < means.size(); ++k) {
        e += weights[k] * normal_partial(means[k], stddevs[k], a, b);
      }
      return e;
    }
    case Kind::student_t:
      return student_first_moment_primitive(df, b) - student_first_moment_primitive(df, a);
    case Kind::uniform: {
      const double lo = std::max(a, low), hi = std::min(b, high);
      if (!(lo < hi)) return 0.0;
      return (hi * hi - lo * lo) / (2.0 * (high - low));
    }
  }
  return 0.0;
}

std::string Distribution1D::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::normal: os << "N(" << means[0] << ", " << stddevs[0] << "^2)"; break;
    case Kind::mixture:
      for (std::size_t k = 0; k < means.size(); ++k) {
        if (k) os << " + ";
        os << weights[k] << " N(" << means[k] << ", " << stddevs[k] << "^2)";
      }
      break;
    case Kind::student_t: os << "t(" << df << ")"; break;
    case Kind::uniform: os << "U(" << low << ", " << high << ")"; break;
  }
  return os.str();
}

std::size_t Projection::image_dim(std::size_t d) const {
  switch (kind) {
    case Kind::coordinates: return indices.size();
    case Kind::difference: return 1;
    case Kind::identity: return d;
  }
  return 0;
}

Array Projection::apply(const Array& x) const {
  const std::size_t n = x.rows(), d = x.cols();
  switch (kind) {
    case Kind::identity: return x;
    case Kind::difference: {
      Array out(Shape{n, 1});
      for (std::size_t i = 0; i < n; ++i) out[i] = x(i, to) - x(i, from);
      return out;
    }
    case Kind::coordinates: {
      Array out(Shape{n, indices.size()});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < indices.size(); ++k) out(i, k) = x[i * d + indices[k]];
      }
      return out;
    }
  }
  return x;
}

ad::Var Projection::apply(ad::Tape& tape, ad::Var x) const {
  switch (kind) {
    case Kind::identity: return x;
    case Kind::difference: return tape.slice_cols(x, to, to + 1) - tape.slice_cols(x, from, from + 1);
    case Kind::coordinates: {
      // contiguous ranges become a single slice
      bool contiguous = true;
      for (std::size_t k = 1; k < indices.size(); ++k) {
        contiguous = contiguous && indices[k] == indices[k - 1] + 1;
      }
      if (contiguous) return tape.slice_cols(x, indices.front(), indices.back() + 1);
      std::vector<ad::Var> cols;
      for (std::size_t i : indices) cols.push_back(tape.slice_cols(x, i, i + 1));
      return tape.concat_cols(cols);
    }
  }
  return x;
}

std::optional<Array> ConstraintTerm::weight_values(const Array& x) const {
  if (weight.kind == TermWeight::Kind::one) return std::nullopt;
  Array out(Shape{x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = x(i, weight.to) - x(i, weight.from);
  return out;
}

std::optional<ad::Var> ConstraintTerm::weight_values(ad::Tape& tape, ad::Var x) const {
  if (weight.kind == TermWeight::Kind::one) return std::nullopt;
  return tape.slice_cols(x, weight.to, weight.to + 1) -
         tape.slice_cols(x, weight.from, weight.from + 1);
}

Array LatentSpec::sample(std::size_t n, Stream& rng) const {
  Array out(Shape{n, dim});
  for (double& v : out.storage()) {
    v = kind == Kind::uniform ? rng.uniform(-1.0, 1.0) : rng.normal();
  }
  return out;
}

void ProblemInstance::validate() const {
  if (dim == 0) throw std::invalid_argument("problem dimension must be >= 1");
  if (terms.empty()) throw std::invalid_argument("problem needs at least one constraint term");
  if (latent.dim == 0) throw std::invalid_argument("latent dimension must be >= 1");
  cost.check_dimension(dim);
  for (const ConstraintTerm& t : terms) {
    auto check_index = [&](std::size_t i) {
      if (i >= dim) {
        throw std::invalid_argument("term '" + t.name + "' references coordinate " +
                                    std::to_string(i) + " >= d");
      }
    };
    if (t.weight.kind == TermWeight::Kind::difference) {
      check_index(t.weight.from);
      check_index(t.weight.to);
    }
    if (t.projection.kind == Projection::Kind::coordinates) {
      if (t.projection.indices.empty()) {
        throw std::invalid_argument("term '" + t.name + "' projects onto no coordinates");
      }
      for (std::size_t i : t.projection.indices) check_index(i);
    }
    if (t.projection.kind == Projection::Kind::difference) {
      check_index(t.projection.from);
      check_index(t.projection.to);
    }
    if (t.target.kind == TargetSide::Kind::sampler) {
      if (t.weight.kind != TermWeight::Kind::one) {
        throw std::invalid_argument("term '" + t.name +
                                    "': sampled targets carry unit weight, so e_j must be 1");
      }
      if (t.target.coordinates.size() != t.image_dim(dim)) {
        throw std::invalid_argument("term '" + t.name + "': target has " +
                                    std::to_string(t.target.coordinates.size()) +
                                    " coordinates, image dimension is " +
                                    std::to_string(t.image_dim(dim)));
      }
      for (const auto& c : t.target.coordinates) c.validate();
    }
  }
  if (support_box) {
    support_box->validate();
    if (support_box->dim() != dim) throw std::invalid_argument("support box dimension mismatch");
  }
}

std::vector<std::size_t> ProblemInstance::term_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& t : terms) dims.push_back(t.image_dim(dim));
  return dims;
}

std::optional<Array> sample_mu_side(const ConstraintTerm& term, std::size_t n, Stream& rng) {
  if (term.target.kind == TargetSide::Kind::analytic_zero) return std::nullopt;
  const auto& coords = term.target.coordinates;
  Array out(Shape{n, coords.size()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < coords.size(); ++k) out(i, k) = coords[k].sample(rng);
  }
  return out;
}

ProblemInstance preset_ot(const Distribution1D& mu1, const Distribution1D& mu2,
                          CostFunction cost) {
  return preset_multi_marginal({mu1, mu2}, std::move(cost));
}

ProblemInstance preset_multi_marginal(const std::vector<Distribution1D>& marginals,
                                      CostFunction cost) {
  ProblemInstance p;
  p.name = marginals.size() == 2 ? "ot" : "multi_marginal_ot";
  p.dim = marginals.size();
  p.cost = std::move(cost);
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    p.terms.push_back({"marginal_" + std::to_string(i + 1), TermWeight::one(),
                       Projection::coordinates({i}), TargetSide::sampler({marginals[i]})});
  }
  p.latent = {p.dim, LatentSpec::Kind::uniform};
  p.validate();
  return p;
}

Distribution1D dcot_marginal() { return Distribution1D::normal(0.0, 2.0); }
Distribution1D dcot_difference_law() { return Distribution1D::student_t(8); }

ProblemInstance preset_dcot() {
  ProblemInstance p = preset_ot(dcot_marginal(), dcot_marginal(), CostFunction::positive_sum());
  p.name = "dcot";
  p.terms.push_back({"difference", TermWeight::one(), Projection::difference(0, 1),
                     TargetSide::sampler({dcot_difference_law()})});
  p.validate();
  return p;
}

Distribution1D mot_mu1() { return Distribution1D::mixture({0.5, 0.5}, {-1.3, 0.8}, {0.5, 0.7}); }
Distribution1D mot_mu2() { return Distribution1D::mixture({0.5, 0.5}, {-1.3, 0.8}, {1.1, 1.3}); }

ProblemInstance preset_mot() {
  ProblemInstance p = preset_ot(mot_mu1(), mot_mu2(), CostFunction::positive_increment());
  p.name = "mot";
  p.terms.push_back({"martingale", TermWeight::difference(0, 1), Projection::coordinates({0}),
                     TargetSide::analytic_zero()});
  p.validate();
  return p;
}

ProblemInstance preset_w2(std::size_t d, double var1, double var2) {
  if (d == 0) throw std::invalid_argument("W2 preset needs d >= 1");
  ProblemInstance p;
  p.name = "w2";
  p.dim = 2 * d;
  p.cost = CostFunction::negative_squared_distance();
  std::vector<std::size_t> first(d), second(d);
  std::iota(first.begin(), first.end(), std::size_t{0});
  std::iota(second.begin(), second.end(), d);
  p.terms.push_back({"marginal_1", TermWeight::one(), Projection::coordinates(first),
                     TargetSide::sampler(std::vector<Distribution1D>(
                         d, Distribution1D::normal(0.0, std::sqrt(var1))))});
  p.terms.push_back({"marginal_2", TermWeight::one(), Projection::coordinates(second),
                     TargetSide::sampler(std::vector<Distribution1D>(
                         d, Distribution1D::normal(0.0, std::sqrt(var2))))});
  p.latent = {p.dim, LatentSpec::Kind::uniform};
  p.report_sign = -1.0;
  p.validate();
  return p;
}

}  // namespace minmax
