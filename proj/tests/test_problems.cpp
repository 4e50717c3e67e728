#include "doctest.h"

#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "minmax/problems.hpp"
#include "support.hpp"

using namespace minmax;

namespace {

struct Moments {
  double mean = 0, var = 0, kurtosis = 0;
};

Moments moments(const Array& a) {
  Moments m;
  const double n = static_cast<double>(a.size());
  for (double v : a.storage()) m.mean += v;
  m.mean /= n;
  double m4 = 0;
  for (double v : a.storage()) {
    m.var += (v - m.mean) * (v - m.mean);
    m4 += std::pow(v - m.mean, 4);
  }
  m.var /= n;
  m.kurtosis = m4 / n / (m.var * m.var);
  return m;
}

}  // namespace

TEST_CASE("distribution moments and quantiles") {
  const auto mix = mot_mu1();
  CHECK(mix.mean() == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(mot_mu2().mean() == doctest::Approx(-0.25).epsilon(1e-15));
  // 0.5 (0.25 + 1.69) + 0.5 (0.49 + 0.64) - 0.0625
  CHECK(mix.variance() == doctest::Approx(0.5 * (0.25 + 1.69) + 0.5 * (0.49 + 0.64) - 0.0625));
  CHECK(Distribution1D::student_t(8).variance() == doctest::Approx(8.0 / 6.0));
  CHECK(Distribution1D::uniform(-1, 3).variance() == doctest::Approx(16.0 / 12.0));

  for (const auto& d : {mot_mu1(), mot_mu2(), dcot_marginal(), dcot_difference_law(),
                        Distribution1D::uniform(-2, 1)}) {
    for (double p : {0.001, 0.1, 0.37, 0.5, 0.9, 0.999}) {
      CHECK(d.cdf(d.quantile(p)) == doctest::Approx(p).epsilon(1e-9));
    }
    // partial expectations add up to the mean
    const double q = d.quantile(0.3);
    CHECK(d.partial_expectation(-HUGE_VAL, q) + d.partial_expectation(q, HUGE_VAL) ==
          doctest::Approx(d.mean()).epsilon(1e-9));
  }
  boost::math::students_t_distribution<> t8(8);
  CHECK(dcot_difference_law().quantile(0.95) == doctest::Approx(boost::math::quantile(t8, 0.95)));

  CHECK_THROWS(Distribution1D::normal(0, 0).validate());
  CHECK_THROWS(Distribution1D::student_t(2).validate());
  CHECK_THROWS(Distribution1D::mixture({0.5, 0.6}, {0, 1}, {1, 1}).validate());
}

TEST_CASE("sampling") {
  const std::size_t n = 200000;
  SUBCASE("normal mean within 3 sigma / sqrt(n)") {
    auto p = preset_dcot();
    Stream rng(1, 100);
    const auto s = sample_mu_side(p.terms[0], n, rng);
    REQUIRE(s);
    CHECK(std::abs(moments(*s).mean) <= 3 * 2.0 / std::sqrt(static_cast<double>(n)));
  }
  SUBCASE("student t(8) variance and kurtosis") {
    auto p = preset_dcot();
    Stream rng(2, 102);
    const auto s = sample_mu_side(p.terms[2], n, rng);
    REQUIRE(s);
    const auto m = moments(*s);
    CHECK(m.var == doctest::Approx(8.0 / 6.0).epsilon(0.03));
    // excess kurtosis 6/(8-4); the sample kurtosis converges slowly for t(8)
    CHECK(m.kurtosis == doctest::Approx(4.5).epsilon(0.15));
  }
  SUBCASE("analytic zero has no samples") {
    auto p = preset_mot();
    Stream rng(3);
    CHECK_FALSE(sample_mu_side(p.terms[2], 10, rng));
    CHECK(rng.draws() == 0);
  }
  SUBCASE("fixed seed gives identical streams") {
    auto p = preset_mot();
    Stream a(4, 100), b(4, 100), c(4, 101);
    CHECK(*sample_mu_side(p.terms[0], 100, a) == *sample_mu_side(p.terms[0], 100, b));
    CHECK_FALSE(*sample_mu_side(p.terms[0], 100, a) == *sample_mu_side(p.terms[0], 100, c));
  }
}

TEST_CASE("presets") {
  SUBCASE("ot") {
    auto p = preset_ot(Distribution1D::normal(0, 1), Distribution1D::normal(0, 2),
                       CostFunction::positive_sum());
    CHECK(p.terms.size() == 2);
    CHECK(p.term_dims() == std::vector<std::size_t>{1, 1});
    p.validate();
  }
  SUBCASE("dcot") {
    auto p = preset_dcot();
    REQUIRE(p.terms.size() == 3);
    for (const auto& t : p.terms) CHECK(t.weight.kind == TermWeight::Kind::one);
    CHECK(p.terms[2].projection.kind == Projection::Kind::difference);
    CHECK(p.latent.dim == 2);
    CHECK(p.latent.kind == LatentSpec::Kind::uniform);
    const Array x = Array::matrix({{1.0, 3.5}});
    CHECK(p.terms[2].projection.apply(x)[0] == 2.5);
    CHECK(p.cost(std::vector<double>{1.0, -3.0}) == 0.0);
    CHECK(p.cost(std::vector<double>{1.0, 0.5}) == 1.5);
  }
  SUBCASE("mot") {
    auto p = preset_mot();
    REQUIRE(p.terms.size() == 3);
    const auto& m = p.terms[2];
    CHECK(m.target.kind == TargetSide::Kind::analytic_zero);
    CHECK(m.weight.kind == TermWeight::Kind::difference);
    const Array diag = Array::matrix({{0.4, 0.4}, {-1.0, -1.0}});
    const auto e = m.weight_values(diag);
    REQUIRE(e);
    for (double v : e->storage()) CHECK(v == 0.0);
    CHECK(p.cost(std::vector<double>{1.0, 3.0}) == 2.0);
    CHECK(p.cost(std::vector<double>{3.0, 1.0}) == 0.0);
    CHECK_FALSE(p.support_box);
  }
  SUBCASE("w2") {
    auto p = preset_w2(3);
    CHECK(p.dim == 6);
    CHECK(p.term_dims() == std::vector<std::size_t>{3, 3});
    CHECK(p.report_sign == -1.0);
    CHECK(p.cost(std::vector<double>{1, 0, 0, 0, 2, 0}) == -5.0);
    CHECK(p.terms[1].target.coordinates[0].stddevs[0] == 2.0);
  }
  SUBCASE("validation") {
    auto p = preset_mot();
    p.terms[0].weight = TermWeight::difference(0, 1);
    CHECK_THROWS(p.validate());
    auto q = preset_dcot();
    q.terms.clear();
    CHECK_THROWS(q.validate());
    CHECK_THROWS(preset_w2(0));
  }
}

TEST_CASE("cost expressions") {
  auto f = CostFunction::expression("pos(x0 + x1) - 0.5 * sq(x1 - x0) + abs(-2)");
  CHECK(f(std::vector<double>{1.0, 2.0}) == doctest::Approx(3.0 - 0.5 + 2.0));
  CHECK_THROWS(f.check_dimension(1));
  CHECK_THROWS(CostFunction::expression("x0 +"));
  ad::Tape t;
  Parameter x("x", Array::matrix({{1.0, 2.0}, {-3.0, 1.0}}));
  auto v = f.apply(t, t.parameter(x));
  CHECK(v.value()[1] == doctest::Approx(0.0 - 8.0 + 2.0));
  t.backward(ad::sum(v));
  // d/dx0 at (1,2): 1 + (x1 - x0) = 2
  CHECK(x.grad[0] == doctest::Approx(2.0));
}
