#include "doctest.h"

#include <cmath>

#include "minmax/objective.hpp"
#include "minmax/problems.hpp"
#include "support.hpp"

using namespace minmax;

namespace {

ProblemInstance ot_problem() {
  return preset_ot(Distribution1D::normal(0, 1), Distribution1D::normal(0, 2),
                   CostFunction::positive_sum());
}

// h(z) = s z on the line, written as s relu(z) - s relu(-z).
MLP linear_h(double s) {
  return MLP({1, 1, 2, 2, Activation::relu}, {Array::matrix({{1.0}, {-1.0}}), Array::matrix({{s, -s}})},
             {Array::vector({0.0, 0.0}), Array::vector({0.0})});
}

void zero_last_layer(DiscriminatorSet& d) {
  for (auto& net : d.nets) {
    net.weight(net.layers() - 1).value.fill(0.0);
    net.bias(net.layers() - 1).value.fill(0.0);
  }
}

Array column(const Array& x, std::size_t c) {
  Array out(Shape{x.rows(), 1});
  for (std::size_t r = 0; r < x.rows(); ++r) out(r, 0) = x(r, c);
  return out;
}

}  // namespace

TEST_CASE("phi examples") {
  Stream rng(1);
  SUBCASE("zero discriminators leave the cost") {
    auto p = ot_problem();
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    zero_last_layer(d);
    const Array gen = Array::matrix({{1.0, 1.0}, {1.0, 1.0}});
    const std::vector<std::optional<Array>> mu{support::random_matrix(4, 1, rng),
                                               support::random_matrix(4, 1, rng)};
    const auto b = phi_plain(p, gen, mu, d);
    CHECK(b.phi == 2.0);
    CHECK(b.cost_term == 2.0);
    for (double c : b.constraint) CHECK(c == 0.0);
  }
  SUBCASE("matching samples cancel every constraint") {
    auto p = ot_problem();
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    const Array gen = support::random_matrix(16, 2, rng);
    const std::vector<std::optional<Array>> mu{column(gen, 0), column(gen, 1)};
    const auto b = phi_plain(p, gen, mu, d);
    for (double c : b.constraint) CHECK(c == doctest::Approx(0.0).epsilon(1e-14));
    double cost = 0;
    for (std::size_t r = 0; r < 16; ++r) cost += std::max(gen(r, 0) + gen(r, 1), 0.0);
    CHECK(b.phi == doctest::Approx(cost / 16));
  }
  SUBCASE("martingale term vanishes on the diagonal") {
    auto p = preset_mot();
    DiscriminatorSet d = make_discriminators({1, 1, 1}, 8, 3, rng);
    Array gen(Shape{10, 2});
    for (std::size_t r = 0; r < 10; ++r) gen(r, 0) = gen(r, 1) = rng.normal();
    const std::vector<std::optional<Array>> mu{support::random_matrix(10, 1, rng),
                                               support::random_matrix(10, 1, rng), std::nullopt};
    CHECK(phi_plain(p, gen, mu, d).constraint[2] == 0.0);
  }
  SUBCASE("missing mu batch") {
    auto p = ot_problem();
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    const std::vector<std::optional<Array>> mu{std::nullopt, std::nullopt};
    CHECK_THROWS(phi_plain(p, support::random_matrix(4, 2, rng), mu, d));
  }
}

TEST_CASE("divergence regularization") {
  Stream rng(2);
  auto p = ot_problem();
  const Array gen = support::random_matrix(32, 2, rng);
  const std::vector<std::optional<Array>> mu{support::random_matrix(32, 1, rng),
                                             support::random_matrix(32, 1, rng, 2.0)};
  const auto reg = RegularizationConfig::divergence(5.0);

  SUBCASE("h = 0 gives the plain value") {
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    zero_last_layer(d);
    CHECK(phi_divergence(p, gen, mu, d, reg).phi == phi_plain(p, gen, mu, d).phi);
  }
  SUBCASE("constant h pays k^2 / c") {
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    zero_last_layer(d);
    d.nets[0].bias(2).value[0] = 3.0;
    const auto b = phi_divergence(p, gen, mu, d, reg);
    CHECK(b.constraint[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(b.penalty[0] == doctest::Approx(9.0 / 5.0));
    CHECK(b.penalty[1] == 0.0);
  }
  SUBCASE("strictly convex along final-layer weights") {
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    for (int trial = 0; trial < 5; ++trial) {
      Array dir = support::random_matrix(1, 8, rng);
      Array& w = d.nets[trial % 2].weight(2).value;
      const Array keep = w;
      auto at = [&](double t) {
        for (std::size_t i = 0; i < 8; ++i) w[i] = keep[i] + t * dir[i];
        return phi_divergence(p, gen, mu, d, reg).phi;
      };
      const double h = 0.5;
      const double second = at(h) - 2 * at(0) + at(-h);
      w = keep;
      CHECK(second > 0.0);
    }
  }
  SUBCASE("inner infimum is nonincreasing in c") {
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    const Array keep = d.nets[0].weight(2).value;
    d.nets[1].weight(2).value.fill(0.0);
    d.nets[1].bias(2).value.fill(0.0);
    double previous = HUGE_VAL;
    for (double c : {1.0, 5.0, 25.0, 150.0}) {
      auto at = [&](double a) {
        for (std::size_t i = 0; i < keep.size(); ++i) d.nets[0].weight(2).value[i] = a * keep[i];
        return phi_divergence(p, gen, mu, d, RegularizationConfig::divergence(c)).phi;
      };
      // exact quadratic in a: fit from three points
      const double f0 = at(0), f1 = at(1), fm = at(-1);
      const double curv = (f1 + fm - 2 * f0) / 2, slope = (f1 - fm) / 2;
      REQUIRE(curv > 0.0);
      const double inf = f0 - slope * slope / (4 * curv);
      CHECK(inf <= previous + 1e-12);
      previous = inf;
    }
  }
  SUBCASE("analytic-zero terms are not penalized") {
    auto m = preset_mot();
    CHECK(reg.penalizes(m.terms[0]));
    CHECK_FALSE(reg.penalizes(m.terms[2]));
  }
  SUBCASE("bad coefficients") {
    DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
    CHECK_THROWS(phi_divergence(p, gen, mu, d, RegularizationConfig::divergence(0.0)));
    CHECK_THROWS(phi_divergence(p, gen, mu, d, RegularizationConfig::none()));
  }
}

TEST_CASE("gradient penalty") {
  Stream rng(3);
  auto p = ot_problem();
  const Array gen = support::random_matrix(20, 2, rng);
  const std::vector<std::optional<Array>> mu{support::random_matrix(20, 1, rng),
                                             support::random_matrix(20, 1, rng)};
  DiscriminatorSet d = make_discriminators({1, 1}, 8, 3, rng);
  const double L = 0.7, lambda = 10.0;
  const auto reg = RegularizationConfig::lipschitz_penalty(L, lambda);

  SUBCASE("zero weights cost nothing") {
    zero_last_layer(d);
    const auto b = phi_lipschitz(p, gen, mu, d, reg);
    for (double v : b.penalty) CHECK(v == 0.0);
  }
  SUBCASE("slope 2L pays lambda L^2 per side") {
    d.nets[0] = linear_h(2 * L);
    d.nets[1] = linear_h(0.5 * L);
    const auto b = phi_lipschitz(p, gen, mu, d, reg);
    CHECK(b.penalty[0] == doctest::Approx(2 * lambda * L * L));
    CHECK(b.penalty[1] == 0.0);
    // the penalty stays out of phi
    CHECK(b.phi == doctest::Approx(phi_plain(p, gen, mu, d).phi).epsilon(1e-14));
  }
  SUBCASE("only the discriminator loss carries it") {
    d.nets[0] = linear_h(3.0);
    ad::Tape t;
    auto g = build_objective(t, p, t.constant(gen), mu, d, reg, true, true);
    const double expected = lambda * 2 * (3.0 - L) * (3.0 - L);
    CHECK(g.discriminator_loss.value().item() - g.phi.value().item() ==
          doctest::Approx(expected + g.breakdown().penalty[1]));
    CHECK(g.generator_loss.value().item() == -g.phi.value().item());
  }
}

TEST_CASE("unboundedness witness") {
  Stream rng(4);
  const std::size_t n = 100000;
  std::vector<double> nu(n), mu(n);
  for (auto& x : nu) x = rng.normal();
  for (auto& x : mu) x = 1.0 + rng.normal();

  const auto w = witness_unboundedness(nu, mu, 1.0);
  CHECK_FALSE(w.indistinguishable);
  const double exact = support::normal_call(0, 1, w.strike) - support::normal_call(1, 1, w.strike);
  CHECK(std::abs(w.gap - exact) <= w.noise_floor);
  CHECK(w.term_value == doctest::Approx(-std::abs(w.gap)));

  const auto w10 = witness_unboundedness(nu, mu, 10.0);
  CHECK(w10.strike == w.strike);
  CHECK(w10.term_value == doctest::Approx(10 * w.term_value));

  const auto same = witness_unboundedness(nu, nu, 5.0);
  CHECK(same.gap == 0.0);
  CHECK(same.indistinguishable);

  CHECK(call_price(std::vector<double>{1.0, 3.0}, 2.0) == 0.5);
  CHECK_THROWS(witness_unboundedness(std::vector<double>{}, mu, 1.0));
}
