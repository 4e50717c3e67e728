#include "doctest.h"

#include <cmath>
#include <numbers>

#include "minmax/oracle.hpp"
#include "support.hpp"

using namespace minmax;
using Sense = LinearProgram::Sense;

TEST_CASE("simplex examples") {
  SUBCASE("max x with x <= 1") {
    LinearProgram lp(1);
    lp.objective = {1.0};
    lp.add_row({{0, 1.0}}, Sense::le, 1.0);
    const auto r = simplex_solve(lp);
    CHECK(r.status == LpStatus::optimal);
    CHECK(r.value == doctest::Approx(1.0));
    CHECK(r.certified);
    CHECK(r.duals[0] == doctest::Approx(1.0));
  }
  SUBCASE("unbounded and infeasible") {
    LinearProgram lp(2);
    lp.objective = {1.0, 0.0};
    lp.add_row({{1, 1.0}}, Sense::le, 1.0);
    CHECK(simplex_solve(lp).status == LpStatus::unbounded);
    LinearProgram bad(1);
    bad.add_row({{0, 1.0}}, Sense::ge, 2.0);
    bad.add_row({{0, 1.0}}, Sense::le, 1.0);
    CHECK(simplex_solve(bad).status == LpStatus::infeasible);
  }
  SUBCASE("redundant equality rows") {
    LinearProgram lp(2);
    lp.objective = {1.0, 2.0};
    lp.add_row({{0, 1.0}, {1, 1.0}}, Sense::eq, 1.0);
    lp.add_row({{0, 2.0}, {1, 2.0}}, Sense::eq, 2.0);
    const auto r = simplex_solve(lp);
    CHECK(r.status == LpStatus::optimal);
    CHECK(r.value == doctest::Approx(2.0));
    CHECK(r.redundant_rows == 1);
  }
}

TEST_CASE("transportation problems agree with vertex enumeration") {
  SUBCASE("2 x 2") {
    const std::vector<double> a{0.5, 0.5}, b{0.3, 0.7}, c{1, 0, 0, 1};
    DiscreteMarginal ma{{0, 1}, a}, mb{{0, 1}, b};
    const auto lp = ot_program(ma, mb, CostFunction::expression("pos(1 - abs(x0 - x1))"));
    const auto r = simplex_solve(lp);
    CHECK(r.value == doctest::Approx(support::transport_by_vertices(a, b, c)));
    CHECK(r.value == doctest::Approx(0.8));
  }
  SUBCASE("random 5 x 5") {
    Stream rng(3);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<double> atoms_a(5), atoms_b(5), a(5), b(5);
      double sa = 0, sb = 0;
      for (int i = 0; i < 5; ++i) {
        atoms_a[i] = rng.normal();
        atoms_b[i] = rng.normal();
        a[i] = rng.uniform(0.1, 1.0);
        b[i] = rng.uniform(0.1, 1.0);
        sa += a[i];
        sb += b[i];
      }
      for (int i = 0; i < 5; ++i) a[i] /= sa, b[i] /= sb;
      const auto f = CostFunction::expression("sq(x0 - x1) * x0 + pos(x1)");
      std::vector<double> c;
      for (double x : atoms_a) {
        for (double y : atoms_b) c.push_back(f(std::vector<double>{x, y}));
      }
      const auto r = simplex_solve(ot_program({atoms_a, a}, {atoms_b, b}, f));
      REQUIRE(r.status == LpStatus::optimal);
      CHECK(r.certified);
      CHECK(r.value == doctest::Approx(support::transport_by_vertices(a, b, c)).epsilon(1e-9));
    }
  }
}

TEST_CASE("quantile bins") {
  const auto law = Distribution1D::normal(1.0, 2.0);
  const auto d = quantile_bins(law, 40);
  CHECK(d.atoms.size() == 40);
  CHECK(d.mean() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < 40; ++i) CHECK(d.atoms[i] > d.atoms[i - 1]);
  // discretizing within bins can only lower call prices
  for (double k : {-2.0, 0.3, 1.0, 4.0}) CHECK(d.call(k) <= support::normal_call(1.0, 2.0, k) + 1e-12);
}

TEST_CASE("ot and w2 against closed forms") {
  const auto m = Distribution1D::normal(0, 2);
  const auto r = discrete_ot(m, m, CostFunction::positive_sum(), 40, 40);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.certified);
  const double exact = support::comonotone_quadrature(
      2.0, 2.0, [](double x, double y) { return std::max(x + y, 0.0); });
  CHECK(exact == doctest::Approx(4.0 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-4));
  CHECK(std::abs(r.value - exact) <= 1.0 / 40);

  // sup -|x - y|^2 = -W2^2 = -(s1 - s2)^2 for centered normals
  const auto w = discrete_ot(Distribution1D::normal(0, 1), Distribution1D::normal(0, 2),
                             CostFunction::negative_squared_distance(), 200, 200);
  CHECK(-w.value == doctest::Approx(1.0).epsilon(0.02));
  const auto same = discrete_ot(m, m, CostFunction::negative_squared_distance(), 30, 30);
  CHECK(same.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
}

TEST_CASE("martingale transport") {
  const auto mu = Distribution1D::mixture({0.5, 0.5}, {-1, 1}, {0.5, 0.5});
  const auto r = discrete_mot(mu, mu, CostFunction::positive_increment(), 20, 20);
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(r.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

  double previous = HUGE_VAL;
  for (double s : {3.0, 2.0, 1.5}) {
    const auto wide = Distribution1D::normal(0, s);
    const auto v = discrete_mot(Distribution1D::normal(0, 1), wide,
                                CostFunction::positive_increment(), 20, 20);
    REQUIRE(v.status == LpStatus::optimal);
    CHECK(v.value < previous);
    previous = v.value;
  }
  const auto bad = discrete_mot(Distribution1D::normal(0, 2), Distribution1D::normal(0, 1),
                                CostFunction::positive_increment(), 10, 10);
  CHECK(bad.status == LpStatus::infeasible);
  CHECK_FALSE(bad.diagnostics.empty());

  DiscreteMarginal narrow{{-1, 1}, {0.5, 0.5}}, wide{{-2, 2}, {0.5, 0.5}};
  CHECK(convex_order(narrow, wide).holds);
  CHECK_FALSE(convex_order(wide, narrow).holds);
}

TEST_CASE("dcot and lipschitz relaxation") {
  const auto m = dcot_marginal();
  const auto f = CostFunction::positive_sum();
  const auto ot = discrete_ot(m, m, f, 40, 40);
  const auto dc = discrete_dcot();
  REQUIRE(dc.status == LpStatus::optimal);
  CHECK(dc.value <= ot.value + 1e-9);

  const std::size_t grid = 12;
  const auto ot12 = discrete_ot(m, m, f, grid, grid);
  const auto big = discrete_lipschitz_relaxation(m, m, f, 50.0, grid);
  CHECK(big.value == doctest::Approx(ot12.value).epsilon(1e-9));
  const auto d = quantile_bins(m, grid);
  const auto zero = discrete_lipschitz_relaxation(m, m, f, 0.0, grid);
  CHECK(zero.value == doctest::Approx(std::max(d.atoms.back() * 2, 0.0)));
  double previous = HUGE_VAL;
  for (double L : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    const auto r = discrete_lipschitz_relaxation(m, m, f, L, grid);
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.certified);
    CHECK(r.value <= previous + 1e-12);
    CHECK(r.value >= ot12.value - 1e-9);
    previous = r.value;
  }
  CHECK_THROWS(discrete_lipschitz_relaxation(m, m, f, -1.0, grid));
}
