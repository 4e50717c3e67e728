#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "minmax/cost.hpp"
#include "minmax/problems.hpp"

namespace minmax {

/// maximize c^T x subject to sparse rows a_i^T x {<=, =, >=} b_i and x >= 0.
struct LinearProgram {
  enum class Sense { le, eq, ge };
  struct Row {
    std::vector<std::pair<std::size_t, double>> coeffs;
    Sense sense = Sense::eq;
    double rhs = 0.0;
  };

  std::size_t vars = 0;
  std::vector<double> objective;
  std::vector<Row> rows;

  explicit LinearProgram(std::size_t n = 0) : vars(n), objective(n, 0.0) {}
  void add_row(std::vector<std::pair<std::size_t, double>> coeffs, Sense sense, double rhs);
  /// Largest violation of any row or of nonnegativity at x.
  double primal_residual(const std::vector<double>& x) const;
  double value(const std::vector<double>& x) const;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };
std::string to_string(LpStatus s);

struct SimplexOptions {
  double pivot_tolerance = 1e-9;
  double cost_tolerance = 1e-9;
  double feasibility_tolerance = 1e-9;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t degenerate_switch = 50;
  std::size_t max_pivots = 0;  // 0 = automatic
};

struct SimplexResult {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;
  std::vector<double> x;
  /// Row multipliers in the orientation of the input rows.
  std::vector<double> duals;
  std::size_t pivots = 0;
  /// Rows found linearly dependent during phase 1.
  std::size_t redundant_rows = 0;
  double primal_residual = 0.0;
  /// Largest positive reduced cost c_j - y^T A_j (should be <= 0).
  double max_reduced_cost = 0.0;
  /// Largest dual sign violation over inequality rows.
  double dual_sign_violation = 0.0;
  double duality_gap = 0.0;
  /// Primal feasibility, dual feasibility and zero gap all hold.
  bool certified = false;
};

/// Two-phase primal simplex on a dense tableau. Dantzig pricing, falling
/// back to Bland's rule after a run of degenerate pivots. At optimality the
/// dual vector is rebuilt from the final basis and the result is certified
/// independently of the tableau.
SimplexResult simplex_solve(const LinearProgram& lp, const SimplexOptions& opt = {});

/// Finite law on the line.
struct DiscreteMarginal {
  std::vector<double> atoms;
  std::vector<double> weights;

  double mean() const;
  /// E(X - k)^+
  double call(double strike) const;
};

/// Equal-mass atoms placed at the conditional means of the quantile bins,
/// so the mean is preserved.
DiscreteMarginal quantile_bins(const Distribution1D& law, std::size_t atoms);

struct OracleResult {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;
  std::size_t pivots = 0;
  std::size_t rows = 0;
  std::size_t vars = 0;
  std::size_t redundant_rows = 0;
  bool certified = false;
  std::string grid;
  std::string diagnostics;
  std::vector<double> plan;
};

nlohmann::json to_json(const OracleResult& r);

/// Couplings of two discrete marginals as an LP over the product grid.
LinearProgram ot_program(const DiscreteMarginal& a, const DiscreteMarginal& b,
                         const CostFunction& f);

OracleResult discrete_ot(const Distribution1D& mu1, const Distribution1D& mu2,
                         const CostFunction& f, std::size_t n1, std::size_t n2);

struct ConvexOrderCheck {
  bool holds = true;
  double mean_gap = 0.0;
  /// Most negative call-price difference C_2(k) - C_1(k) and its strike.
  double worst_gap = 0.0;
  double worst_strike = 0.0;
};

/// Compares means and call prices at every atom of both laws.
ConvexOrderCheck convex_order(const DiscreteMarginal& first, const DiscreteMarginal& second,
                              double tolerance = 1e-12);

/// Martingale couplings, with one conditional-mean row per atom of mu1.
/// Reports `infeasible` with diagnostics when the discretized marginals are
/// not in convex order, without calling the solver.
OracleResult discrete_mot(const Distribution1D& mu1, const Distribution1D& mu2,
                          const CostFunction& f, std::size_t n1, std::size_t n2);

struct DcotOptions {
  std::size_t grid = 40;
  std::size_t difference_bins = 25;
  /// Each bin's mass is matched within this tolerance.
  double mass_tolerance = 1e-3;
  bool include_difference_rows = true;
};

/// OT between the two N(0, 2^2) marginals, with the law of x2 - x1 binned
/// into equal-probability bins of Student-t(8).
OracleResult discrete_dcot(const DcotOptions& opt = {});

/// sup over couplings nu on the product grid of int f dnu
/// - L (W1(nu_1, mu_1) + W1(nu_2, mu_2)), with W1 written through CDF gaps.
OracleResult discrete_lipschitz_relaxation(const Distribution1D& mu1, const Distribution1D& mu2,
                                           const CostFunction& f, double L, std::size_t grid);

}  // namespace minmax
