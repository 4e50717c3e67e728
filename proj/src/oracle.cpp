#include "minmax/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace minmax {

void LinearProgram::add_row(std::vector<std::pair<std::size_t, double>> coeffs, Sense sense,
                            double rhs) {
  for (const auto& [j, v] : coeffs) {
    if (j >= vars) throw std::out_of_range("LP row references variable " + std::to_string(j));
    if (!std::isfinite(v)) throw std::invalid_argument("LP coefficient is not finite");
  }
  if (!std::isfinite(rhs)) throw std::invalid_argument("LP right-hand side is not finite");
  rows.push_back({std::move(coeffs), sense, rhs});
}

double LinearProgram::primal_residual(const std::vector<double>& x) const {
  double worst = 0.0;
  for (double v : x) worst = std::max(worst, -v);
  for (const Row& r : rows) {
    double lhs = 0.0;
    for (const auto& [j, v] : r.coeffs) lhs += v * x[j];
    const double d = lhs - r.rhs;
    switch (r.sense) {
      case Sense::le: worst = std::max(worst, d); break;
      case Sense::ge: worst = std::max(worst, -d); break;
      case Sense::eq: worst = std::max(worst, std::abs(d)); break;
    }
  }
  return worst;
}

double LinearProgram::value(const std::vector<double>& x) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < vars; ++j) acc += objective[j] * x[j];
  return acc;
}

std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

using Sense = LinearProgram::Sense;

class Tableau {
 public:
  Tableau(const LinearProgram& lp, const SimplexOptions& opt) : lp_(lp), opt_(opt) {
    const std::size_t m = lp.rows.size();
    n_ = lp.vars;
    sign_.assign(m, 1.0);
    std::size_t slack = 0, art = 0;
    for (std::size_t i = 0; i < m; ++i) {
      Sense s = lp.rows[i].sense;
      if (lp.rows[i].rhs < 0.0) {
        sign_[i] = -1.0;
        if (s == Sense::le) {
          s = Sense::ge;
        } else if (s == Sense::ge) {
          s = Sense::le;
        }
      }
      sense_.push_back(s);
      if (s != Sense::eq) ++slack;
      if (s != Sense::le) ++art;
    }
    first_art_ = n_ + slack;
    cols_ = first_art_ + art;
    width_ = cols_ + 1;
    t_.assign(m * width_, 0.0);
    basis_.assign(m, 0);
    row_id_.resize(m);
    std::size_t next_slack = n_, next_art = first_art_;
    for (std::size_t i = 0; i < m; ++i) {
      row_id_[i] = i;
      for (const auto& [j, v] : lp.rows[i].coeffs) at(i, j) += sign_[i] * v;
      at(i, cols_) = sign_[i] * lp.rows[i].rhs;
      if (sense_[i] == Sense::le) {
        at(i, next_slack) = 1.0;
        basis_[i] = next_slack++;
      } else {
        if (sense_[i] == Sense::ge) at(i, next_slack++) = -1.0;
        at(i, next_art) = 1.0;
        basis_[i] = next_art++;
      }
    }
    max_pivots_ = opt.max_pivots ? opt.max_pivots : 200 * (m + cols_) + 1000;
  }

  SimplexResult solve() {
    SimplexResult res;
    // Phase 1: maximize -sum(artificials).
    if (cols_ > first_art_) {
      std::vector<double> c(cols_, 0.0);
      for (std::size_t j = first_art_; j < cols_; ++j) c[j] = -1.0;
      price(c);
      const LpStatus s = run(cols_);
      res.pivots = pivots_;
      if (s == LpStatus::iteration_limit) {
        res.status = s;
        return res;
      }
      double infeasibility = 0.0;
      for (std::size_t i = 0; i < rows(); ++i) {
        if (basis_[i] >= first_art_) infeasibility += at(i, cols_);
      }
      double scale = 1.0;
      for (const auto& r : lp_.rows) scale = std::max(scale, std::abs(r.rhs));
      if (infeasibility > opt_.feasibility_tolerance * scale) {
        res.status = LpStatus::infeasible;
        return res;
      }
      res.redundant_rows = drive_out_artificials();
    }
    // Phase 2 on the structural and slack columns.
    std::vector<double> c(cols_, 0.0);
    std::copy(lp_.objective.begin(), lp_.objective.end(), c.begin());
    price(c);
    res.status = run(first_art_);
    res.pivots = pivots_;
    if (res.status != LpStatus::optimal) return res;
    certify(res);
    return res;
  }

 private:
  double& at(std::size_t i, std::size_t j) { return t_[i * width_ + j]; }
  double at(std::size_t i, std::size_t j) const { return t_[i * width_ + j]; }
  std::size_t rows() const { return basis_.size(); }

  void price(const std::vector<double>& c) {
    cost_ = c;
    d_.assign(width_, 0.0);
    for (std::size_t j = 0; j < cols_; ++j) d_[j] = c[j];
    for (std::size_t i = 0; i < rows(); ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j < width_; ++j) d_[j] -= cb * at(i, j);
    }
  }

  void pivot(std::size_t r, std::size_t e) {
    const double p = at(r, e);
    nz_.clear();
    for (std::size_t k = 0; k < width_; ++k) {
      double& v = at(r, k);
      if (v != 0.0) {
        v /= p;
        nz_.push_back(k);
      }
    }
    at(r, e) = 1.0;
    for (std::size_t i = 0; i < rows(); ++i) {
      if (i == r) continue;
      const double f = at(i, e);
      if (f == 0.0) continue;
      double* row = &t_[i * width_];
      const double* prow = &t_[r * width_];
      for (std::size_t k : nz_) row[k] -= f * prow[k];
      row[e] = 0.0;
    }
    const double f = d_[e];
    if (f != 0.0) {
      for (std::size_t k : nz_) d_[k] -= f * at(r, k);
      d_[e] = 0.0;
    }
    basis_[r] = e;
    ++pivots_;
  }

  // Columns [0, limit) may enter.
  LpStatus run(std::size_t limit) {
    std::size_t degenerate = 0;
    bool bland = false;
    for (;;) {
      if (pivots_ >= max_pivots_) return LpStatus::iteration_limit;
      std::size_t e = cols_;
      double best = opt_.cost_tolerance;
      for (std::size_t j = 0; j < limit; ++j) {
        if (d_[j] > best) {
          e = j;
          if (bland) break;
          best = d_[j];
        }
      }
      if (e == cols_) return LpStatus::optimal;

      std::size_t r = rows();
      double ratio = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows(); ++i) {
        const double a = at(i, e);
        if (a <= opt_.pivot_tolerance) continue;
        const double q = std::max(at(i, cols_), 0.0) / a;
        if (q < ratio - 1e-14 || (q <= ratio + 1e-14 && r < rows() && basis_[i] < basis_[r])) {
          ratio = std::min(ratio, q);
          r = i;
        }
      }
      if (r == rows()) return LpStatus::unbounded;
      if (ratio <= 1e-14) {
        if (++degenerate >= opt_.degenerate_switch) bland = true;
      } else {
        degenerate = 0;
        bland = false;
      }
      pivot(r, e);
    }
  }

  std::size_t drive_out_artificials() {
    std::size_t removed = 0;
    for (std::size_t i = 0; i < rows();) {
      if (basis_[i] < first_art_) {
        ++i;
        continue;
      }
      std::size_t e = cols_;
      double best = opt_.pivot_tolerance;
      for (std::size_t j = 0; j < first_art_; ++j) {
        if (std::abs(at(i, j)) > best) {
          best = std::abs(at(i, j));
          e = j;
        }
      }
      if (e != cols_) {
        pivot(i, e);
        ++i;
        continue;
      }
      // Linearly dependent row: drop it.
      t_.erase(t_.begin() + static_cast<std::ptrdiff_t>(i * width_),
               t_.begin() + static_cast<std::ptrdiff_t>((i + 1) * width_));
      basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(i));
      row_id_.erase(row_id_.begin() + static_cast<std::ptrdiff_t>(i));
      ++removed;
    }
    return removed;
  }

  // Column j of the sign-adjusted original system, restricted to kept rows.
  Eigen::VectorXd column(std::size_t j) const {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows()));
    if (j < n_) {
      for (std::size_t k = 0; k < rows(); ++k) {
        const std::size_t i = row_id_[k];
        for (const auto& [v, a] : lp_.rows[i].coeffs) {
          if (v == j) col(static_cast<Eigen::Index>(k)) += sign_[i] * a;
        }
      }
      return col;
    }
    // slack, surplus or artificial: a unit column on its own row
    std::size_t next_slack = n_, next_art = first_art_;
    for (std::size_t i = 0; i < lp_.rows.size(); ++i) {
      const auto kept = std::find(row_id_.begin(), row_id_.end(), i);
      const bool has_slack = sense_[i] != Sense::eq;
      const bool has_art = sense_[i] != Sense::le;
      if (has_slack && next_slack == j && kept != row_id_.end()) {
        col(kept - row_id_.begin()) = sense_[i] == Sense::le ? 1.0 : -1.0;
      }
      if (has_art && next_art == j && kept != row_id_.end()) col(kept - row_id_.begin()) = 1.0;
      if (has_slack) ++next_slack;
      if (has_art) ++next_art;
    }
    return col;
  }

  // Rebuilds x_B and y from the basis with a fresh factorization and checks
  // primal feasibility, reduced costs, dual signs and the duality gap.
  void certify(SimplexResult& res) const {
    const auto m = static_cast<Eigen::Index>(rows());
    Eigen::MatrixXd B(m, m);
    Eigen::VectorXd b(m), cb(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      B.col(k) = column(basis_[static_cast<std::size_t>(k)]);
      const std::size_t i = row_id_[static_cast<std::size_t>(k)];
      b(k) = sign_[i] * lp_.rows[i].rhs;
      cb(k) = basis_[static_cast<std::size_t>(k)] < n_ ? lp_.objective[basis_[static_cast<std::size_t>(k)]] : 0.0;
    }
    res.x.assign(n_, 0.0);
    res.duals.assign(lp_.rows.size(), 0.0);
    if (m > 0) {
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      const Eigen::VectorXd xb = lu.solve(b);
      const Eigen::VectorXd y = lu.transpose().solve(cb);
      for (Eigen::Index k = 0; k < m; ++k) {
        const std::size_t j = basis_[static_cast<std::size_t>(k)];
        if (j < n_) res.x[j] = std::max(xb(k), 0.0);
        const std::size_t i = row_id_[static_cast<std::size_t>(k)];
        res.duals[i] = sign_[i] * y(k);
      }
    }
    res.value = lp_.value(res.x);
    res.primal_residual = lp_.primal_residual(res.x);

    std::vector<double> aty(n_, 0.0);
    double dual_value = 0.0;
    res.dual_sign_violation = 0.0;
    for (std::size_t i = 0; i < lp_.rows.size(); ++i) {
      const auto& row = lp_.rows[i];
      const double y = res.duals[i];
      for (const auto& [j, a] : row.coeffs) aty[j] += a * y;
      dual_value += row.rhs * y;
      if (row.sense == Sense::le) res.dual_sign_violation = std::max(res.dual_sign_violation, -y);
      if (row.sense == Sense::ge) res.dual_sign_violation = std::max(res.dual_sign_violation, y);
    }
    res.max_reduced_cost = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      res.max_reduced_cost = std::max(res.max_reduced_cost, lp_.objective[j] - aty[j]);
    }
    res.duality_gap = std::abs(res.value - dual_value);
    res.certified = res.primal_residual <= 1e-9 && res.max_reduced_cost <= 1e-8 &&
                    res.dual_sign_violation <= 1e-8 && res.duality_gap <= 1e-8;
  }

  const LinearProgram& lp_;
  SimplexOptions opt_;
  std::size_t n_ = 0, first_art_ = 0, cols_ = 0, width_ = 0, pivots_ = 0, max_pivots_ = 0;
  std::vector<double> sign_;
  std::vector<Sense> sense_;
  std::vector<double> t_, d_, cost_;
  std::vector<std::size_t> basis_, row_id_, nz_;
};

OracleResult from_simplex(const LinearProgram& lp, const SimplexResult& s, std::string grid) {
  OracleResult r;
  r.status = s.status;
  r.value = s.value;
  r.pivots = s.pivots;
  r.rows = lp.rows.size();
  r.vars = lp.vars;
  r.redundant_rows = s.redundant_rows;
  r.certified = s.certified;
  r.grid = std::move(grid);
  r.plan = s.x;
  return r;
}

std::string grid_label(std::size_t n1, std::size_t n2) {
  return std::to_string(n1) + "x" + std::to_string(n2);
}

}  // namespace

SimplexResult simplex_solve(const LinearProgram& lp, const SimplexOptions& opt) {
  if (lp.objective.size() != lp.vars) throw std::invalid_argument("objective size != vars");
  for (double c : lp.objective) {
    if (!std::isfinite(c)) throw std::invalid_argument("LP objective is not finite");
  }
  return Tableau(lp, opt).solve();
}

double DiscreteMarginal::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) m += weights[i] * atoms[i];
  return m;
}

double DiscreteMarginal::call(double strike) const {
  double c = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) c += weights[i] * std::max(atoms[i] - strike, 0.0);
  return c;
}

DiscreteMarginal quantile_bins(const Distribution1D& law, std::size_t atoms) {
  if (atoms == 0) throw std::invalid_argument("need at least one atom");
  DiscreteMarginal d;
  const double w = 1.0 / static_cast<double>(atoms);
  double lo = law.quantile(0.0);
  for (std::size_t k = 0; k < atoms; ++k) {
    const double hi = law.quantile(static_cast<double>(k + 1) * w);
    d.atoms.push_back(law.partial_expectation(lo, hi) / w);
    d.weights.push_back(w);
    lo = hi;
  }
  return d;
}

nlohmann::json to_json(const OracleResult& r) {
  nlohmann::json j = {{"status", to_string(r.status)},
                      {"pivots", r.pivots},
                      {"rows", r.rows},
                      {"vars", r.vars},
                      {"redundant_rows", r.redundant_rows},
                      {"certified", r.certified},
                      {"grid", r.grid}};
  j["value"] = r.status == LpStatus::optimal ? nlohmann::json(r.value) : nlohmann::json(nullptr);
  if (!r.diagnostics.empty()) j["diagnostics"] = r.diagnostics;
  return j;
}

LinearProgram ot_program(const DiscreteMarginal& a, const DiscreteMarginal& b,
                         const CostFunction& f) {
  const std::size_t n1 = a.atoms.size(), n2 = b.atoms.size();
  LinearProgram lp(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t k = 0; k < n2; ++k) {
      const double x[2] = {a.atoms[i], b.atoms[k]};
      lp.objective[i * n2 + k] = f(x);
    }
  }
  for (std::size_t i = 0; i < n1; ++i) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t k = 0; k < n2; ++k) row.emplace_back(i * n2 + k, 1.0);
    lp.add_row(std::move(row), Sense::eq, a.weights[i]);
  }
  for (std::size_t k = 0; k < n2; ++k) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = 0; i < n1; ++i) row.emplace_back(i * n2 + k, 1.0);
    lp.add_row(std::move(row), Sense::eq, b.weights[k]);
  }
  return lp;
}

OracleResult discrete_ot(const Distribution1D& mu1, const Distribution1D& mu2,
                         const CostFunction& f, std::size_t n1, std::size_t n2) {
  f.check_dimension(2);
  const LinearProgram lp = ot_program(quantile_bins(mu1, n1), quantile_bins(mu2, n2), f);
  return from_simplex(lp, simplex_solve(lp), grid_label(n1, n2));
}

ConvexOrderCheck convex_order(const DiscreteMarginal& first, const DiscreteMarginal& second,
                              double tolerance) {
  ConvexOrderCheck c;
  c.mean_gap = second.mean() - first.mean();
  c.worst_gap = std::numeric_limits<double>::infinity();
  // Both call functions are piecewise linear with kinks at the atoms.
  for (const DiscreteMarginal* m : {&first, &second}) {
    for (double k : m->atoms) {
      const double gap = second.call(k) - first.call(k);
      if (gap < c.worst_gap) {
        c.worst_gap = gap;
        c.worst_strike = k;
      }
    }
  }
  c.holds = std::abs(c.mean_gap) <= tolerance && c.worst_gap >= -tolerance;
  return c;
}

OracleResult discrete_mot(const Distribution1D& mu1, const Distribution1D& mu2,
                          const CostFunction& f, std::size_t n1, std::size_t n2) {
  f.check_dimension(2);
  const DiscreteMarginal a = quantile_bins(mu1, n1);
  DiscreteMarginal b = quantile_bins(mu2, n2);
  // Binning preserves each mean exactly in theory; remove rounding drift.
  const double shift = a.mean() - b.mean();
  if (std::abs(shift) < 1e-10) {
    for (double& x : b.atoms) x += shift;
  }
  const ConvexOrderCheck order = convex_order(a, b);
  if (!order.holds) {
    OracleResult r;
    r.status = LpStatus::infeasible;
    r.grid = grid_label(n1, n2);
    std::ostringstream os;
    os << "discretized marginals are not in convex order: mean gap " << order.mean_gap
       << ", call gap " << order.worst_gap << " at strike " << order.worst_strike;
    r.diagnostics = os.str();
    return r;
  }
  LinearProgram lp = ot_program(a, b, f);
  for (std::size_t i = 0; i < n1; ++i) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t k = 0; k < n2; ++k) row.emplace_back(i * n2 + k, b.atoms[k] - a.atoms[i]);
    lp.add_row(std::move(row), Sense::eq, 0.0);
  }
  return from_simplex(lp, simplex_solve(lp), grid_label(n1, n2));
}

OracleResult discrete_dcot(const DcotOptions& opt) {
  if (opt.difference_bins == 0) throw std::invalid_argument("need at least one difference bin");
  const DiscreteMarginal a = quantile_bins(dcot_marginal(), opt.grid);
  const DiscreteMarginal& b = a;
  LinearProgram lp = ot_program(a, b, CostFunction::positive_sum());
  const std::string label = grid_label(opt.grid, opt.grid) + ", " +
                            std::to_string(opt.difference_bins) + " difference bins";
  if (opt.include_difference_rows) {
    const Distribution1D kappa = dcot_difference_law();
    const std::size_t B = opt.difference_bins;
    std::vector<double> edges;
    for (std::size_t l = 1; l < B; ++l) {
      edges.push_back(kappa.quantile(static_cast<double>(l) / static_cast<double>(B)));
    }
    std::vector<std::vector<std::pair<std::size_t, double>>> bins(B);
    for (std::size_t i = 0; i < opt.grid; ++i) {
      for (std::size_t k = 0; k < opt.grid; ++k) {
        const double diff = b.atoms[k] - a.atoms[i];
        const auto l = static_cast<std::size_t>(
            std::upper_bound(edges.begin(), edges.end(), diff) - edges.begin());
        bins[l].emplace_back(i * opt.grid + k, 1.0);
      }
    }
    const double p = 1.0 / static_cast<double>(B);
    for (auto& cells : bins) {
      lp.add_row(cells, Sense::le, p + opt.mass_tolerance);
      lp.add_row(std::move(cells), Sense::ge, std::max(p - opt.mass_tolerance, 0.0));
    }
  }
  return from_simplex(lp, simplex_solve(lp), label);
}

OracleResult discrete_lipschitz_relaxation(const Distribution1D& mu1, const Distribution1D& mu2,
                                           const CostFunction& f, double L, std::size_t grid) {
  if (!(L >= 0.0)) throw std::invalid_argument("Lipschitz constant must be >= 0");
  if (grid < 2) throw std::invalid_argument("grid needs at least 2 points");
  f.check_dimension(2);
  const DiscreteMarginal a = quantile_bins(mu1, grid), b = quantile_bins(mu2, grid);
  const std::size_t n = grid, cells = n * n, gaps = n - 1;
  LinearProgram lp(cells + 2 * gaps);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double x[2] = {a.atoms[i], b.atoms[k]};
      lp.objective[i * n + k] = f(x);
    }
  }
  std::vector<std::pair<std::size_t, double>> total;
  for (std::size_t c = 0; c < cells; ++c) total.emplace_back(c, 1.0);
  lp.add_row(std::move(total), Sense::eq, 1.0);

  // W1 between laws on the same sorted atoms is sum_i |F(x_i) - G(x_i)| (x_{i+1} - x_i);
  // slack s_i >= |F_nu(x_i) - F_mu(x_i)|.
  for (std::size_t side = 0; side < 2; ++side) {
    const DiscreteMarginal& m = side == 0 ? a : b;
    double target_cdf = 0.0;
    for (std::size_t i = 0; i < gaps; ++i) {
      target_cdf += m.weights[i];
      const std::size_t slack = cells + side * gaps + i;
      lp.objective[slack] = -L * (m.atoms[i + 1] - m.atoms[i]);
      std::vector<std::pair<std::size_t, double>> cdf;
      for (std::size_t u = 0; u <= i; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
          cdf.emplace_back(side == 0 ? u * n + v : v * n + u, 1.0);
        }
      }
      auto upper = cdf, lower = cdf;
      for (auto& [j, c] : upper) c = -1.0;
      upper.emplace_back(slack, 1.0);
      lower.emplace_back(slack, 1.0);
      lp.add_row(std::move(upper), Sense::ge, -target_cdf);
      lp.add_row(std::move(lower), Sense::ge, target_cdf);
    }
  }
  OracleResult r = from_simplex(lp, simplex_solve(lp), grid_label(n, n));
  r.plan.resize(std::min(r.plan.size(), cells));
  return r;
}

}  // namespace minmax
