#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the code under test for the value
// it is checked against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "minmax/autodiff.hpp"
#include "minmax/nets.hpp"
#include "minmax/rng.hpp"

namespace support {

using minmax::Array;
using minmax::Parameter;

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences of `loss` with respect to every entry of `params`.
inline std::vector<std::vector<double>> finite_difference(
    const std::vector<Parameter*>& params, const std::function<double()>& loss, double h = 1e-5) {
  std::vector<std::vector<double>> out;
  for (Parameter* p : params) {
    std::vector<double> g(p->value.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double down = loss();
      p->value[i] = keep;
      g[i] = (up - down) / (2 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Largest relative error between analytic gradients and `fd`. Entries where
/// both are below `floor` in magnitude are compared absolutely.
inline double max_grad_error(const std::vector<Parameter*>& params,
                             const std::vector<std::vector<double>>& fd, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < fd[k].size(); ++i) {
      worst = std::max(worst, rel_err(params[k]->grad[i], fd[k][i], floor));
    }
  }
  return worst;
}

inline Array random_matrix(std::size_t rows, std::size_t cols, minmax::Stream& rng,
                           double scale = 1.0) {
  Array a(minmax::Shape{rows, cols});
  for (auto& v : a.storage()) v = scale * rng.normal();
  return a;
}

/// Hand-rolled forward pass of a plain MLP on one input row, straight from
/// the weights, used as an oracle for the library forward.
inline double mlp_forward_reference(const minmax::MLP& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  const std::size_t layers = net.layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const Array& w = net.weight(l).value;
    const Array& b = net.bias(l).value;
    std::vector<double> z(w.rows(), 0.0);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      z[o] = b[o];
      for (std::size_t i = 0; i < w.cols(); ++i) z[o] += w(o, i) * a[i];
      if (l + 1 < layers) {
        z[o] = net.config().activation == minmax::Activation::relu ? std::max(0.0, z[o])
                                                                   : std::tanh(z[o]);
      }
    }
    a = std::move(z);
  }
  return a.front();
}

/// Exhaustive vertex enumeration for the transportation LP
///   max sum c_ij x_ij  s.t.  row sums a, column sums b, x >= 0.
/// Basic solutions are spanning trees of the complete bipartite graph; each
/// tree is solved by peeling leaves.
inline double transport_by_vertices(const std::vector<double>& a, const std::vector<double>& b,
                                    const std::vector<double>& c) {
  const std::size_t m = a.size(), n = b.size(), edges = m * n, k = m + n - 1;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<std::size_t> parent(m + n);
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  while (true) {
    std::iota(parent.begin(), parent.end(), 0);
    bool tree = true;
    for (std::size_t e : pick) {
      const std::size_t r = find(e / n), s = find(m + e % n);
      if (r == s) {
        tree = false;
        break;
      }
      parent[r] = s;
    }
    if (tree) {
      std::vector<double> supply(m + n);
      for (std::size_t i = 0; i < m; ++i) supply[i] = a[i];
      for (std::size_t j = 0; j < n; ++j) supply[m + j] = b[j];
      std::vector<bool> used(k, false);
      std::vector<double> x(edges, 0.0);
      std::vector<std::size_t> degree(m + n, 0);
      for (std::size_t e : pick) ++degree[e / n], ++degree[m + e % n];
      bool feasible = true;
      for (std::size_t round = 0; round < k; ++round) {
        std::size_t slot = k;
        std::size_t leaf = 0;
        for (std::size_t q = 0; q < k && slot == k; ++q) {
          if (used[q]) continue;
          const std::size_t r = pick[q] / n, s = m + pick[q] % n;
          if (degree[r] == 1) slot = q, leaf = r;
          else if (degree[s] == 1) slot = q, leaf = s;
        }
        const std::size_t e = pick[slot];
        const std::size_t r = e / n, s = m + e % n;
        const double flow = supply[leaf];
        x[e] = flow;
        supply[r] -= flow;
        supply[s] -= flow;
        --degree[r];
        --degree[s];
        used[slot] = true;
        if (flow < -1e-12) feasible = false;
      }
      if (feasible) {
        double v = 0.0;
        for (std::size_t e = 0; e < edges; ++e) v += c[e] * x[e];
        best = std::max(best, v);
      }
    }
    // next k-subset of {0..edges-1}
    std::size_t i = k;
    while (i > 0 && pick[i - 1] == edges - k + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

/// int_0^1 g(F1^-1(u), F2^-1(u)) du for normal marginals, by the midpoint
/// rule on `points` cells.
inline double comonotone_quadrature(double s1, double s2,
                                    const std::function<double(double, double)>& g,
                                    std::size_t points = 200000) {
  boost::math::normal_distribution<> d1(0.0, s1), d2(0.0, s2);
  double acc = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(points);
    acc += g(boost::math::quantile(d1, u), boost::math::quantile(d2, u));
  }
  return acc / static_cast<double>(points);
}

/// E(X - b)^+ for X ~ N(m, s^2).
inline double normal_call(double m, double s, double b) {
  boost::math::normal_distribution<> z;
  const double d = (m - b) / s;
  return s * boost::math::pdf(z, d) + (m - b) * boost::math::cdf(z, d);
}

inline double population_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace support
