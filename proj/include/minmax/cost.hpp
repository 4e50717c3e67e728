#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "minmax/autodiff.hpp"

namespace minmax {

namespace expr {
struct Node;
/// Parses a scalar expression over coordinates x0, x1, ...
///
/// Grammar: sums and differences of products, unary minus, numeric literals,
/// parentheses, and the functions pos(.) (positive part), abs(.), sq(.).
std::shared_ptr<const Node> parse(const std::string& text);
double evaluate(const Node& node, std::span<const double> x);
ad::Var build(ad::Tape& tape, const Node& node, ad::Var x);
/// Largest coordinate index referenced, or -1 for none.
int max_coordinate(const Node& node);
}  // namespace expr

/// Objective integrand f: R^d -> R.
class CostFunction {
 public:
  enum class Kind {
    /// (x0 + x1)^+
    positive_sum,
    /// (x1 - x0)^+
    positive_increment,
    /// -sum_i (x_i - x_{i + d/2})^2
    negative_squared_distance,
    /// user expression, see expr::parse
    expression,
  };

  static CostFunction positive_sum() { return CostFunction(Kind::positive_sum); }
  static CostFunction positive_increment() { return CostFunction(Kind::positive_increment); }
  static CostFunction negative_squared_distance() {
    return CostFunction(Kind::negative_squared_distance);
  }
  static CostFunction expression(const std::string& text);

  Kind kind() const noexcept { return kind_; }
  const std::string& text() const noexcept { return text_; }
  std::string name() const;
  static Kind kind_from_string(const std::string& s);

  /// Throws if f is not defined on R^d.
  void check_dimension(std::size_t d) const;

  double operator()(std::span<const double> x) const;
  /// f on every row of X (n x d), as n x 1.
  Array evaluate(const Array& x) const;
  ad::Var apply(ad::Tape& tape, ad::Var x) const;

 private:
  explicit CostFunction(Kind kind) : kind_(kind) {}

  Kind kind_;
  std::string text_;
  std::shared_ptr<const expr::Node> parsed_;
};

}  // namespace minmax
