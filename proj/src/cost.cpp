#include "minmax/cost.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace minmax {
namespace expr {

struct Node {
  enum class Kind { number, coordinate, add, sub, mul, neg, pos, abs, sq } kind;
  double value = 0.0;
  std::size_t index = 0;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Ptr = std::shared_ptr<const Node>;

Ptr make(Node::Kind k, Ptr a = nullptr, Ptr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  Ptr parse() {
    Ptr e = sum();
    skip();
    if (pos_ != s_.size()) error("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    throw std::invalid_argument("cost expression at offset " + std::to_string(pos_) + ": " +
                                what);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Ptr sum() {
    Ptr lhs = product();
    for (;;) {
      if (eat('+')) {
        lhs = make(Node::Kind::add, lhs, product());
      } else if (eat('-')) {
        lhs = make(Node::Kind::sub, lhs, product());
      } else {
        return lhs;
      }
    }
  }

  Ptr product() {
    Ptr lhs = unary();
    while (eat('*')) lhs = make(Node::Kind::mul, lhs, unary());
    return lhs;
  }

  Ptr unary() {
    if (eat('-')) return make(Node::Kind::neg, unary());
    if (eat('+')) return unary();
    return atom();
  }

  Ptr atom() {
    skip();
    if (pos_ >= s_.size()) error("unexpected end of expression");
    if (eat('(')) {
      Ptr e = sum();
      if (!eat(')')) error("expected ')'");
      return e;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::number;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string word = s_.substr(start, pos_ - start);
      if (word.size() > 1 && word[0] == 'x' &&
          std::all_of(word.begin() + 1, word.end(),
                      [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::coordinate;
        n->index = std::stoul(word.substr(1));
        return n;
      }
      Node::Kind k;
      if (word == "pos") {
        k = Node::Kind::pos;
      } else if (word == "abs") {
        k = Node::Kind::abs;
      } else if (word == "sq") {
        k = Node::Kind::sq;
      } else {
        error("unknown identifier '" + word + "'");
      }
      if (!eat('(')) error("expected '(' after " + word);
      Ptr arg = sum();
      if (!eat(')')) error("expected ')'");
      return make(k, arg);
    }
    error("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::shared_ptr<const Node> parse(const std::string& text) { return Parser(text).parse(); }

double evaluate(const Node& n, std::span<const double> x) {
  switch (n.kind) {
    case Node::Kind::number: return n.value;
    case Node::Kind::coordinate: return x[n.index];
    case Node::Kind::add: return evaluate(*n.lhs, x) + evaluate(*n.rhs, x);
    case Node::Kind::sub: return evaluate(*n.lhs, x) - evaluate(*n.rhs, x);
    case Node::Kind::mul: return evaluate(*n.lhs, x) * evaluate(*n.rhs, x);
    case Node::Kind::neg: return -evaluate(*n.lhs, x);
    case Node::Kind::pos: return std::max(evaluate(*n.lhs, x), 0.0);
    case Node::Kind::abs: return std::abs(evaluate(*n.lhs, x));
    case Node::Kind::sq: {
      const double v = evaluate(*n.lhs, x);
      return v * v;
    }
  }
  return 0.0;
}

ad::Var build(ad::Tape& tape, const Node& n, ad::Var x) {
  switch (n.kind) {
    case Node::Kind::number:
      return tape.constant(Array(Shape{x.value().rows(), 1}, n.value));
    case Node::Kind::coordinate:
      return tape.slice_cols(x, n.index, n.index + 1);
    case Node::Kind::add: return build(tape, *n.lhs, x) + build(tape, *n.rhs, x);
    case Node::Kind::sub: return build(tape, *n.lhs, x) - build(tape, *n.rhs, x);
    case Node::Kind::mul: return build(tape, *n.lhs, x) * build(tape, *n.rhs, x);
    case Node::Kind::neg: return -build(tape, *n.lhs, x);
    case Node::Kind::pos: return ad::relu(build(tape, *n.lhs, x));
    case Node::Kind::abs: {
      ad::Var a = build(tape, *n.lhs, x);
      return ad::relu(a) + ad::relu(-a);
    }
    case Node::Kind::sq: return ad::square(build(tape, *n.lhs, x));
  }
  throw std::logic_error("unhandled expression node");
}

int max_coordinate(const Node& n) {
  int m = n.kind == Node::Kind::coordinate ? static_cast<int>(n.index) : -1;
  if (n.lhs) m = std::max(m, max_coordinate(*n.lhs));
  if (n.rhs) m = std::max(m, max_coordinate(*n.rhs));
  return m;
}

}  // namespace expr

CostFunction CostFunction::expression(const std::string& text) {
  CostFunction f(Kind::expression);
  f.text_ = text;
  f.parsed_ = expr::parse(text);
  return f;
}

std::string CostFunction::name() const {
  switch (kind_) {
    case Kind::positive_sum: return "positive_sum";
    case Kind::positive_increment: return "positive_increment";
    case Kind::negative_squared_distance: return "negative_squared_distance";
    case Kind::expression: return "expression";
  }
  return "unknown";
}

CostFunction::Kind CostFunction::kind_from_string(const std::string& s) {
  if (s == "positive_sum") return Kind::positive_sum;
  if (s == "positive_increment") return Kind::positive_increment;
  if (s == "negative_squared_distance") return Kind::negative_squared_distance;
  if (s == "expression") return Kind::expression;
  throw std::invalid_argument("unknown cost kind '" + s + "'");
}

void CostFunction::check_dimension(std::size_t d) const {
  switch (kind_) {
    case Kind::positive_sum:
    case Kind::positive_increment:
      if (d < 2) throw std::invalid_argument(name() + " needs d >= 2");
      return;
    case Kind::negative_squared_distance:
      if (d < 2 || d % 2 != 0) throw std::invalid_argument(name() + " needs even d >= 2");
      return;
    case Kind::expression:
      if (expr::max_coordinate(*parsed_) >= static_cast<int>(d)) {
        throw std::invalid_argument("cost expression references a coordinate >= d");
      }
      return;
  }
}

double CostFunction::operator()(std::span<const double> x) const {
  switch (kind_) {
    case Kind::positive_sum: return std::max(x[0] + x[1], 0.0);
    case Kind::positive_increment: return std::max(x[1] - x[0], 0.0);
    case Kind::negative_squared_distance: {
      const std::size_t half = x.size() / 2;
      double acc = 0.0;
      for (std::size_t i = 0; i < half; ++i) {
        const double diff = x[i] - x[half + i];
        acc += diff * diff;
      }
      return -acc;
    }
    case Kind::expression: return expr::evaluate(*parsed_, x);
  }
  return 0.0;
}

Array CostFunction::evaluate(const Array& x) const {
  const std::size_t n = x.rows(), d = x.cols();
  Array out(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (*this)(std::span<const double>(x.storage().data() + i * d, d));
  }
  return out;
}

ad::Var CostFunction::apply(ad::Tape& tape, ad::Var x) const {
  const std::size_t d = x.value().cols();
  switch (kind_) {
    case Kind::positive_sum:
      return ad::relu(tape.slice_cols(x, 0, 1) + tape.slice_cols(x, 1, 2));
    case Kind::positive_increment:
      return ad::relu(tape.slice_cols(x, 1, 2) - tape.slice_cols(x, 0, 1));
    case Kind::negative_squared_distance: {
      const std::size_t half = d / 2;
      ad::Var diff = tape.slice_cols(x, 0, half) - tape.slice_cols(x, half, d);
      return -tape.row_sum(ad::square(diff));
    }
    case Kind::expression: return expr::build(tape, *parsed_, x);
  }
  throw std::logic_error("unhandled cost kind");
}

}  // namespace minmax
