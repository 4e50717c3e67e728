#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <optional>
#include <vector>

#include "minmax/array.hpp"

namespace minmax {

/// A trainable array together with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Array value);

  std::string name;
  Array value;
  Array grad;
};

/// Raised by Tape::backward when a non-finite gradient appears.
struct NumericError : std::runtime_error {
  NumericError(const std::string& what, std::size_t node)
      : std::runtime_error(what), node(node) {}
  std::size_t node;
};

namespace ad {

enum class Op : std::uint8_t {
  constant,
  parameter,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  matmul,
  affine,
  relu,
  step,
  tanh,
  square,
  sum,
  mean,
  row_sum,
  row_norm,
  broadcast_rows,
  slice_cols,
  concat_cols,
  concat_rows,
  clamp,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
};

/// Append-only reverse-mode tape.
///
/// Nodes are evaluated eagerly when appended. `forward()` replays every node
/// in insertion order, re-reading parameter values, so the same graph can be
/// re-evaluated after parameters change. Reductions sum sequentially over the
/// flattened index, which keeps results bit-reproducible.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  /// Differentiable view of a parameter; backward accumulates into p.grad.
  Var parameter(Parameter& p);
  /// Non-differentiable snapshot of a parameter's current value.
  Var frozen(const Parameter& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  /// a (n x k) times b (k x m), or b^T when `transpose_b` (b is m x k).
  Var matmul(Var a, Var b, bool transpose_b = false);
  /// x W^T + b for x (n x in) or a vector of length in; W is (out x in).
  Var affine(Var x, Var w, Var b);
  Var relu(Var a);
  /// Heaviside step (1 where a > 0). Carries no gradient.
  Var step(Var a);
  Var tanh(Var a);
  Var square(Var a);
  Var sum(Var a);
  Var mean(Var a);
  /// Per-row sum, (n x k) -> (n x 1).
  Var row_sum(Var a);
  /// Per-row Euclidean norm, (n x k) -> (n x 1). Gradient at 0 is 0.
  Var row_norm(Var a);
  /// Repeats a single row n times.
  Var broadcast_rows(Var a, std::size_t n);
  /// Columns [begin, end) of a matrix.
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  /// Coordinatewise clamp into [lo_c, hi_c]; gradient passes only inside.
  Var clamp(Var a, std::vector<double> lo, std::vector<double> hi);

  void forward();
  /// Reverse pass from a scalar node. Zeroes, then fills, the accumulator of
  /// every parameter bound on this tape.
  void backward(Var loss);

  const Array& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward loss with respect to node v.
  const Array& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::constant;
    std::vector<std::size_t> inputs;
    Array value;
    Parameter* param = nullptr;
    bool requires_grad = false;
    double s = 0.0;
    std::size_t a = 0, b = 0;
    std::vector<double> lo, hi;
  };

  static Node make_node(Op op, std::initializer_list<std::size_t> in);
  Var push(Node node);
  void evaluate(std::size_t id);
  void propagate(std::size_t id, const Array& g);
  [[noreturn]] void fail(std::size_t id, const std::string& what) const;
  const Array& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }

  std::vector<Node> nodes_;
  std::vector<std::optional<Array>> grads_;
};

inline const Array& Var::value() const { return tape->value(*this); }

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator*(Var a, double s) { return a.tape->scale(a, s); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }
inline Var operator-(Var a) { return a.tape->scale(a, -1.0); }
inline Var operator+(Var a, double s) { return a.tape->add_scalar(a, s); }
inline Var operator-(Var a, double s) { return a.tape->add_scalar(a, -s); }

inline Var relu(Var a) { return a.tape->relu(a); }
inline Var positive_part(Var a) { return a.tape->relu(a); }
inline Var step(Var a) { return a.tape->step(a); }
inline Var tanh(Var a) { return a.tape->tanh(a); }
inline Var square(Var a) { return a.tape->square(a); }
inline Var sum(Var a) { return a.tape->sum(a); }
inline Var mean(Var a) { return a.tape->mean(a); }
inline Var row_norm(Var a) { return a.tape->row_norm(a); }
inline Var row_sum(Var a) { return a.tape->row_sum(a); }
inline Var matmul(Var a, Var b, bool transpose_b = false) {
  return a.tape->matmul(a, b, transpose_b);
}
inline Var affine(Var x, Var w, Var b) { return x.tape->affine(x, w, b); }
inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  return a.tape->slice_cols(a, begin, end);
}

}  // namespace ad

/// Adam hyperparameters. Defaults are the values used for every experiment.
struct AdamHyper {
  double learning_rate = 1e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-9;
};

/// First and second moment estimates for a list of parameters.
struct AdamState {
  std::vector<Array> m;
  std::vector<Array> v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One Adam descent step on `params` using their accumulated gradients.
///
/// Uses the bias correction folded into the step size,
/// lr_t = lr * sqrt(1 - b2^t) / (1 - b1^t), with epsilon added to sqrt(v).
void adam_step(std::span<Parameter* const> params, AdamState& state,
               const AdamHyper& hyper);

}  // namespace minmax
