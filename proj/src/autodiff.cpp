#include "minmax/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace minmax {

Parameter::Parameter(std::string name, Array value)
    : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

namespace ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Array& a) {
  return ConstMap(a.storage().data(), static_cast<Eigen::Index>(a.rows()),
                  static_cast<Eigen::Index>(a.cols()));
}

MutMap as_matrix(Array& a) {
  return MutMap(a.storage().data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}

template <class F>
void unary(const Array& x, Array& out, F f) {
  if (!out.same_shape(x)) out = Array(x.shape());
  const double* src = x.storage().data();
  double* dst = out.storage().data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
}

template <class F>
void binary(const Array& x, const Array& y, Array& out, F f) {
  if (!out.same_shape(x)) out = Array(x.shape());
  const double* a = x.storage().data();
  const double* b = y.storage().data();
  double* dst = out.storage().data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(a[i], b[i]);
}

void accumulate(Array& into, const Array& g, double factor = 1.0) {
  double* dst = into.storage().data();
  const double* src = g.storage().data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::matmul: return "matmul";
    case Op::affine: return "affine";
    case Op::relu: return "relu";
    case Op::step: return "step";
    case Op::tanh: return "tanh";
    case Op::square: return "square";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::row_sum: return "row_sum";
    case Op::row_norm: return "row_norm";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::concat_cols: return "concat_cols";
    case Op::concat_rows: return "concat_rows";
    case Op::clamp: return "clamp";
  }
  return "unknown";
}

void Tape::fail(std::size_t id, const std::string& what) const {
  throw ShapeError("node #" + std::to_string(id) + " (" + op_name(nodes_[id].op) +
                   "): " + what);
}

Var Tape::push(Node node) {
  for (std::size_t i : node.inputs) {
    if (i >= nodes_.size()) throw std::invalid_argument("input refers to a later node");
    node.requires_grad = node.requires_grad || nodes_[i].requires_grad;
  }
  if (node.op == Op::step) node.requires_grad = false;
  nodes_.push_back(std::move(node));
  const std::size_t id = nodes_.size() - 1;
  try {
    evaluate(id);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return Var{this, id};
}

Var Tape::constant(Array value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.op = Op::parameter;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::frozen(const Parameter& p) { return constant(p.value); }

Tape::Node Tape::make_node(Op op, std::initializer_list<std::size_t> in) {
  Node n;
  n.op = op;
  n.inputs.assign(in.begin(), in.end());
  return n;
}

Var Tape::add(Var a, Var b) { return push(make_node(Op::add, {a.id, b.id})); }
Var Tape::sub(Var a, Var b) { return push(make_node(Op::sub, {a.id, b.id})); }
Var Tape::mul(Var a, Var b) { return push(make_node(Op::mul, {a.id, b.id})); }

Var Tape::scale(Var a, double s) {
  auto n = make_node(Op::scale, {a.id});
  n.s = s;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  auto n = make_node(Op::add_scalar, {a.id});
  n.s = s;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  auto n = make_node(Op::matmul, {a.id, b.id});
  n.a = transpose_b ? 1 : 0;
  return push(std::move(n));
}

Var Tape::affine(Var x, Var w, Var b) { return push(make_node(Op::affine, {x.id, w.id, b.id})); }
Var Tape::relu(Var a) { return push(make_node(Op::relu, {a.id})); }
Var Tape::step(Var a) { return push(make_node(Op::step, {a.id})); }
Var Tape::tanh(Var a) { return push(make_node(Op::tanh, {a.id})); }
Var Tape::square(Var a) { return push(make_node(Op::square, {a.id})); }
Var Tape::sum(Var a) { return push(make_node(Op::sum, {a.id})); }
Var Tape::mean(Var a) { return push(make_node(Op::mean, {a.id})); }
Var Tape::row_sum(Var a) { return push(make_node(Op::row_sum, {a.id})); }
Var Tape::row_norm(Var a) { return push(make_node(Op::row_norm, {a.id})); }

Var Tape::broadcast_rows(Var a, std::size_t n) {
  auto node = make_node(Op::broadcast_rows, {a.id});
  node.a = n;
  return push(std::move(node));
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  auto n = make_node(Op::slice_cols, {a.id});
  n.a = begin;
  n.b = end;
  return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  Node n;
  n.op = Op::concat_cols;
  for (const Var& v : parts) n.inputs.push_back(v.id);
  return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  Node n;
  n.op = Op::concat_rows;
  for (const Var& v : parts) n.inputs.push_back(v.id);
  return push(std::move(n));
}

Var Tape::clamp(Var a, std::vector<double> lo, std::vector<double> hi) {
  auto n = make_node(Op::clamp, {a.id});
  n.lo = std::move(lo);
  n.hi = std::move(hi);
  return push(std::move(n));
}

void Tape::evaluate(std::size_t id) {
  Node& n = nodes_[id];
  switch (n.op) {
    case Op::constant:
      return;
    case Op::parameter:
      n.value = n.param->value;
      return;
    case Op::add:
    case Op::sub:
    case Op::mul: {
      const Array& x = in(n, 0);
      const Array& y = in(n, 1);
      if (!x.same_shape(y)) {
        fail(id, "operand shapes " + shape_string(x.shape()) + " and " +
                     shape_string(y.shape()) + " differ");
      }
      if (n.op == Op::add) binary(x, y, n.value, [](double p, double q) { return p + q; });
      if (n.op == Op::sub) binary(x, y, n.value, [](double p, double q) { return p - q; });
      if (n.op == Op::mul) binary(x, y, n.value, [](double p, double q) { return p * q; });
      return;
    }
    case Op::scale: {
      const double s = n.s;
      unary(in(n, 0), n.value, [s](double v) { return s * v; });
      return;
    }
    case Op::add_scalar: {
      const double s = n.s;
      unary(in(n, 0), n.value, [s](double v) { return v + s; });
      return;
    }
    case Op::matmul: {
      const Array& x = in(n, 0);
      const Array& y = in(n, 1);
      const bool t = n.a == 1;
      if (x.rank() != 2 || y.rank() != 2) fail(id, "matmul needs matrices");
      const std::size_t inner = t ? y.cols() : y.rows();
      const std::size_t out_cols = t ? y.rows() : y.cols();
      if (x.cols() != inner) {
        fail(id, "cannot multiply " + shape_string(x.shape()) + " by " +
                     shape_string(y.shape()) + (t ? "^T" : ""));
      }
      if (n.value.rows() != x.rows() || n.value.cols() != out_cols || n.value.rank() != 2) {
        n.value = Array(Shape{x.rows(), out_cols});
      }
      if (t) {
        as_matrix(n.value).noalias() = as_matrix(x) * as_matrix(y).transpose();
      } else {
        as_matrix(n.value).noalias() = as_matrix(x) * as_matrix(y);
      }
      return;
    }
    case Op::affine: {
      const Array& x = in(n, 0);
      const Array& w = in(n, 1);
      const Array& b = in(n, 2);
      if (w.rank() != 2 || x.cols() != w.cols() || b.size() != w.rows()) {
        fail(id, "affine with x " + shape_string(x.shape()) + ", W " +
                     shape_string(w.shape()) + ", b " + shape_string(b.shape()));
      }
      Shape out_shape = x.rank() == 2 ? Shape{x.rows(), w.rows()} : Shape{w.rows()};
      if (n.value.shape() != out_shape) n.value = Array(out_shape);
      auto y = as_matrix(n.value);
      y.noalias() = as_matrix(x) * as_matrix(w).transpose();
      const Eigen::Map<const Eigen::RowVectorXd> bias(b.storage().data(),
                                                      static_cast<Eigen::Index>(b.size()));
      y.rowwise() += bias;
      return;
    }
    case Op::relu:
      unary(in(n, 0), n.value, [](double v) { return v > 0.0 ? v : 0.0; });
      return;
    case Op::step:
      unary(in(n, 0), n.value, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
      return;
    case Op::tanh:
      unary(in(n, 0), n.value, [](double v) { return std::tanh(v); });
      return;
    case Op::square:
      unary(in(n, 0), n.value, [](double v) { return v * v; });
      return;
    case Op::sum:
    case Op::mean: {
      const Array& x = in(n, 0);
      double acc = 0.0;
      for (double v : x.storage()) acc += v;
      if (n.op == Op::mean) {
        if (x.size() == 0) fail(id, "mean of an empty array");
        acc /= static_cast<double>(x.size());
      }
      n.value = Array::scalar(acc);
      return;
    }
    case Op::row_sum:
    case Op::row_norm: {
      const Array& x = in(n, 0);
      const std::size_t r = x.rows(), c = x.cols();
      if (n.value.shape() != Shape{r, 1}) n.value = Array(Shape{r, 1});
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double v = x[i * c + j];
          acc += n.op == Op::row_norm ? v * v : v;
        }
        n.value[i] = n.op == Op::row_norm ? std::sqrt(acc) : acc;
      }
      return;
    }
    case Op::broadcast_rows: {
      const Array& x = in(n, 0);
      if (x.rows() != 1) fail(id, "broadcast_rows needs a single row");
      const std::size_t c = x.cols();
      if (n.value.shape() != Shape{n.a, c}) n.value = Array(Shape{n.a, c});
      for (std::size_t i = 0; i < n.a; ++i) {
        std::copy_n(x.storage().data(), c, n.value.storage().data() + i * c);
      }
      return;
    }
    case Op::slice_cols: {
      const Array& x = in(n, 0);
      if (n.a >= n.b || n.b > x.cols()) fail(id, "column slice out of range");
      const std::size_t r = x.rows(), c = x.cols(), w = n.b - n.a;
      if (n.value.shape() != Shape{r, w}) n.value = Array(Shape{r, w});
      for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(x.storage().data() + i * c + n.a, w, n.value.storage().data() + i * w);
      }
      return;
    }
    case Op::concat_cols: {
      if (n.inputs.empty()) fail(id, "concat of nothing");
      const std::size_t r = in(n, 0).rows();
      std::size_t total = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(n, k).rows() != r) fail(id, "row counts differ");
        total += in(n, k).cols();
      }
      if (n.value.shape() != Shape{r, total}) n.value = Array(Shape{r, total});
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Array& x = in(n, k);
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < r; ++i) {
          std::copy_n(x.storage().data() + i * c, c,
                      n.value.storage().data() + i * total + offset);
        }
        offset += c;
      }
      return;
    }
    case Op::concat_rows: {
      if (n.inputs.empty()) fail(id, "concat of nothing");
      const std::size_t c = in(n, 0).cols();
      std::size_t total = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(n, k).cols() != c) fail(id, "column counts differ");
        total += in(n, k).rows();
      }
      if (n.value.shape() != Shape{total, c}) n.value = Array(Shape{total, c});
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Array& x = in(n, k);
        std::copy(x.storage().begin(), x.storage().end(),
                  n.value.storage().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += x.size();
      }
      return;
    }
    case Op::clamp: {
      const Array& x = in(n, 0);
      const std::size_t c = x.cols();
      if (n.lo.size() != c || n.hi.size() != c) fail(id, "clamp bounds do not match columns");
      if (!n.value.same_shape(x)) n.value = Array(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t j = i % c;
        n.value[i] = std::clamp(x[i], n.lo[j], n.hi[j]);
      }
      return;
    }
  }
}

void Tape::forward() {
  for (std::size_t id = 0; id < nodes_.size(); ++id) evaluate(id);
}

const Array& Tape::grad(Var v) const {
  if (v.id >= grads_.size() || !grads_[v.id]) {
    throw std::logic_error("no gradient recorded for node #" + std::to_string(v.id));
  }
  return *grads_[v.id];
}

void Tape::backward(Var loss) {
  const Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    fail(loss.id, "backward needs a scalar loss, got shape " +
                      shape_string(root.value.shape()));
  }
  for (Node& n : nodes_) {
    if (n.op == Op::parameter) n.param->grad = Array(n.param->value.shape());
  }
  // Nodes the loss does not reach keep an empty slot and are skipped.
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss.id] = Array(root.value.shape(), 1.0);
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    if (!grads_[k] || !nodes_[k].requires_grad) continue;
    if (!grads_[k]->all_finite()) {
      throw NumericError("non-finite gradient at node #" + std::to_string(k) + " (" +
                             op_name(nodes_[k].op) + ")",
                         k);
    }
    propagate(k, *grads_[k]);
  }
}

void Tape::propagate(std::size_t id, const Array& g) {
  const Node& n = nodes_[id];
  auto slot = [&](std::size_t k) -> Array* {
    const std::size_t src = n.inputs[k];
    if (!nodes_[src].requires_grad) return nullptr;
    std::optional<Array>& s = grads_[src];
    if (!s) s = Array(nodes_[src].value.shape());
    return &*s;
  };
  switch (n.op) {
    case Op::constant:
      return;
    case Op::parameter:
      accumulate(n.param->grad, g);
      return;
    case Op::add:
      if (Array* a = slot(0)) accumulate(*a, g);
      if (Array* b = slot(1)) accumulate(*b, g);
      return;
    case Op::sub:
      if (Array* a = slot(0)) accumulate(*a, g);
      if (Array* b = slot(1)) accumulate(*b, g, -1.0);
      return;
    case Op::mul: {
      const Array& x = in(n, 0);
      const Array& y = in(n, 1);
      if (Array* a = slot(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*a)[i] += g[i] * y[i];
      }
      if (Array* b = slot(1)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*b)[i] += g[i] * x[i];
      }
      return;
    }
    case Op::scale:
      if (Array* a = slot(0)) accumulate(*a, g, n.s);
      return;
    case Op::add_scalar:
      if (Array* a = slot(0)) accumulate(*a, g);
      return;
    case Op::matmul: {
      const bool t = n.a == 1;
      const auto x = as_matrix(in(n, 0));
      const auto y = as_matrix(in(n, 1));
      const auto gm = as_matrix(g);
      if (Array* a = slot(0)) {
        if (t) {
          as_matrix(*a).noalias() += gm * y;
        } else {
          as_matrix(*a).noalias() += gm * y.transpose();
        }
      }
      if (Array* b = slot(1)) {
        if (t) {
          as_matrix(*b).noalias() += gm.transpose() * x;
        } else {
          as_matrix(*b).noalias() += x.transpose() * gm;
        }
      }
      return;
    }
    case Op::affine: {
      const auto x = as_matrix(in(n, 0));
      const auto w = as_matrix(in(n, 1));
      const auto gm = as_matrix(g);
      if (Array* a = slot(0)) as_matrix(*a).noalias() += gm * w;
      if (Array* b = slot(1)) as_matrix(*b).noalias() += gm.transpose() * x;
      if (Array* c = slot(2)) {
        const std::size_t rows = g.rows(), cols = g.cols();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) (*c)[j] += g[i * cols + j];
        }
      }
      return;
    }
    case Op::relu:
      if (Array* a = slot(0)) {
        const Array& x = in(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > 0.0) (*a)[i] += g[i];
        }
      }
      return;
    case Op::step:
      return;
    case Op::tanh:
      if (Array* a = slot(0)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          (*a)[i] += g[i] * (1.0 - y * y);
        }
      }
      return;
    case Op::square:
      if (Array* a = slot(0)) {
        const Array& x = in(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) (*a)[i] += 2.0 * x[i] * g[i];
      }
      return;
    case Op::sum:
    case Op::mean:
      if (Array* a = slot(0)) {
        double v = g[0];
        if (n.op == Op::mean) v /= static_cast<double>(a->size());
        for (double& e : a->storage()) e += v;
      }
      return;
    case Op::row_sum:
    case Op::row_norm:
      if (Array* a = slot(0)) {
        const Array& x = in(n, 0);
        const std::size_t r = x.rows(), c = x.cols();
        for (std::size_t i = 0; i < r; ++i) {
          const double norm = n.value[i];
          for (std::size_t j = 0; j < c; ++j) {
            if (n.op == Op::row_sum) {
              (*a)[i * c + j] += g[i];
            } else if (norm > 0.0) {
              (*a)[i * c + j] += g[i] * x[i * c + j] / norm;
            }
          }
        }
      }
      return;
    case Op::broadcast_rows:
      if (Array* a = slot(0)) {
        const std::size_t c = a->size();
        for (std::size_t i = 0; i < n.a; ++i) {
          for (std::size_t j = 0; j < c; ++j) (*a)[j] += g[i * c + j];
        }
      }
      return;
    case Op::slice_cols:
      if (Array* a = slot(0)) {
        const std::size_t r = g.rows(), w = n.b - n.a, c = a->cols();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < w; ++j) (*a)[i * c + n.a + j] += g[i * w + j];
        }
      }
      return;
    case Op::concat_cols: {
      const std::size_t r = g.rows(), total = g.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t c = in(n, k).cols();
        if (Array* a = slot(k)) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) (*a)[i * c + j] += g[i * total + offset + j];
          }
        }
        offset += c;
      }
      return;
    }
    case Op::concat_rows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t len = in(n, k).size();
        if (Array* a = slot(k)) {
          for (std::size_t i = 0; i < len; ++i) (*a)[i] += g[offset + i];
        }
        offset += len;
      }
      return;
    }
    case Op::clamp:
      if (Array* a = slot(0)) {
        const Array& x = in(n, 0);
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t j = i % c;
          if (x[i] >= n.lo[j] && x[i] <= n.hi[j]) (*a)[i] += g[i];
        }
      }
      return;
  }
}

}  // namespace ad

void adam_step(std::span<Parameter* const> params, AdamState& state,
               const AdamHyper& hyper) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("Adam state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double lr_t = hyper.learning_rate * std::sqrt(1.0 - std::pow(hyper.beta2, t)) /
                      (1.0 - std::pow(hyper.beta1, t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Array& m = state.m[k];
    Array& v = state.v[k];
    if (!p.grad.same_shape(p.value) || !m.same_shape(p.value)) {
      throw ShapeError("Adam: parameter '" + p.name + "' has shape " +
                       shape_string(p.value.shape()) + " but gradient/state " +
                       shape_string(p.grad.shape()) + "/" + shape_string(m.shape()));
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      p.value[i] -= lr_t * m[i] / (std::sqrt(v[i]) + hyper.epsilon);
    }
  }
}

}  // namespace minmax
