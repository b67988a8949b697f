// SPDX-License-Identifier: Apache-2.0
#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Graph records nodes in creation order, which is a topological order.
// backward() accumulates adjoints numerically; grad_wrt_input() instead
// appends the derivative computation to the same graph as ordinary nodes,
// so a later backward() differentiates through it (one nested level).

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deepjoint/error.hpp"
#include "deepjoint/tensor.hpp"

namespace deepjoint::ad {

enum class Op : std::uint8_t {
  leaf,
  matmul,
  add,
  sub,
  mul,
  neg,
  scale,
  add_scalar,
  exp,
  log,
  square,
  sigmoid,
  tanh,
  softplus,
  relu,
  clamp,
  softmax,
  sum,
  sum_rows,
  sum_cols,
  mean,
  concat,
  slice,
  broadcast,
  transpose,
  gather_rows,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::neg: return "neg";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::square: return "square";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::softplus: return "softplus";
    case Op::relu: return "relu";
    case Op::clamp: return "clamp";
    case Op::softmax: return "softmax";
    case Op::sum: return "sum";
    case Op::sum_rows: return "sum_rows";
    case Op::sum_cols: return "sum_cols";
    case Op::mean: return "mean";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::broadcast: return "broadcast";
    case Op::transpose: return "transpose";
    case Op::gather_rows: return "gather_rows";
  }
  return "?";
}

struct Parameter {
  std::string id;
  Tensor value;
  bool requires_grad = true;
};

using Gradients = std::map<std::string, Tensor>;

// Numerically stable scalar helpers shared with reference evaluators.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int index) : graph_(g), index_(index) {}

  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] int index() const noexcept { return index_; }
  [[nodiscard]] bool valid() const noexcept { return graph_ != nullptr; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  int index_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves ------------------------------------------------------------------

  /// Leaf that never receives gradients (data, masks, targets).
  Var constant(Tensor t) { return push(Op::leaf, {}, std::move(t), false); }

  /// Leaf that receives an adjoint; usable as the input of grad_wrt_input.
  Var variable(Tensor t) { return push(Op::leaf, {}, std::move(t), true); }

  /// Leaf bound to a parameter. One node per parameter per graph.
  Var parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(Op::leaf, {}, p.value, p.requires_grad);
    nodes_[v.index()].param = &p;
    param_nodes_.emplace(&p, v.index());
    return v;
  }

  // Operations --------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.cols() != y.rows()) shape_error("matmul", x, y);
    return push(Op::matmul, {a.index(), b.index()}, deepjoint::matmul(x, y));
  }

  Var add(Var a, Var b) { return binary(Op::add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::mul, a, b); }

  Var neg(Var a) { return scale(a, -1.0); }
  Var scale(Var a, double c) {
    Tensor out = a.value();
    for (auto& v : out.data()) v *= c;
    auto r = push(c == -1.0 ? Op::neg : Op::scale, {a.index()}, std::move(out));
    nodes_[r.index()].a = c;
    return r;
  }
  Var add_scalar(Var a, double c) {
    Tensor out = a.value();
    for (auto& v : out.data()) v += c;
    auto r = push(Op::add_scalar, {a.index()}, std::move(out));
    nodes_[r.index()].a = c;
    return r;
  }

  Var exp(Var a) {
    Tensor out = a.value();
    for (auto& v : out.data()) {
      if (std::isnan(v)) continue;  // NaN propagates; the trainer reports it with context
      v = std::exp(v);
      if (std::isinf(v)) throw DomainError("exp: overflow on input outside [-708, 709]");
    }
    return push(Op::exp, {a.index()}, std::move(out));
  }
  Var log(Var a) {
    Tensor out = a.value();
    for (auto& v : out.data()) {
      if (std::isnan(v)) continue;
      if (!(v > 0.0)) {
        throw DomainError("log: non-positive argument " + std::to_string(v) +
                          " (clamp probabilities before taking logs)");
      }
      v = std::log(v);
    }
    return push(Op::log, {a.index()}, std::move(out));
  }
  Var square(Var a) { return unary(Op::square, a, [](double x) { return x * x; }); }
  Var sigmoid(Var a) { return unary(Op::sigmoid, a, [](double x) { return ad::sigmoid(x); }); }
  Var tanh(Var a) { return unary(Op::tanh, a, [](double x) { return std::tanh(x); }); }
  Var softplus(Var a) { return unary(Op::softplus, a, [](double x) { return ad::softplus(x); }); }
  Var relu(Var a) { return unary(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }

  Var clamp(Var a, double lo, double hi) {
    if (!(lo <= hi)) throw ContractError("clamp: lower bound above upper bound");
    Tensor out = a.value();
    for (auto& v : out.data()) v = std::min(std::max(v, lo), hi);
    auto r = push(Op::clamp, {a.index()}, std::move(out));
    nodes_[r.index()].a = lo;
    nodes_[r.index()].b = hi;
    return r;
  }

  /// Row-wise softmax.
  Var softmax(Var a) {
    Tensor out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double m = out(r, 0);
      for (std::size_t c = 1; c < out.cols(); ++c) m = std::max(m, out(r, c));
      double s = 0.0;
      for (std::size_t c = 0; c < out.cols(); ++c) s += (out(r, c) = std::exp(out(r, c) - m));
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= s;
    }
    return push(Op::softmax, {a.index()}, std::move(out));
  }

  Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return push(Op::sum, {a.index()}, Tensor::scalar(s));
  }
  Var mean(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return push(Op::mean, {a.index()}, Tensor::scalar(s / static_cast<double>(a.value().size())));
  }
  /// Reduces over rows: [r, c] -> [1, c].
  Var sum_rows(Var a) {
    const Tensor& x = a.value();
    Tensor out(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
    return push(Op::sum_rows, {a.index()}, std::move(out));
  }
  /// Reduces over columns: [r, c] -> [r, 1].
  Var sum_cols(Var a) {
    const Tensor& x = a.value();
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c);
      out(r, 0) = s;
    }
    return push(Op::sum_cols, {a.index()}, std::move(out));
  }

  /// Concatenates along rows (axis 0) or columns (axis 1).
  Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
    std::size_t rows = 0, cols = 0;
    std::vector<int> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
      const Tensor& t = p.value();
      if (axis == 1) {
        if (rows == 0) rows = t.rows();
        if (t.rows() != rows) shape_error("concat", parts.front().value(), t);
        cols += t.cols();
      } else {
        if (cols == 0) cols = t.cols();
        if (t.cols() != cols) shape_error("concat", parts.front().value(), t);
        rows += t.rows();
      }
      parents.push_back(p.index());
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const Tensor& t = p.value();
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) {
          if (axis == 1) out(r, offset + c) = t(r, c);
          else out(offset + r, c) = t(r, c);
        }
      offset += axis == 1 ? t.cols() : t.rows();
    }
    auto v = push(Op::concat, std::move(parents), std::move(out));
    nodes_[v.index()].i0 = static_cast<std::size_t>(axis);
    return v;
  }

  /// Half-open range [begin, end) along rows (axis 0) or columns (axis 1).
  Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    const std::size_t extent = axis == 1 ? x.cols() : x.rows();
    if ((axis != 0 && axis != 1) || begin >= end || end > extent) {
      throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") on axis " + std::to_string(axis) + " of " + x.shape_string());
    }
    Tensor out = axis == 1 ? Tensor(x.rows(), end - begin) : Tensor(end - begin, x.cols());
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c)
        out(r, c) = axis == 1 ? x(r, begin + c) : x(begin + r, c);
    auto v = push(Op::slice, {a.index()}, std::move(out));
    nodes_[v.index()].i0 = static_cast<std::size_t>(axis);
    nodes_[v.index()].i1 = begin;
    return v;
  }

  /// Expands a [1,1], [1,c] or [r,1] tensor to [rows, cols].
  Var broadcast(Var a, std::size_t rows, std::size_t cols) {
    const Tensor& x = a.value();
    const bool ok = (x.rows() == rows || x.rows() == 1) && (x.cols() == cols || x.cols() == 1);
    if (!ok) {
      throw ShapeError("broadcast: " + x.shape_string() + " to " + Tensor::shape_string(rows, cols));
    }
    if (x.rows() == rows && x.cols() == cols) return a;
    Tensor out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        out(r, c) = x(x.rows() == 1 ? 0 : r, x.cols() == 1 ? 0 : c);
    return push(Op::broadcast, {a.index()}, std::move(out));
  }

  Var transpose(Var a) { return push(Op::transpose, {a.index()}, deepjoint::transpose(a.value())); }

  /// Rows of a picked by index, in the given order.
  Var gather_rows(Var a, std::vector<std::size_t> index) {
    const Tensor& x = a.value();
    Tensor out(index.size(), x.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (index[r] >= x.rows())
        throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " out of " + x.shape_string());
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(index[r], c);
    }
    auto v = push(Op::gather_rows, {a.index()}, std::move(out));
    gathers_[v.index()] = std::move(index);
    return v;
  }

  // Differentiation ---------------------------------------------------------

  /// Reverse sweep from a scalar root. Returns the gradient of every
  /// parameter leaf in the graph (zeros when unreachable from root).
  Gradients backward(Var root) {
    const Tensor& rv = root.value();
    if (rv.size() != 1) {
      throw ContractError("backward: root must be scalar, got " + rv.shape_string());
    }
    adjoints_.assign(nodes_.size(), Tensor{});
    adjoints_[root.index()] = Tensor::scalar(1.0);
    for (int i = root.index(); i >= 0; --i) {
      if (adjoints_[i].empty() || !nodes_[i].requires_grad) continue;
      propagate(i);
    }
    Gradients grads;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.param == nullptr) continue;
      Tensor g = adjoints_[i].empty() || static_cast<int>(i) > root.index()
                     ? Tensor(n.value.rows(), n.value.cols())
                     : adjoints_[i];
      if (auto it = grads.find(n.param->id); it != grads.end()) it->second += g;
      else grads.emplace(n.param->id, std::move(g));
    }
    return grads;
  }

  /// Adjoint of a node after the last backward(); zeros if it received none.
  [[nodiscard]] Tensor adjoint(Var v) const {
    const auto i = static_cast<std::size_t>(v.index());
    if (i < adjoints_.size() && !adjoints_[i].empty()) return adjoints_[i];
    return Tensor(v.rows(), v.cols());
  }

  /// d root / d input as a new node built from primitive operations.
  Var grad_wrt_input(Var root, Var input) {
    if (root.value().size() != 1) {
      throw ContractError("grad_wrt_input: root must be scalar, got " + root.value().shape_string());
    }
    const int in = input.index();
    const int rt = root.index();
    if (in < 0 || in > rt || nodes_[in].op != Op::leaf) {
      throw ContractError("grad_wrt_input: input is not a leaf of the root's graph");
    }
    std::vector<char> depends(static_cast<std::size_t>(rt) + 1, 0);
    depends[in] = 1;
    for (int i = in + 1; i <= rt; ++i)
      for (int p : nodes_[i].parents)
        if (p <= rt && depends[p]) {
          depends[i] = 1;
          break;
        }
    if (!depends[rt]) throw ContractError("grad_wrt_input: root does not depend on input");

    std::vector<Var> adj(static_cast<std::size_t>(rt) + 1);
    adj[rt] = constant(Tensor::scalar(1.0));
    for (int i = rt; i > in; --i) {
      if (!depends[i] || !adj[i].valid()) continue;
      symbolic_vjp(i, adj[i], depends, adj);
    }
    if (!adj[in].valid()) return constant(Tensor(input.rows(), input.cols()));
    return adj[in];
  }

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] Op op(Var v) const { return nodes_[v.index()].op; }
  [[nodiscard]] const Tensor& value(int i) const { return nodes_[i].value; }

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<int> parents;
    Tensor value;
    bool requires_grad = false;
    double a = 0.0;
    double b = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    Parameter* param = nullptr;
  };

  Var push(Op op, std::vector<int> parents, Tensor value, bool requires_grad) {
    Node n;
    n.op = op;
    n.parents = std::move(parents);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }
  Var push(Op op, std::vector<int> parents, Tensor value) {
    bool rg = false;
    for (int p : parents) rg = rg || nodes_[p].requires_grad;
    return push(op, std::move(parents), std::move(value), rg);
  }

  [[noreturn]] static void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                     b.shape_string());
  }

  Var binary(Op op, Var a, Var b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (!x.same_shape(y)) shape_error(op_name(op), x, y);
    Tensor out = x;
    auto o = out.data();
    auto yd = y.data();
    switch (op) {
      case Op::add: for (std::size_t i = 0; i < o.size(); ++i) o[i] += yd[i]; break;
      case Op::sub: for (std::size_t i = 0; i < o.size(); ++i) o[i] -= yd[i]; break;
      case Op::mul: for (std::size_t i = 0; i < o.size(); ++i) o[i] *= yd[i]; break;
      default: throw ContractError("binary: unsupported op");
    }
    return push(op, {a.index(), b.index()}, std::move(out));
  }

  template <class F>
  Var unary(Op op, Var a, F f) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = f(v);
    return push(op, {a.index()}, std::move(out));
  }

  Tensor& acc(int p) {
    Tensor& t = adjoints_[p];
    if (t.empty()) t = Tensor(nodes_[p].value.rows(), nodes_[p].value.cols());
    return t;
  }
  bool wants(int p) const { return nodes_[p].requires_grad; }

  void propagate(int i) {
    const Node& n = nodes_[i];
    const Tensor& g = adjoints_[i];
    const Tensor& y = n.value;
    auto each = [&](int p, auto f) {
      if (!wants(p)) return;
      Tensor& d = acc(p);
      const Tensor& x = nodes_[p].value;
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += f(g[k], x[k], y[k]);
    };
    switch (n.op) {
      case Op::leaf: break;
      case Op::matmul: {
        const int a = n.parents[0], b = n.parents[1];
        if (wants(a)) matmul_nt_accumulate(g, nodes_[b].value, acc(a));
        if (wants(b)) matmul_tn_accumulate(nodes_[a].value, g, acc(b));
        break;
      }
      case Op::add:
        each(n.parents[0], [](double gk, double, double) { return gk; });
        each(n.parents[1], [](double gk, double, double) { return gk; });
        break;
      case Op::sub:
        each(n.parents[0], [](double gk, double, double) { return gk; });
        each(n.parents[1], [](double gk, double, double) { return -gk; });
        break;
      case Op::mul: {
        const int a = n.parents[0], b = n.parents[1];
        const Tensor& xa = nodes_[a].value;
        const Tensor& xb = nodes_[b].value;
        if (wants(a)) {
          Tensor& d = acc(a);
          for (std::size_t k = 0; k < d.size(); ++k) d[k] += g[k] * xb[k];
        }
        if (wants(b)) {
          Tensor& d = acc(b);
          for (std::size_t k = 0; k < d.size(); ++k) d[k] += g[k] * xa[k];
        }
        break;
      }
      case Op::neg:
      case Op::scale: {
        const double c = n.a;
        each(n.parents[0], [c](double gk, double, double) { return c * gk; });
        break;
      }
      case Op::add_scalar:
        each(n.parents[0], [](double gk, double, double) { return gk; });
        break;
      case Op::exp: each(n.parents[0], [](double gk, double, double yk) { return gk * yk; }); break;
      case Op::log: each(n.parents[0], [](double gk, double xk, double) { return gk / xk; }); break;
      case Op::square:
        each(n.parents[0], [](double gk, double xk, double) { return 2.0 * xk * gk; });
        break;
      case Op::sigmoid:
        each(n.parents[0], [](double gk, double, double yk) { return gk * yk * (1.0 - yk); });
        break;
      case Op::tanh:
        each(n.parents[0], [](double gk, double, double yk) { return gk * (1.0 - yk * yk); });
        break;
      case Op::softplus:
        each(n.parents[0], [](double gk, double xk, double) { return gk * ad::sigmoid(xk); });
        break;
      case Op::relu:
        each(n.parents[0], [](double gk, double xk, double) { return xk > 0.0 ? gk : 0.0; });
        break;
      case Op::clamp: {
        const double lo = n.a, hi = n.b;
        each(n.parents[0], [lo, hi](double gk, double xk, double) {
          return (xk >= lo && xk <= hi) ? gk : 0.0;
        });
        break;
      }
      case Op::softmax: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c) d(r, c) += y(r, c) * (g(r, c) - dot);
        }
        break;
      }
      case Op::sum: {
        const double gk = g[0];
        each(n.parents[0], [gk](double, double, double) { return gk; });
        break;
      }
      case Op::mean: {
        const double gk = g[0] / static_cast<double>(nodes_[n.parents[0]].value.size());
        each(n.parents[0], [gk](double, double, double) { return gk; });
        break;
      }
      case Op::sum_rows: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        for (std::size_t r = 0; r < d.rows(); ++r)
          for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += g(0, c);
        break;
      }
      case Op::sum_cols: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        for (std::size_t r = 0; r < d.rows(); ++r)
          for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += g(r, 0);
        break;
      }
      case Op::concat: {
        const bool cols = n.i0 == 1;
        std::size_t offset = 0;
        for (int p : n.parents) {
          const Tensor& x = nodes_[p].value;
          if (wants(p)) {
            Tensor& d = acc(p);
            for (std::size_t r = 0; r < x.rows(); ++r)
              for (std::size_t c = 0; c < x.cols(); ++c)
                d(r, c) += cols ? g(r, offset + c) : g(offset + r, c);
          }
          offset += cols ? x.cols() : x.rows();
        }
        break;
      }
      case Op::slice: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        const bool cols = n.i0 == 1;
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) {
            if (cols) d(r, n.i1 + c) += g(r, c);
            else d(n.i1 + r, c) += g(r, c);
          }
        break;
      }
      case Op::broadcast: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c)
            d(d.rows() == 1 ? 0 : r, d.cols() == 1 ? 0 : c) += g(r, c);
        break;
      }
      case Op::transpose: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) d(c, r) += g(r, c);
        break;
      }
      case Op::gather_rows: {
        const int p = n.parents[0];
        if (!wants(p)) break;
        Tensor& d = acc(p);
        const auto& index = gathers_.at(i);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) d(index[r], c) += g(r, c);
        break;
      }
    }
  }

  // Appends nodes computing the vector-Jacobian product of node i with
  // upstream adjoint g, accumulating into adj for parents that depend on
  // the differentiation input.
  void symbolic_vjp(int i, Var g, const std::vector<char>& depends, std::vector<Var>& adj) {
    // Copy what we need: pushing nodes may reallocate nodes_.
    const Op op = nodes_[i].op;
    const std::vector<int> parents = nodes_[i].parents;
    const double a = nodes_[i].a, b = nodes_[i].b;
    const std::size_t i0 = nodes_[i].i0, i1 = nodes_[i].i1;
    const Var y(this, i);
    auto px = [&](std::size_t k) { return Var(this, parents[k]); };
    auto needs = [&](std::size_t k) { return depends[parents[k]] != 0; };
    auto give = [&](std::size_t k, Var d) {
      Var& slot = adj[parents[k]];
      slot = slot.valid() ? add(slot, d) : d;
    };
    auto mask_const = [&](Var x, auto pred) {
      Tensor m = x.value();
      for (auto& v : m.data()) v = pred(v) ? 1.0 : 0.0;
      return constant(std::move(m));
    };

    switch (op) {
      case Op::leaf: break;
      case Op::matmul:
        if (needs(0)) give(0, matmul(g, transpose(px(1))));
        if (needs(1)) give(1, matmul(transpose(px(0)), g));
        break;
      case Op::add:
        if (needs(0)) give(0, g);
        if (needs(1)) give(1, g);
        break;
      case Op::sub:
        if (needs(0)) give(0, g);
        if (needs(1)) give(1, neg(g));
        break;
      case Op::mul:
        if (needs(0)) give(0, mul(g, px(1)));
        if (needs(1)) give(1, mul(g, px(0)));
        break;
      case Op::neg:
      case Op::scale: give(0, scale(g, a)); break;
      case Op::add_scalar: give(0, g); break;
      case Op::exp: give(0, mul(g, y)); break;
      case Op::square: give(0, scale(mul(g, px(0)), 2.0)); break;
      case Op::sigmoid: give(0, mul(g, mul(y, add_scalar(neg(y), 1.0)))); break;
      case Op::tanh: give(0, mul(g, add_scalar(neg(square(y)), 1.0))); break;
      case Op::softplus: give(0, mul(g, sigmoid(px(0)))); break;
      case Op::relu: give(0, mul(g, mask_const(px(0), [](double v) { return v > 0.0; }))); break;
      case Op::clamp:
        give(0, mul(g, mask_const(px(0), [a, b](double v) { return v >= a && v <= b; })));
        break;
      case Op::sum: {
        const Tensor& x = nodes_[parents[0]].value;
        give(0, broadcast(g, x.rows(), x.cols()));
        break;
      }
      case Op::mean: {
        const Tensor& x = nodes_[parents[0]].value;
        give(0, scale(broadcast(g, x.rows(), x.cols()), 1.0 / static_cast<double>(x.size())));
        break;
      }
      case Op::sum_rows:
      case Op::sum_cols: {
        const std::size_t r = nodes_[parents[0]].value.rows();
        const std::size_t c = nodes_[parents[0]].value.cols();
        give(0, broadcast(g, r, c));
        break;
      }
      case Op::concat: {
        const int axis = static_cast<int>(i0);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parents.size(); ++k) {
          const Tensor& x = nodes_[parents[k]].value;
          const std::size_t extent = axis == 1 ? x.cols() : x.rows();
          if (needs(k)) give(k, slice(g, axis, offset, offset + extent));
          offset += extent;
        }
        break;
      }
      case Op::slice: {
        const int axis = static_cast<int>(i0);
        const Tensor& x = nodes_[parents[0]].value;
        const std::size_t extent = axis == 1 ? x.cols() : x.rows();
        const std::size_t len = axis == 1 ? g.cols() : g.rows();
        std::vector<Var> parts;
        auto zeros = [&](std::size_t n) {
          return constant(axis == 1 ? Tensor(x.rows(), n) : Tensor(n, x.cols()));
        };
        if (i1 > 0) parts.push_back(zeros(i1));
        parts.push_back(g);
        if (i1 + len < extent) parts.push_back(zeros(extent - i1 - len));
        give(0, parts.size() == 1 ? g : concat(parts, axis));
        break;
      }
      case Op::broadcast: {
        const Tensor& x = nodes_[parents[0]].value;
        Var d = g;
        if (x.rows() == 1 && g.rows() != 1) d = sum_rows(d);
        if (x.cols() == 1 && g.cols() != 1) d = sum_cols(d);
        give(0, d);
        break;
      }
      case Op::transpose: give(0, transpose(g)); break;
      case Op::log:
      case Op::softmax:
      case Op::gather_rows:
        throw ContractError(std::string("grad_wrt_input: op '") + std::string(op_name(op)) +
                            "' is not supported inside a derivative graph");
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  std::unordered_map<int, std::vector<std::size_t>> gathers_;
};

inline const Tensor& Var::value() const { return graph_->value(index_); }

// Free-function spellings ----------------------------------------------------

inline Var matmul(Var a, Var b) { return a.graph().matmul(a, b); }
inline Var operator+(Var a, Var b) { return a.graph().add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph().sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph().mul(a, b); }
inline Var operator-(Var a) { return a.graph().neg(a); }
inline Var operator*(double c, Var a) { return a.graph().scale(a, c); }
inline Var operator+(Var a, double c) { return a.graph().add_scalar(a, c); }
inline Var exp(Var a) { return a.graph().exp(a); }
inline Var log(Var a) { return a.graph().log(a); }
inline Var square(Var a) { return a.graph().square(a); }
inline Var sigmoid(Var a) { return a.graph().sigmoid(a); }
inline Var tanh(Var a) { return a.graph().tanh(a); }
inline Var softplus(Var a) { return a.graph().softplus(a); }
inline Var relu(Var a) { return a.graph().relu(a); }
inline Var clamp(Var a, double lo, double hi) { return a.graph().clamp(a, lo, hi); }
inline Var softmax(Var a) { return a.graph().softmax(a); }
inline Var sum(Var a) { return a.graph().sum(a); }
inline Var mean(Var a) { return a.graph().mean(a); }
inline Var sum_rows(Var a) { return a.graph().sum_rows(a); }
inline Var sum_cols(Var a) { return a.graph().sum_cols(a); }
inline Var transpose(Var a) { return a.graph().transpose(a); }
inline Var gather_rows(Var a, std::vector<std::size_t> index) { return a.graph().gather_rows(a, std::move(index)); }
inline Var broadcast(Var a, std::size_t rows, std::size_t cols) {
  return a.graph().broadcast(a, rows, cols);
}
inline Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  return a.graph().slice(a, axis, begin, end);
}
inline Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  return parts.front().graph().concat(parts, axis);
}

/// Elementwise product with a [1,c] or [r,1] operand expanded to a's shape.
inline Var mul_broadcast(Var a, Var b) { return a * broadcast(b, a.rows(), a.cols()); }
inline Var add_broadcast(Var a, Var b) { return a + broadcast(b, a.rows(), a.cols()); }

}  // namespace deepjoint::ad
