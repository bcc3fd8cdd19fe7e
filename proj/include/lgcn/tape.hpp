#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// Every op appends one node to a Tape. Nodes are appended after their inputs,
// so reverse index order is a reverse topological order and backward() visits
// each node exactly once. Values are immutable once recorded.
//
// Binary elementwise ops accept a right operand that is either the same shape
// as the left one or broadcastable: 1x1 (scalar), 1xC (row) or Rx1 (column).

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lgcn/error.hpp"
#include "lgcn/matrix.hpp"

namespace lgcn::ad {

enum class OpKind {
  leaf,
  matmul,
  gram,
  transpose,
  add,
  sub,
  mul,
  div,
  scale,
  tanh,
  relu,
  row_softmax,
  row_l2_norms,
  row_sum,
  rsqrt,
  sum,
  frobenius_sq,
  masked_nll,
};

constexpr std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::gram: return "gram";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::scale: return "scale";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::row_softmax: return "row_softmax";
    case OpKind::row_l2_norms: return "row_l2_norms";
    case OpKind::row_sum: return "row_sum";
    case OpKind::rsqrt: return "rsqrt";
    case OpKind::sum: return "sum";
    case OpKind::frobenius_sq: return "frobenius_sq";
    case OpKind::masked_nll: return "masked_nll";
  }
  return "?";
}

/// Smallest |denominator| accepted by div.
inline constexpr double kDivEpsilon = 1e-12;
/// Lower clamp applied to probabilities inside the log of masked_nll.
inline constexpr double kLogClamp = 1e-15;

class Tape;

/// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records an input. Gradients are accumulated only for leaves with requires_grad.
  Var leaf(Matrix value, bool requires_grad = true) {
    if (value.rows() < 1 || value.cols() < 1) throw ShapeError("leaf: empty matrix " + shape_str(value));
    Node n;
    n.op = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value(Var v) const { return node(v).value; }

  /// dRoot/dv after backward(). All-zero when v did not influence the root.
  const Matrix& grad(Var v) const {
    const Node& n = node(v);
    if (n.adjoint.size() == 0) {
      n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.adjoint;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind op(Var v) const { return node(v).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Test hook: corrupts the divisor adjoint of div so gradient checkers can be
  /// shown to detect a broken backward pass.
  void set_fault_injection(bool on) { fault_injection_ = on; }

  /// Reverse sweep from a 1x1 root. Clears adjoints from any previous sweep first,
  /// so repeated calls give identical results.
  void backward(Var root) {
    const Node& r = node(root);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw ContractError("backward: root must be 1x1, got " + shape_str(r.value));
    }
    for (auto& n : nodes_) n.adjoint.resize(0, 0);
    if (!r.requires_grad) return;
    nodes_[root.id].adjoint = Matrix::Ones(1, 1);
    for (std::size_t k = root.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || n.adjoint.size() == 0 || n.op == OpKind::leaf) continue;
      propagate(n);
    }
  }

 private:
  friend Var record(Tape&, OpKind, std::array<std::optional<Var>, 2>, Matrix, double,
                    std::vector<std::ptrdiff_t>);

  struct Node {
    OpKind op = OpKind::leaf;
    std::array<std::size_t, 2> in{};
    int n_in = 0;
    Matrix value;
    mutable Matrix adjoint;
    bool requires_grad = false;
    double scalar = 0.0;
    std::vector<std::ptrdiff_t> index;
  };

  const Node& node(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
    return nodes_[v.id];
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Matrix& adjoint_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.adjoint.size() == 0) n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.adjoint;
  }

  bool wants(std::size_t id) const { return nodes_[id].requires_grad; }

  // Sums a full-shape gradient down to the (possibly broadcast) operand shape.
  static Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) return scalar_matrix(g.sum());
    if (rows == 1) return g.colwise().sum();
    return g.rowwise().sum();
  }

  void propagate(const Node& n);

  std::vector<Node> nodes_;
  bool fault_injection_ = false;
};

inline const Matrix& Var::value() const { return tape->value(*this); }
inline const Matrix& Var::grad() const { return tape->grad(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b, std::string_view op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape;
}

enum class Bcast { same, scalar, row, col };

inline Bcast broadcast_kind(const Matrix& a, const Matrix& b, std::string_view op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline Matrix expand(const Matrix& b, Eigen::Index rows, Eigen::Index cols) {
  if (b.rows() == rows && b.cols() == cols) return b;
  if (b.rows() == 1 && b.cols() == 1) return Matrix::Constant(rows, cols, b(0, 0));
  if (b.rows() == 1) return b.replicate(rows, 1);
  return b.replicate(1, cols);
}

/// `b` itself when it already has the full shape, otherwise its expansion stored in `scratch`.
inline const Matrix& expanded(const Matrix& b, Eigen::Index rows, Eigen::Index cols, Matrix& scratch) {
  if (b.rows() == rows && b.cols() == cols) return b;
  scratch = expand(b, rows, cols);
  return scratch;
}

}  // namespace detail

inline Var record(Tape& t, OpKind op, std::array<std::optional<Var>, 2> inputs, Matrix value,
                  double scalar = 0.0, std::vector<std::ptrdiff_t> index = {}) {
  Tape::Node n;
  n.op = op;
  n.value = std::move(value);
  n.scalar = scalar;
  n.index = std::move(index);
  for (const auto& in : inputs) {
    if (!in) continue;
    n.in[static_cast<std::size_t>(n.n_in++)] = in->id;
    n.requires_grad = n.requires_grad || t.requires_grad(*in);
  }
  return t.push(std::move(n));
}

// ---- ops ----

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_str(av) + " * " + shape_str(bv));
  }
  Matrix out = av * bv;
  return record(t, OpKind::matmul, {a, b}, std::move(out));
}

/// a a^T. One product in each direction instead of matmul(a, transpose(a)).
inline Var gram(Var a) {
  Matrix out = a.value() * a.value().transpose();
  return record(*a.tape, OpKind::gram, {a, std::nullopt}, std::move(out));
}

inline Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return record(*a.tape, OpKind::transpose, {a, std::nullopt}, std::move(out));
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  const Matrix& av = a.value();
  detail::broadcast_kind(av, b.value(), "add");
  Matrix tmp;
  Matrix out = av + detail::expanded(b.value(), av.rows(), av.cols(), tmp);
  return record(t, OpKind::add, {a, b}, std::move(out));
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "sub");
  const Matrix& av = a.value();
  detail::broadcast_kind(av, b.value(), "sub");
  Matrix tmp;
  Matrix out = av - detail::expanded(b.value(), av.rows(), av.cols(), tmp);
  return record(t, OpKind::sub, {a, b}, std::move(out));
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  const Matrix& av = a.value();
  detail::broadcast_kind(av, b.value(), "mul");
  Matrix tmp;
  Matrix out = av.cwiseProduct(detail::expanded(b.value(), av.rows(), av.cols(), tmp));
  return record(t, OpKind::mul, {a, b}, std::move(out));
}

/// Elementwise a / b. Any |b| < 1e-12 is a DomainError.
inline Var div(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "div");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  detail::broadcast_kind(av, bv, "div");
  for (Eigen::Index i = 0; i < bv.rows(); ++i) {
    for (Eigen::Index j = 0; j < bv.cols(); ++j) {
      if (!(std::abs(bv(i, j)) >= kDivEpsilon)) {
        throw DomainError("div: |denominator| < 1e-12 at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
      }
    }
  }
  Matrix tmp;
  Matrix out = av.cwiseQuotient(detail::expanded(bv, av.rows(), av.cols(), tmp));
  return record(t, OpKind::div, {a, b}, std::move(out));
}

inline Var scale(Var a, double s) {
  Matrix out = s * a.value();
  return record(*a.tape, OpKind::scale, {a, std::nullopt}, std::move(out), s);
}

inline Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return record(*a.tape, OpKind::tanh, {a, std::nullopt}, std::move(out));
}

/// max(x, 0); the subgradient at 0 is 0.
inline Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return record(*a.tape, OpKind::relu, {a, std::nullopt}, std::move(out));
}

/// Softmax over each row, with per-row max subtraction.
inline Var row_softmax(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return record(*a.tape, OpKind::row_softmax, {a, std::nullopt}, std::move(out));
}

/// Rx1 column of per-row Euclidean norms. Zero rows give 0 with zero gradient.
inline Var row_l2_norms(Var a) {
  Matrix out = a.value().rowwise().norm();
  return record(*a.tape, OpKind::row_l2_norms, {a, std::nullopt}, std::move(out));
}

/// Rx1 column of row sums.
inline Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return record(*a.tape, OpKind::row_sum, {a, std::nullopt}, std::move(out));
}

/// x^(-1/2) elementwise; requires every entry > 0.
inline Var rsqrt(Var a) {
  const Matrix& x = a.value();
  if (!(x.array() > 0.0).all()) throw DomainError("rsqrt: non-positive entry");
  Matrix out = x.array().rsqrt().matrix();
  return record(*a.tape, OpKind::rsqrt, {a, std::nullopt}, std::move(out));
}

inline Var sum(Var a) {
  return record(*a.tape, OpKind::sum, {a, std::nullopt}, scalar_matrix(a.value().sum()));
}

inline Var frobenius_sq(Var a) {
  return record(*a.tape, OpKind::frobenius_sq, {a, std::nullopt}, scalar_matrix(a.value().squaredNorm()));
}

/// -sum over listed rows i of ln(max(p(i, target_i), 1e-15)).
/// `targets` holds one column index per row, or -1 for rows that do not contribute.
inline Var masked_nll(Var probs, std::vector<std::ptrdiff_t> targets) {
  const Matrix& p = probs.value();
  if (static_cast<Eigen::Index>(targets.size()) != p.rows()) {
    throw ShapeError("masked_nll: " + std::to_string(targets.size()) + " targets for " + shape_str(p));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto k = targets[static_cast<std::size_t>(i)];
    if (k < 0) continue;
    if (k >= p.cols()) throw ContractError("masked_nll: class index out of range at row " + std::to_string(i));
    total -= std::log(std::max(p(i, k), kLogClamp));
  }
  return record(*probs.tape, OpKind::masked_nll, {probs, std::nullopt}, scalar_matrix(total), 0.0,
                std::move(targets));
}

// ---- reverse sweep ----

inline void Tape::propagate(const Node& n) {
  const Matrix& g = n.adjoint;
  const std::size_t a = n.in[0];
  const std::size_t b = n.in[1];
  const Matrix& av = nodes_[a].value;

  switch (n.op) {
    case OpKind::leaf:
      break;
    case OpKind::matmul: {
      const Matrix& bv = nodes_[b].value;
      if (wants(a)) adjoint_of(a).noalias() += g * bv.transpose();
      if (wants(b)) adjoint_of(b).noalias() += av.transpose() * g;
      break;
    }
    case OpKind::gram:
      if (wants(a)) adjoint_of(a).noalias() += (g + g.transpose()) * av;
      break;
    case OpKind::transpose:
      if (wants(a)) adjoint_of(a) += g.transpose();
      break;
    case OpKind::add:
    case OpKind::sub: {
      if (wants(a)) adjoint_of(a) += g;
      if (wants(b)) {
        const Matrix& bv = nodes_[b].value;
        Matrix gb = reduce_to(g, bv.rows(), bv.cols());
        if (n.op == OpKind::sub) gb = -gb;
        adjoint_of(b) += gb;
      }
      break;
    }
    case OpKind::mul: {
      const Matrix& bv = nodes_[b].value;
      Matrix tmp;
      if (wants(a)) adjoint_of(a) += g.cwiseProduct(detail::expanded(bv, g.rows(), g.cols(), tmp));
      if (wants(b)) adjoint_of(b) += reduce_to(g.cwiseProduct(av), bv.rows(), bv.cols());
      break;
    }
    case OpKind::div: {
      const Matrix& bv = nodes_[b].value;
      Matrix tmp;
      const Matrix& bfull = detail::expanded(bv, g.rows(), g.cols(), tmp);
      if (wants(a)) adjoint_of(a) += g.cwiseQuotient(bfull);
      if (wants(b)) {
        // d(a/b)/db = -(a/b)/b
        Matrix gb = -g.cwiseProduct(n.value).cwiseQuotient(bfull);
        if (fault_injection_) gb *= 0.5;
        adjoint_of(b) += reduce_to(gb, bv.rows(), bv.cols());
      }
      break;
    }
    case OpKind::scale:
      if (wants(a)) adjoint_of(a) += n.scalar * g;
      break;
    case OpKind::tanh:
      if (wants(a)) adjoint_of(a) += g.cwiseProduct((1.0 - n.value.array().square()).matrix());
      break;
    case OpKind::relu:
      if (wants(a)) adjoint_of(a) += (av.array() > 0.0).select(g, 0.0).matrix();
      break;
    case OpKind::row_softmax: {
      if (!wants(a)) break;
      const Matrix& y = n.value;
      const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
      adjoint_of(a) += y.cwiseProduct(g - dots.replicate(1, g.cols()));
      break;
    }
    case OpKind::row_l2_norms: {
      if (!wants(a)) break;
      Matrix& ga = adjoint_of(a);
      for (Eigen::Index i = 0; i < av.rows(); ++i) {
        const double norm = n.value(i, 0);
        if (norm > 0.0) ga.row(i) += (g(i, 0) / norm) * av.row(i);
      }
      break;
    }
    case OpKind::row_sum:
      if (wants(a)) adjoint_of(a) += g.replicate(1, av.cols());
      break;
    case OpKind::rsqrt:
      // d x^(-1/2) = -1/2 x^(-3/2) = -1/2 y^3
      if (wants(a)) adjoint_of(a) += (-0.5 * g.array() * n.value.array().cube()).matrix();
      break;
    case OpKind::sum:
      if (wants(a)) adjoint_of(a).array() += g(0, 0);
      break;
    case OpKind::frobenius_sq:
      if (wants(a)) adjoint_of(a) += (2.0 * g(0, 0)) * av;
      break;
    case OpKind::masked_nll: {
      if (!wants(a)) break;
      Matrix& ga = adjoint_of(a);
      for (Eigen::Index i = 0; i < av.rows(); ++i) {
        const auto k = n.index[static_cast<std::size_t>(i)];
        if (k < 0) continue;
        const double p = av(i, k);
        if (p > kLogClamp) ga(i, k) -= g(0, 0) / p;
      }
      break;
    }
  }
}

}  // namespace lgcn::ad
