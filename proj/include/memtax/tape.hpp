#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memtax/tensor.hpp"

namespace memtax {

// Reference to a node recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t index = kNone;

  bool valid() const { return index != kNone; }
  friend bool operator==(Var, Var) = default;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,              // elementwise
  Scale,            // tensor * constant
  ScaleBy,          // (1,1) var * tensor
  ScaleRows,        // (R,C) rows scaled by (R,1)
  MatMul,
  Transpose,
  ConcatRows,
  SliceRows,
  Sigmoid,
  Tanh,
  Relu,
  Softmax,
  Sum,
  SquaredError,     // sum of (a-b)^2
  CrossEntropy,     // -sum t*log(clamp(p))
  CosineSimilarity, // rows of (M,W) against a (W,1) key -> (M,1)
  CircularConvolve, // (M,1) weights with a (2n+1,1) shift distribution
};

const char* op_name(OpKind kind);

struct OpArgs {
  double scalar = 0.0;
  std::size_t begin = 0;
  std::size_t count = 0;
};

inline constexpr double kCrossEntropyFloor = 1e-12;
inline constexpr double kCosineEpsilon = 1e-10;

class Tape;

// Holds d(root)/d(node) for every node of a tape. Unreached nodes read as zeros.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  Tensor operator[](Var v) const {
    const Tensor& g = grads_.at(v.index);
    if (g.empty()) return Tensor(shapes_[v.index].rows, shapes_[v.index].cols);
    return g;
  }
  bool reached(Var v) const { return !grads_.at(v.index).empty(); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

// Append-only record of eagerly evaluated operations. Single-threaded.
class Tape {
 public:
  Var constant(Tensor value) { return push_leaf(std::move(value), false); }
  Var parameter(Tensor value) { return push_leaf(std::move(value), true); }

  // Generic entry point: evaluates op-kind on the operands and records it.
  Var record(OpKind kind, std::span<const Var> operands, OpArgs args = {});

  Var add(Var a, Var b) { return record2(OpKind::Add, a, b); }
  Var sub(Var a, Var b) { return record2(OpKind::Sub, a, b); }
  Var mul(Var a, Var b) { return record2(OpKind::Mul, a, b); }
  Var scale(Var a, double k) { return record1(OpKind::Scale, a, {.scalar = k}); }
  Var scale_by(Var s, Var a) { return record2(OpKind::ScaleBy, s, a); }
  Var scale_rows(Var m, Var v) { return record2(OpKind::ScaleRows, m, v); }
  Var matmul(Var a, Var b) { return record2(OpKind::MatMul, a, b); }
  Var transpose(Var a) { return record1(OpKind::Transpose, a); }
  Var concat_rows(std::span<const Var> parts) { return record(OpKind::ConcatRows, parts); }
  Var concat_rows(std::initializer_list<Var> parts) {
    return record(OpKind::ConcatRows, std::span<const Var>(parts.begin(), parts.size()));
  }
  Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    return record1(OpKind::SliceRows, a, {.begin = begin, .count = count});
  }
  Var sigmoid(Var a) { return record1(OpKind::Sigmoid, a); }
  Var tanh(Var a) { return record1(OpKind::Tanh, a); }
  Var relu(Var a) { return record1(OpKind::Relu, a); }
  Var softmax(Var a) { return record1(OpKind::Softmax, a); }
  Var sum(Var a) { return record1(OpKind::Sum, a); }
  Var squared_error(Var a, Var b) { return record2(OpKind::SquaredError, a, b); }
  Var cross_entropy(Var probs, Var target) { return record2(OpKind::CrossEntropy, probs, target); }
  Var cosine_similarity(Var rows, Var key) { return record2(OpKind::CosineSimilarity, rows, key); }
  Var circular_convolve(Var weights, Var shifts) {
    return record2(OpKind::CircularConvolve, weights, shifts);
  }

  // W*x + b
  Var affine(Var w, Var x, Var b) { return add(matmul(w, x), b); }

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  Shape shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
  OpKind kind(Var v) const { return nodes_.at(v.index).kind; }
  std::span<const std::uint32_t> operands(Var v) const { return nodes_.at(v.index).operands; }
  std::size_t size() const { return nodes_.size(); }

  Gradients backward(Var root) const;

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    bool requires_grad = false;
    OpArgs args;
    std::vector<std::uint32_t> operands;
    Tensor value;
  };

  Var push_leaf(Tensor value, bool grad) {
    Node n;
    n.kind = OpKind::Leaf;
    n.requires_grad = grad;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }
  Var record1(OpKind k, Var a, OpArgs args = {}) {
    const Var ops[1] = {a};
    return record(k, ops, args);
  }
  Var record2(OpKind k, Var a, Var b) {
    const Var ops[2] = {a, b};
    return record(k, ops);
  }

  Tensor forward(OpKind kind, std::span<const Tensor* const> in, const OpArgs& args) const;
  void backward_node(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "elementwise-mul";
    case OpKind::Scale: return "scalar-mul";
    case OpKind::ScaleBy: return "scale-by";
    case OpKind::ScaleRows: return "scale-rows";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::ConcatRows: return "concat-rows";
    case OpKind::SliceRows: return "slice-rows";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Softmax: return "softmax";
    case OpKind::Sum: return "sum";
    case OpKind::SquaredError: return "squared-error";
    case OpKind::CrossEntropy: return "cross-entropy";
    case OpKind::CosineSimilarity: return "cosine-similarity";
    case OpKind::CircularConvolve: return "circular-convolve";
  }
  return "unknown";
}

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void require_same_shape(OpKind k, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(op_name(k)) + " shape mismatch", a.shape(), b.shape());
}

inline void require_column(OpKind k, const Tensor& a) {
  if (a.cols() != 1) throw ShapeError(std::string(op_name(k)) + " needs a column vector", a.shape(), {a.rows(), 1});
}

inline void accumulate(std::vector<Tensor>& grads, std::uint32_t idx, Tensor g) {
  Tensor& slot = grads[idx];
  if (slot.empty()) {
    slot = std::move(g);
  } else {
    slot += g;
  }
}

}  // namespace detail

inline Var Tape::record(OpKind kind, std::span<const Var> operands, OpArgs args) {
  if (kind == OpKind::Leaf) throw std::invalid_argument("record: use constant()/parameter() for leaves");
  std::vector<const Tensor*> in;
  in.reserve(operands.size());
  Node n;
  n.kind = kind;
  n.args = args;
  n.operands.reserve(operands.size());
  for (Var v : operands) {
    if (!v.valid() || v.index >= nodes_.size()) throw std::out_of_range("record: invalid operand reference");
    in.push_back(&nodes_[v.index].value);
    n.operands.push_back(v.index);
    n.requires_grad = n.requires_grad || nodes_[v.index].requires_grad;
  }
  n.value = forward(kind, in, args);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

inline Tensor Tape::forward(OpKind kind, std::span<const Tensor* const> in, const OpArgs& args) const {
  using namespace detail;
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument(std::string(op_name(kind)) + " expects " + std::to_string(n) + " operands");
    }
  };
  switch (kind) {
    case OpKind::Add: {
      need(2);
      require_same_shape(kind, *in[0], *in[1]);
      return *in[0] + *in[1];
    }
    case OpKind::Sub: {
      need(2);
      require_same_shape(kind, *in[0], *in[1]);
      return *in[0] - *in[1];
    }
    case OpKind::Mul: {
      need(2);
      require_same_shape(kind, *in[0], *in[1]);
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*in[1])[i];
      return out;
    }
    case OpKind::Scale: {
      need(1);
      return *in[0] * args.scalar;
    }
    case OpKind::ScaleBy: {
      need(2);
      if (in[0]->shape() != Shape{1, 1}) throw ShapeError("scale-by needs a (1,1) scale", in[0]->shape(), {1, 1});
      return *in[1] * (*in[0])[0];
    }
    case OpKind::ScaleRows: {
      need(2);
      const Tensor& m = *in[0];
      const Tensor& v = *in[1];
      if (v.shape() != Shape{m.rows(), 1}) throw ShapeError("scale-rows needs one scale per row", m.shape(), v.shape());
      Tensor out = m;
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) *= v[r];
      return out;
    }
    case OpKind::MatMul: {
      need(2);
      return memtax::matmul(*in[0], *in[1]);
    }
    case OpKind::Transpose: {
      need(1);
      return in[0]->transposed();
    }
    case OpKind::ConcatRows: {
      if (in.empty()) throw std::invalid_argument("concat-rows needs at least one operand");
      const std::size_t cols = in[0]->cols();
      std::size_t rows = 0;
      for (const Tensor* t : in) {
        if (t->cols() != cols) throw ShapeError("concat-rows column mismatch", in[0]->shape(), t->shape());
        rows += t->rows();
      }
      Tensor out(rows, cols);
      std::size_t off = 0;
      for (const Tensor* t : in) {
        std::copy(t->values().begin(), t->values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
        off += t->size();
      }
      return out;
    }
    case OpKind::SliceRows: {
      need(1);
      const Tensor& a = *in[0];
      if (args.count == 0 || args.begin + args.count > a.rows()) {
        throw ShapeError("slice-rows [" + std::to_string(args.begin) + ", " +
                         std::to_string(args.begin + args.count) + ") out of range for " + to_string(a.shape()));
      }
      Tensor out(args.count, a.cols());
      const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(args.begin * a.cols());
      std::copy(first, first + static_cast<std::ptrdiff_t>(out.size()), out.values().begin());
      return out;
    }
    case OpKind::Sigmoid: {
      need(1);
      Tensor out = *in[0];
      for (double& v : out.values()) v = memtax::detail::sigmoid(v);
      return out;
    }
    case OpKind::Tanh: {
      need(1);
      Tensor out = *in[0];
      for (double& v : out.values()) v = std::tanh(v);
      return out;
    }
    case OpKind::Relu: {
      need(1);
      Tensor out = *in[0];
      for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::Softmax: {
      need(1);
      require_column(kind, *in[0]);
      Tensor out = *in[0];
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : out.values()) mx = std::max(mx, v);
      double total = 0.0;
      for (double& v : out.values()) {
        v = std::exp(v - mx);
        total += v;
      }
      for (double& v : out.values()) v /= total;
      return out;
    }
    case OpKind::Sum: {
      need(1);
      return Tensor::scalar(in[0]->sum());
    }
    case OpKind::SquaredError: {
      need(2);
      require_same_shape(kind, *in[0], *in[1]);
      double s = 0.0;
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double d = (*in[0])[i] - (*in[1])[i];
        s += d * d;
      }
      return Tensor::scalar(s);
    }
    case OpKind::CrossEntropy: {
      need(2);
      require_same_shape(kind, *in[0], *in[1]);
      double s = 0.0;
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double p = (*in[0])[i];
        if (!(p >= 0.0)) {
          throw DomainError("cross-entropy: predicted probability " + std::to_string(p) + " is not a probability");
        }
        const double t = (*in[1])[i];
        if (t != 0.0) s -= t * std::log(std::clamp(p, kCrossEntropyFloor, 1.0));
      }
      return Tensor::scalar(s);
    }
    case OpKind::CosineSimilarity: {
      need(2);
      const Tensor& m = *in[0];
      const Tensor& k = *in[1];
      if (k.shape() != Shape{m.cols(), 1}) throw ShapeError("cosine-similarity key must match row width", m.shape(), k.shape());
      const double knorm = std::sqrt(k.squared_norm());
      Tensor out(m.rows(), 1);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        double dot = 0.0;
        double rn = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
          dot += m(r, c) * k[c];
          rn += m(r, c) * m(r, c);
        }
        out[r] = dot / std::max(std::sqrt(rn) * knorm, kCosineEpsilon);
      }
      return out;
    }
    case OpKind::CircularConvolve: {
      need(2);
      const Tensor& w = *in[0];
      const Tensor& s = *in[1];
      require_column(kind, w);
      require_column(kind, s);
      if (s.rows() % 2 == 0 || s.rows() > w.rows()) {
        throw ShapeError("circular-convolve needs 2n+1 <= M shift entries", w.shape(), s.shape());
      }
      const auto m = static_cast<std::ptrdiff_t>(w.rows());
      const auto n = static_cast<std::ptrdiff_t>(s.rows() / 2);
      Tensor out(w.rows(), 1);
      for (std::ptrdiff_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(s.rows()); ++j) {
          const std::ptrdiff_t src = ((i - (j - n)) % m + m) % m;
          acc += w[static_cast<std::size_t>(src)] * s[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = acc;
      }
      return out;
    }
    case OpKind::Leaf: break;
  }
  throw std::invalid_argument("unsupported op kind");
}

inline Gradients Tape::backward(Var root) const {
  if (!root.valid() || root.index >= nodes_.size()) throw std::out_of_range("backward: invalid root");
  const Shape rs = nodes_[root.index].value.shape();
  if (rs != Shape{1, 1}) throw ShapeError("backward needs a scalar root", rs, {1, 1});

  std::vector<Tensor> grads(nodes_.size());
  grads[root.index] = Tensor::scalar(1.0);
  for (std::size_t i = root.index + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].empty() || node.kind == OpKind::Leaf || !node.requires_grad) continue;
    backward_node(node, grads[i], grads);
  }
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const Node& n : nodes_) shapes.push_back(n.value.shape());
  return Gradients(std::move(grads), std::move(shapes));
}

inline void Tape::backward_node(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const {
  using detail::accumulate;
  const auto& ops = node.operands;
  auto wants = [&](std::size_t k) { return nodes_[ops[k]].requires_grad; };
  auto val = [&](std::size_t k) -> const Tensor& { return nodes_[ops[k]].value; };
  const Tensor& y = node.value;

  switch (node.kind) {
    case OpKind::Add:
      if (wants(0)) accumulate(grads, ops[0], g);
      if (wants(1)) accumulate(grads, ops[1], g);
      return;
    case OpKind::Sub:
      if (wants(0)) accumulate(grads, ops[0], g);
      if (wants(1)) accumulate(grads, ops[1], g * -1.0);
      return;
    case OpKind::Mul: {
      if (wants(0)) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= val(1)[i];
        accumulate(grads, ops[0], std::move(ga));
      }
      if (wants(1)) {
        Tensor gb = g;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= val(0)[i];
        accumulate(grads, ops[1], std::move(gb));
      }
      return;
    }
    case OpKind::Scale:
      if (wants(0)) accumulate(grads, ops[0], g * node.args.scalar);
      return;
    case OpKind::ScaleBy: {
      const double s = val(0)[0];
      if (wants(0)) {
        double d = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) d += g[i] * val(1)[i];
        accumulate(grads, ops[0], Tensor::scalar(d));
      }
      if (wants(1)) accumulate(grads, ops[1], g * s);
      return;
    }
    case OpKind::ScaleRows: {
      const Tensor& m = val(0);
      const Tensor& v = val(1);
      if (wants(0)) {
        Tensor gm = g;
        for (std::size_t r = 0; r < m.rows(); ++r)
          for (std::size_t c = 0; c < m.cols(); ++c) gm(r, c) *= v[r];
        accumulate(grads, ops[0], std::move(gm));
      }
      if (wants(1)) {
        Tensor gv(v.rows(), 1);
        for (std::size_t r = 0; r < m.rows(); ++r)
          for (std::size_t c = 0; c < m.cols(); ++c) gv[r] += g(r, c) * m(r, c);
        accumulate(grads, ops[1], std::move(gv));
      }
      return;
    }
    case OpKind::MatMul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (wants(0)) {
        // dA = G * B^T
        Tensor ga(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t k = 0; k < a.cols(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < b.cols(); ++j) acc += g(i, j) * b(k, j);
            ga(i, k) = acc;
          }
        accumulate(grads, ops[0], std::move(ga));
      }
      if (wants(1)) {
        // dB = A^T * G
        Tensor gb(b.rows(), b.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) gb(k, j) += aik * g(i, j);
          }
        accumulate(grads, ops[1], std::move(gb));
      }
      return;
    }
    case OpKind::Transpose:
      if (wants(0)) accumulate(grads, ops[0], g.transposed());
      return;
    case OpKind::ConcatRows: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < ops.size(); ++k) {
        const Tensor& part = val(k);
        if (wants(k)) {
          Tensor gp(part.rows(), part.cols());
          const auto first = g.values().begin() + static_cast<std::ptrdiff_t>(off);
          std::copy(first, first + static_cast<std::ptrdiff_t>(part.size()), gp.values().begin());
          accumulate(grads, ops[k], std::move(gp));
        }
        off += part.size();
      }
      return;
    }
    case OpKind::SliceRows: {
      if (!wants(0)) return;
      const Tensor& a = val(0);
      Tensor ga(a.rows(), a.cols());
      std::copy(g.values().begin(), g.values().end(),
                ga.values().begin() + static_cast<std::ptrdiff_t>(node.args.begin * a.cols()));
      accumulate(grads, ops[0], std::move(ga));
      return;
    }
    case OpKind::Sigmoid: {
      if (!wants(0)) return;
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i] * (1.0 - y[i]);
      accumulate(grads, ops[0], std::move(ga));
      return;
    }
    case OpKind::Tanh: {
      if (!wants(0)) return;
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= 1.0 - y[i] * y[i];
      accumulate(grads, ops[0], std::move(ga));
      return;
    }
    case OpKind::Relu: {
      if (!wants(0)) return;
      Tensor ga = g;
      // derivative at exactly 0 is 0
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = val(0)[i] > 0.0 ? ga[i] : 0.0;
      accumulate(grads, ops[0], std::move(ga));
      return;
    }
    case OpKind::Softmax: {
      if (!wants(0)) return;
      double dot = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
      Tensor ga(y.rows(), y.cols());
      for (std::size_t i = 0; i < y.size(); ++i) ga[i] = y[i] * (g[i] - dot);
      accumulate(grads, ops[0], std::move(ga));
      return;
    }
    case OpKind::Sum:
      if (wants(0)) accumulate(grads, ops[0], Tensor(val(0).rows(), val(0).cols(), g[0]));
      return;
    case OpKind::SquaredError: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      Tensor d = a - b;
      d *= 2.0 * g[0];
      if (wants(1)) accumulate(grads, ops[1], d * -1.0);
      if (wants(0)) accumulate(grads, ops[0], std::move(d));
      return;
    }
    case OpKind::CrossEntropy: {
      const Tensor& p = val(0);
      const Tensor& t = val(1);
      if (wants(0)) {
        Tensor gp(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (t[i] != 0.0 && p[i] >= kCrossEntropyFloor && p[i] <= 1.0) gp[i] = -g[0] * t[i] / p[i];
        }
        accumulate(grads, ops[0], std::move(gp));
      }
      if (wants(1)) {
        Tensor gt(t.rows(), t.cols());
        for (std::size_t i = 0; i < t.size(); ++i) gt[i] = -g[0] * std::log(std::clamp(p[i], kCrossEntropyFloor, 1.0));
        accumulate(grads, ops[1], std::move(gt));
      }
      return;
    }
    case OpKind::CosineSimilarity: {
      const Tensor& m = val(0);
      const Tensor& k = val(1);
      const double knorm = std::sqrt(k.squared_norm());
      Tensor gm(m.rows(), m.cols());
      Tensor gk(k.rows(), 1);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        if (g[r] == 0.0) continue;
        double rn2 = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) rn2 += m(r, c) * m(r, c);
        const double rn = std::sqrt(rn2);
        const double denom = rn * knorm;
        if (denom > kCosineEpsilon) {
          const double sim = y[r];
          for (std::size_t c = 0; c < m.cols(); ++c) {
            gm(r, c) += g[r] * (k[c] / denom - sim * m(r, c) / rn2);
            gk[c] += g[r] * (m(r, c) / denom - sim * k[c] / (knorm * knorm));
          }
        } else {
          for (std::size_t c = 0; c < m.cols(); ++c) {
            gm(r, c) += g[r] * k[c] / kCosineEpsilon;
            gk[c] += g[r] * m(r, c) / kCosineEpsilon;
          }
        }
      }
      if (wants(0)) accumulate(grads, ops[0], std::move(gm));
      if (wants(1)) accumulate(grads, ops[1], std::move(gk));
      return;
    }
    case OpKind::CircularConvolve: {
      const Tensor& w = val(0);
      const Tensor& s = val(1);
      const auto m = static_cast<std::ptrdiff_t>(w.rows());
      const auto n = static_cast<std::ptrdiff_t>(s.rows() / 2);
      Tensor gw(w.rows(), 1);
      Tensor gs(s.rows(), 1);
      for (std::ptrdiff_t i = 0; i < m; ++i) {
        const double gi = g[static_cast<std::size_t>(i)];
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(s.rows()); ++j) {
          const auto src = static_cast<std::size_t>(((i - (j - n)) % m + m) % m);
          gw[src] += gi * s[static_cast<std::size_t>(j)];
          gs[static_cast<std::size_t>(j)] += gi * w[src];
        }
      }
      if (wants(0)) accumulate(grads, ops[0], std::move(gw));
      if (wants(1)) accumulate(grads, ops[1], std::move(gs));
      return;
    }
    case OpKind::Leaf: return;
  }
}

}  // namespace memtax
