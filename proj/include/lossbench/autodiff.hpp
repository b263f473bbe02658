#ifndef LOSSBENCH_AUTODIFF_HPP
#define LOSSBENCH_AUTODIFF_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossbench/sparse.hpp"
#include "lossbench/tensor.hpp"

namespace lossbench {

using NodeId = std::int32_t;

enum class OpKind {
  Leaf,
  Matmul,
  Add,
  Sub,
  Mul,
  ScalarMul,
  Sigmoid,
  Relu,
  LeakyRelu,
  Tanh,
  Exp,
  Log,
  Softmax,
  Mean,
  Sum,
  Concat,
  RowSlice,
  Transpose,
  SparseMatmul,
  SquaredFrobenius,
  Hinge,
  CosineRows,
  LayerNorm,
  AdaptivePool,
};

/// Reduction / concat axis. kAll collapses to a 1x1 scalar.
enum class Axis : int { Rows = 0, Cols = 1, All = -1 };

namespace detail {

inline bool broadcast_ok(std::size_t a, std::size_t b) { return a == b || a == 1 || b == 1; }

inline Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* name,
                               double (*f)(double, double)) {
  require_shape(broadcast_ok(a.rows, b.rows) && broadcast_ok(a.cols, b.cols), name, a, b);
  const std::size_t r = std::max(a.rows, b.rows);
  const std::size_t c = std::max(a.cols, b.cols);
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out(i, j) = f(a(a.rows == 1 ? 0 : i, a.cols == 1 ? 0 : j),
                    b(b.rows == 1 ? 0 : i, b.cols == 1 ? 0 : j));
  return out;
}

/// Sum `g` over the dims that were broadcast to reach `g`'s shape from (r, c).
inline Tensor reduce_to(const Tensor& g, std::size_t r, std::size_t c) {
  if (g.rows == r && g.cols == c) return g;
  Tensor out(r, c);
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t j = 0; j < g.cols; ++j) out(r == 1 ? 0 : i, c == 1 ? 0 : j) += g(i, j);
  return out;
}

}  // namespace detail

/// A recorded eager computation: each op computes its forward value on
/// creation and caches what backward needs. Single-threaded by design.
class Tape {
 public:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    bool param = false;
    // op attributes
    double scalar = 0.0;  // ScalarMul factor / LeakyRelu slope / LayerNorm eps
    Axis axis = Axis::All;
    std::vector<std::size_t> rows;  // RowSlice indices
    const SparseMatrix* sp = nullptr;
    std::size_t pool_out = 0;
  };

  NodeId leaf(Tensor t, bool is_param = false) {
    Node n;
    n.value = std::move(t);
    n.param = is_param;
    return push(std::move(n));
  }
  NodeId constant(Tensor t) { return leaf(std::move(t), false); }
  NodeId parameter(Tensor t) { return leaf(std::move(t), true); }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require_shape(A.cols == B.rows, "matmul", A, B);
    Node n = binary(OpKind::Matmul, a, b);
    n.value = Tensor(A.rows, B.cols);
    n.value.map().noalias() = A.map() * B.map();
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return elementwise(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return elementwise(OpKind::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return elementwise(OpKind::Mul, a, b); }

  NodeId scalar_mul(NodeId a, double c) {
    Node n = unary(OpKind::ScalarMul, a);
    n.scalar = c;
    n.value = val(a);
    for (double& v : n.value.data) v *= c;
    return push(std::move(n));
  }

  NodeId sigmoid(NodeId a) {
    Node n = unary(OpKind::Sigmoid, a);
    n.value = val(a);
    for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(n));
  }
  NodeId relu(NodeId a) { return clamp_below(OpKind::Relu, a); }
  /// max(x, 0); identical function to relu, recorded as the hinge op.
  NodeId hinge(NodeId a) { return clamp_below(OpKind::Hinge, a); }

  NodeId leaky_relu(NodeId a, double alpha) {
    Node n = unary(OpKind::LeakyRelu, a);
    n.scalar = alpha;
    n.value = val(a);
    for (double& v : n.value.data)
      if (v < 0.0) v *= alpha;
    return push(std::move(n));
  }

  NodeId tanh_op(NodeId a) {
    Node n = unary(OpKind::Tanh, a);
    n.value = val(a);
    for (double& v : n.value.data) v = std::tanh(v);
    return push(std::move(n));
  }
  NodeId exp_op(NodeId a) {
    Node n = unary(OpKind::Exp, a);
    n.value = val(a);
    for (double& v : n.value.data) v = std::exp(v);
    return push(std::move(n));
  }
  NodeId log_op(NodeId a) {
    Node n = unary(OpKind::Log, a);
    n.value = val(a);
    for (double& v : n.value.data) {
      if (v <= 0.0) throw std::domain_error("log: non-positive value " + std::to_string(v));
      v = std::log(v);
    }
    return push(std::move(n));
  }

  NodeId softmax(NodeId a, Axis axis) {
    if (axis == Axis::All) throw std::invalid_argument("softmax: axis must be Rows or Cols");
    Node n = unary(OpKind::Softmax, a);
    n.axis = axis;
    n.value = val(a);
    Tensor& y = n.value;
    if (axis == Axis::Cols) {  // softmax within each row
      for (std::size_t i = 0; i < y.rows; ++i) {
        double mx = -1e300, s = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) mx = std::max(mx, y(i, j));
        for (std::size_t j = 0; j < y.cols; ++j) s += (y(i, j) = std::exp(y(i, j) - mx));
        for (std::size_t j = 0; j < y.cols; ++j) y(i, j) /= s;
      }
    } else {  // softmax within each column
      for (std::size_t j = 0; j < y.cols; ++j) {
        double mx = -1e300, s = 0.0;
        for (std::size_t i = 0; i < y.rows; ++i) mx = std::max(mx, y(i, j));
        for (std::size_t i = 0; i < y.rows; ++i) s += (y(i, j) = std::exp(y(i, j) - mx));
        for (std::size_t i = 0; i < y.rows; ++i) y(i, j) /= s;
      }
    }
    return push(std::move(n));
  }

  NodeId sum(NodeId a, Axis axis = Axis::All) { return reduction(OpKind::Sum, a, axis); }
  NodeId mean(NodeId a, Axis axis = Axis::All) { return reduction(OpKind::Mean, a, axis); }

  NodeId concat(const std::vector<NodeId>& parts, Axis axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    if (axis == Axis::All) throw std::invalid_argument("concat: axis must be Rows or Cols");
    Node n;
    n.op = OpKind::Concat;
    n.axis = axis;
    n.inputs = parts;
    std::size_t r = val(parts[0]).rows, c = val(parts[0]).cols;
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const Tensor& t = val(parts[k]);
      if (axis == Axis::Rows) {
        require_shape(t.cols == c, "concat", val(parts[0]), t);
        r += t.rows;
      } else {
        require_shape(t.rows == r, "concat", val(parts[0]), t);
        c += t.cols;
      }
    }
    n.value = Tensor(r, c);
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& t = val(p);
      if (axis == Axis::Rows) {
        std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + off * c);
        off += t.rows;
      } else {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < t.cols; ++j) n.value(i, off + j) = t(i, j);
        off += t.cols;
      }
    }
    return push(std::move(n));
  }

  NodeId row_slice(NodeId a, std::vector<std::size_t> idx) {
    const Tensor& A = val(a);
    for (std::size_t i : idx)
      if (i >= A.rows) throw std::out_of_range("row_slice: row index out of range");
    Node n = unary(OpKind::RowSlice, a);
    n.rows = std::move(idx);
    n.value = Tensor(n.rows.size(), A.cols);
    for (std::size_t k = 0; k < n.rows.size(); ++k)
      for (std::size_t j = 0; j < A.cols; ++j) n.value(k, j) = A(n.rows[k], j);
    return push(std::move(n));
  }

  NodeId transpose(NodeId a) {
    const Tensor& A = val(a);
    Node n = unary(OpKind::Transpose, a);
    n.value = Tensor(A.cols, A.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j) n.value(j, i) = A(i, j);
    return push(std::move(n));
  }

  /// sp * H where sp is a constant sparse operator. `sp` must outlive the tape.
  NodeId sparse_matmul(const SparseMatrix& sp, NodeId h) {
    const Tensor& H = val(h);
    if (sp.cols != H.rows)
      throw std::invalid_argument("sparse_matmul: incompatible shapes " +
                                  std::to_string(sp.rows) + "x" + std::to_string(sp.cols) +
                                  " and " + H.shape_str());
    Node n = unary(OpKind::SparseMatmul, h);
    n.sp = &sp;
    n.value = Tensor(sp.rows, H.cols);
    for (std::size_t i = 0; i < sp.rows; ++i)
      for (std::size_t k = sp.row_ptr[i]; k < sp.row_ptr[i + 1]; ++k) {
        const double w = sp.values[k];
        const std::size_t j = sp.col_idx[k];
        for (std::size_t c = 0; c < H.cols; ++c) n.value(i, c) += w * H(j, c);
      }
    return push(std::move(n));
  }

  NodeId squared_frobenius(NodeId a) {
    Node n = unary(OpKind::SquaredFrobenius, a);
    double s = 0.0;
    for (double v : val(a).data) s += v * v;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
  }

  /// Row-wise cosine similarity between equally shaped matrices -> n x 1.
  NodeId cosine_rows(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require_shape(A.same_shape(B), "cosine_rows", A, B);
    Node n = binary(OpKind::CosineRows, a, b);
    n.value = Tensor(A.rows, 1);
    for (std::size_t i = 0; i < A.rows; ++i) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t j = 0; j < A.cols; ++j) {
        dot += A(i, j) * B(i, j);
        na += A(i, j) * A(i, j);
        nb += B(i, j) * B(i, j);
      }
      n.value(i, 0) = dot / std::max(kCosEps, std::sqrt(na) * std::sqrt(nb));
    }
    return push(std::move(n));
  }

  /// Row-wise layer normalization without affine parameters.
  NodeId layer_norm(NodeId a, double eps = 1e-5) {
    Node n = unary(OpKind::LayerNorm, a);
    n.scalar = eps;
    const Tensor& A = val(a);
    n.value = Tensor(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      double mu = 0.0;
      for (std::size_t j = 0; j < A.cols; ++j) mu += A(i, j);
      mu /= static_cast<double>(A.cols);
      double var = 0.0;
      for (std::size_t j = 0; j < A.cols; ++j) var += (A(i, j) - mu) * (A(i, j) - mu);
      var /= static_cast<double>(A.cols);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < A.cols; ++j) n.value(i, j) = (A(i, j) - mu) * inv;
    }
    return push(std::move(n));
  }

  /// 1D adaptive average pooling per row; bin j averages input positions
  /// [floor(j*d/o), ceil((j+1)*d/o)).
  NodeId adaptive_avg_pool_1d(NodeId a, std::size_t d_out) {
    const Tensor& A = val(a);
    if (d_out < 1 || d_out > A.cols)
      throw std::invalid_argument("adaptive_avg_pool_1d: d_out " + std::to_string(d_out) +
                                  " out of range for width " + std::to_string(A.cols));
    Node n = unary(OpKind::AdaptivePool, a);
    n.pool_out = d_out;
    n.value = Tensor(A.rows, d_out);
    for (std::size_t j = 0; j < d_out; ++j) {
      auto [b, e] = pool_bin(A.cols, d_out, j);
      for (std::size_t i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (std::size_t k = b; k < e; ++k) s += A(i, k);
        n.value(i, j) = s / static_cast<double>(e - b);
      }
    }
    return push(std::move(n));
  }

  const Tensor& val(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool is_param(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).param; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss; returns gradients for parameter leaves.
  std::map<NodeId, Tensor> backward(NodeId loss) const {
    const Tensor& L = val(loss);
    if (!L.is_scalar())
      throw std::invalid_argument("backward: loss must be scalar, got " + L.shape_str());
    std::vector<Tensor> grad(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    auto accum = [&](NodeId id, const Tensor& g) {
      auto k = static_cast<std::size_t>(id);
      if (!has[k]) {
        grad[k] = g;
        has[k] = true;
      } else {
        for (std::size_t i = 0; i < g.data.size(); ++i) grad[k].data[i] += g.data[i];
      }
    };
    accum(loss, Tensor::scalar(1.0));
    for (std::int64_t idx = loss; idx >= 0; --idx) {
      auto k = static_cast<std::size_t>(idx);
      if (!has[k]) continue;
      backprop_node(static_cast<NodeId>(idx), grad[k], accum);
    }
    std::map<NodeId, Tensor> out;
    for (std::size_t k = 0; k < nodes_.size(); ++k)
      if (nodes_[k].param && has[k]) out[static_cast<NodeId>(k)] = std::move(grad[k]);
    for (std::size_t k = 0; k < nodes_.size(); ++k)
      if (nodes_[k].param && !out.count(static_cast<NodeId>(k)))
        out[static_cast<NodeId>(k)] = Tensor(nodes_[k].value.rows, nodes_[k].value.cols);
    return out;
  }

  static std::pair<std::size_t, std::size_t> pool_bin(std::size_t d, std::size_t o,
                                                      std::size_t j) {
    std::size_t b = (j * d) / o;
    std::size_t e = ((j + 1) * d + o - 1) / o;
    return {b, e};
  }

  static constexpr double kCosEps = 1e-12;

 private:
  std::vector<Node> nodes_;

  NodeId push(Node n) {
    if (!n.value.all_finite() && n.op != OpKind::Leaf)
      non_finite_ = true;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

 public:
  /// True once any op produced a non-finite forward value.
  bool saw_non_finite() const { return non_finite_; }

 private:
  bool non_finite_ = false;

  Node unary(OpKind op, NodeId a) {
    Node n;
    n.op = op;
    n.inputs = {a};
    return n;
  }
  Node binary(OpKind op, NodeId a, NodeId b) {
    Node n;
    n.op = op;
    n.inputs = {a, b};
    return n;
  }

  NodeId clamp_below(OpKind kind, NodeId a) {
    Node n = unary(kind, a);
    n.value = val(a);
    for (double& v : n.value.data) v = std::max(0.0, v);
    return push(std::move(n));
  }

  NodeId elementwise(OpKind op, NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Node n = binary(op, a, b);
    switch (op) {
      case OpKind::Add:
        n.value = detail::broadcast_binary(A, B, "add", [](double x, double y) { return x + y; });
        break;
      case OpKind::Sub:
        n.value = detail::broadcast_binary(A, B, "sub", [](double x, double y) { return x - y; });
        break;
      case OpKind::Mul:
        n.value = detail::broadcast_binary(A, B, "mul", [](double x, double y) { return x * y; });
        break;
      default:
        throw std::logic_error("elementwise: bad op");
    }
    return push(std::move(n));
  }

  NodeId reduction(OpKind op, NodeId a, Axis axis) {
    const Tensor& A = val(a);
    Node n = unary(op, a);
    n.axis = axis;
    const bool avg = (op == OpKind::Mean);
    if (axis == Axis::All) {
      double s = 0.0;
      for (double v : A.data) s += v;
      n.value = Tensor::scalar(avg ? s / static_cast<double>(A.size()) : s);
    } else if (axis == Axis::Rows) {  // collapse rows -> 1 x c
      n.value = Tensor(1, A.cols);
      for (std::size_t j = 0; j < A.cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < A.rows; ++i) s += A(i, j);
        n.value(0, j) = avg ? s / static_cast<double>(A.rows) : s;
      }
    } else {  // collapse cols -> r x 1
      n.value = Tensor(A.rows, 1);
      for (std::size_t i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols; ++j) s += A(i, j);
        n.value(i, 0) = avg ? s / static_cast<double>(A.cols) : s;
      }
    }
    return push(std::move(n));
  }

  template <typename Accum>
  void backprop_node(NodeId id, const Tensor& g, Accum&& accum) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case OpKind::Leaf:
        break;
      case OpKind::Matmul: {
        const Tensor& A = val(n.inputs[0]);
        const Tensor& B = val(n.inputs[1]);
        Tensor ga(A.rows, A.cols), gb(B.rows, B.cols);
        ga.map().noalias() = g.map() * B.map().transpose();
        gb.map().noalias() = A.map().transpose() * g.map();
        accum(n.inputs[0], ga);
        accum(n.inputs[1], gb);
        break;
      }
      case OpKind::Add: {
        const Tensor& A = val(n.inputs[0]);
        const Tensor& B = val(n.inputs[1]);
        accum(n.inputs[0], detail::reduce_to(g, A.rows, A.cols));
        accum(n.inputs[1], detail::reduce_to(g, B.rows, B.cols));
        break;
      }
      case OpKind::Sub: {
        const Tensor& A = val(n.inputs[0]);
        const Tensor& B = val(n.inputs[1]);
        accum(n.inputs[0], detail::reduce_to(g, A.rows, A.cols));
        Tensor neg = g;
        for (double& v : neg.data) v = -v;
        accum(n.inputs[1], detail::reduce_to(neg, B.rows, B.cols));
        break;
      }
      case OpKind::Mul: {
        const Tensor& A = val(n.inputs[0]);
        const Tensor& B = val(n.inputs[1]);
        Tensor ga(g.rows, g.cols), gb(g.rows, g.cols);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < g.cols; ++j) {
            ga(i, j) = g(i, j) * B(B.rows == 1 ? 0 : i, B.cols == 1 ? 0 : j);
            gb(i, j) = g(i, j) * A(A.rows == 1 ? 0 : i, A.cols == 1 ? 0 : j);
          }
        accum(n.inputs[0], detail::reduce_to(ga, A.rows, A.cols));
        accum(n.inputs[1], detail::reduce_to(gb, B.rows, B.cols));
        break;
      }
      case OpKind::ScalarMul: {
        Tensor ga = g;
        for (double& v : ga.data) v *= n.scalar;
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Sigmoid: {
        Tensor ga = g;
        for (std::size_t k = 0; k < ga.data.size(); ++k) {
          const double y = n.value.data[k];
          ga.data[k] *= y * (1.0 - y);
        }
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Relu:
      case OpKind::Hinge: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga = g;
        for (std::size_t k = 0; k < ga.data.size(); ++k)
          if (X.data[k] <= 0.0) ga.data[k] = 0.0;  // subgradient 0 at the kink
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::LeakyRelu: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga = g;
        for (std::size_t k = 0; k < ga.data.size(); ++k)
          if (X.data[k] <= 0.0) ga.data[k] *= n.scalar;
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Tanh: {
        Tensor ga = g;
        for (std::size_t k = 0; k < ga.data.size(); ++k)
          ga.data[k] *= 1.0 - n.value.data[k] * n.value.data[k];
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Exp: {
        Tensor ga = g;
        for (std::size_t k = 0; k < ga.data.size(); ++k) ga.data[k] *= n.value.data[k];
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Log: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga = g;
        for (std::size_t k = 0; k < ga.data.size(); ++k) ga.data[k] /= X.data[k];
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Softmax: {
        const Tensor& Y = n.value;
        Tensor ga(Y.rows, Y.cols);
        if (n.axis == Axis::Cols) {
          for (std::size_t i = 0; i < Y.rows; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < Y.cols; ++j) dot += g(i, j) * Y(i, j);
            for (std::size_t j = 0; j < Y.cols; ++j) ga(i, j) = Y(i, j) * (g(i, j) - dot);
          }
        } else {
          for (std::size_t j = 0; j < Y.cols; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < Y.rows; ++i) dot += g(i, j) * Y(i, j);
            for (std::size_t i = 0; i < Y.rows; ++i) ga(i, j) = Y(i, j) * (g(i, j) - dot);
          }
        }
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga(X.rows, X.cols);
        double denom = 1.0;
        if (n.op == OpKind::Mean) {
          if (n.axis == Axis::All)
            denom = static_cast<double>(X.size());
          else if (n.axis == Axis::Rows)
            denom = static_cast<double>(X.rows);
          else
            denom = static_cast<double>(X.cols);
        }
        for (std::size_t i = 0; i < X.rows; ++i)
          for (std::size_t j = 0; j < X.cols; ++j) {
            double gv;
            if (n.axis == Axis::All)
              gv = g(0, 0);
            else if (n.axis == Axis::Rows)
              gv = g(0, j);
            else
              gv = g(i, 0);
            ga(i, j) = gv / denom;
          }
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Concat: {
        std::size_t off = 0;
        for (NodeId p : n.inputs) {
          const Tensor& t = val(p);
          Tensor gp(t.rows, t.cols);
          if (n.axis == Axis::Rows) {
            for (std::size_t i = 0; i < t.rows; ++i)
              for (std::size_t j = 0; j < t.cols; ++j) gp(i, j) = g(off + i, j);
            off += t.rows;
          } else {
            for (std::size_t i = 0; i < t.rows; ++i)
              for (std::size_t j = 0; j < t.cols; ++j) gp(i, j) = g(i, off + j);
            off += t.cols;
          }
          accum(p, gp);
        }
        break;
      }
      case OpKind::RowSlice: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga(X.rows, X.cols);
        for (std::size_t k = 0; k < n.rows.size(); ++k)
          for (std::size_t j = 0; j < X.cols; ++j) ga(n.rows[k], j) += g(k, j);
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::Transpose: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga(X.rows, X.cols);
        for (std::size_t i = 0; i < X.rows; ++i)
          for (std::size_t j = 0; j < X.cols; ++j) ga(i, j) = g(j, i);
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::SparseMatmul: {
        const Tensor& H = val(n.inputs[0]);
        Tensor ga(H.rows, H.cols);
        const SparseMatrix& sp = *n.sp;
        for (std::size_t i = 0; i < sp.rows; ++i)
          for (std::size_t k = sp.row_ptr[i]; k < sp.row_ptr[i + 1]; ++k) {
            const double w = sp.values[k];
            const std::size_t j = sp.col_idx[k];
            for (std::size_t c = 0; c < H.cols; ++c) ga(j, c) += w * g(i, c);
          }
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::SquaredFrobenius: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga = X;
        for (double& v : ga.data) v *= 2.0 * g(0, 0);
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::CosineRows: {
        const Tensor& A = val(n.inputs[0]);
        const Tensor& B = val(n.inputs[1]);
        Tensor ga(A.rows, A.cols), gb(B.rows, B.cols);
        for (std::size_t i = 0; i < A.rows; ++i) {
          double dot = 0.0, na2 = 0.0, nb2 = 0.0;
          for (std::size_t j = 0; j < A.cols; ++j) {
            dot += A(i, j) * B(i, j);
            na2 += A(i, j) * A(i, j);
            nb2 += B(i, j) * B(i, j);
          }
          const double na = std::sqrt(na2), nb = std::sqrt(nb2);
          const double gi = g(i, 0);
          if (na * nb < kCosEps) {
            for (std::size_t j = 0; j < A.cols; ++j) {
              ga(i, j) = gi * B(i, j) / kCosEps;
              gb(i, j) = gi * A(i, j) / kCosEps;
            }
          } else {
            const double c = dot / (na * nb);
            for (std::size_t j = 0; j < A.cols; ++j) {
              ga(i, j) = gi * (B(i, j) / (na * nb) - c * A(i, j) / na2);
              gb(i, j) = gi * (A(i, j) / (na * nb) - c * B(i, j) / nb2);
            }
          }
        }
        accum(n.inputs[0], ga);
        accum(n.inputs[1], gb);
        break;
      }
      case OpKind::LayerNorm: {
        const Tensor& X = val(n.inputs[0]);
        const Tensor& Y = n.value;
        Tensor ga(X.rows, X.cols);
        const double d = static_cast<double>(X.cols);
        for (std::size_t i = 0; i < X.rows; ++i) {
          double mu = 0.0;
          for (std::size_t j = 0; j < X.cols; ++j) mu += X(i, j);
          mu /= d;
          double var = 0.0;
          for (std::size_t j = 0; j < X.cols; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
          var /= d;
          const double inv = 1.0 / std::sqrt(var + n.scalar);
          double gmean = 0.0, gydot = 0.0;
          for (std::size_t j = 0; j < X.cols; ++j) {
            gmean += g(i, j);
            gydot += g(i, j) * Y(i, j);
          }
          gmean /= d;
          gydot /= d;
          for (std::size_t j = 0; j < X.cols; ++j)
            ga(i, j) = inv * (g(i, j) - gmean - Y(i, j) * gydot);
        }
        accum(n.inputs[0], ga);
        break;
      }
      case OpKind::AdaptivePool: {
        const Tensor& X = val(n.inputs[0]);
        Tensor ga(X.rows, X.cols);
        for (std::size_t j = 0; j < n.pool_out; ++j) {
          auto [b, e] = pool_bin(X.cols, n.pool_out, j);
          const double inv = 1.0 / static_cast<double>(e - b);
          for (std::size_t i = 0; i < X.rows; ++i)
            for (std::size_t k = b; k < e; ++k) ga(i, k) += g(i, j) * inv;
        }
        accum(n.inputs[0], ga);
        break;
      }
    }
  }
};

}  // namespace lossbench

#endif  // LOSSBENCH_AUTODIFF_HPP
