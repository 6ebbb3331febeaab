#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cgan/errors.hpp"
#include "cgan/rng.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

enum class Mode { train, eval };

enum class Primitive : std::uint8_t {
  constant,
  parameter,
  affine,
  relu,
  sigmoid,
  maxout,
  dropout,
  concat,
  add,
  scale,
  mean,
  softplus_mean,
};

inline std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::constant: return "constant";
    case Primitive::parameter: return "parameter";
    case Primitive::affine: return "affine";
    case Primitive::relu: return "relu";
    case Primitive::sigmoid: return "sigmoid";
    case Primitive::maxout: return "maxout";
    case Primitive::dropout: return "dropout";
    case Primitive::concat: return "concat";
    case Primitive::add: return "add";
    case Primitive::scale: return "scale";
    case Primitive::mean: return "mean";
    case Primitive::softplus_mean: return "softplus_mean";
  }
  return "unknown";
}

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ConstRowVectorMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatrixMap<T>(t.data().data() + offset, static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(cols));
}

template <typename T>
MatrixMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatrixMap<T>(t.data().data() + offset, static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
}

// log(1 + exp(v)) without overflow.
template <typename T>
T softplus(T v) {
  return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
}

// Logistic function clamped to the open interval (0, 1).
template <typename T>
T logistic(T v) {
  T s;
  if (v >= T(0)) {
    s = T(1) / (T(1) + std::exp(-v));
  } else {
    const T e = std::exp(v);
    s = e / (T(1) + e);
  }
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
  return std::clamp(s, lo, hi);
}

inline void hash_mix(std::uint64_t& h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

}  // namespace detail

// Record of one minibatch forward pass. Each call appends a node holding the
// primitive's output and whatever it needs for the reverse sweep (maxout
// winners, dropout masks). Parameters enter as non-owning leaves: they must
// outlive the tape and must not be modified while it is alive.
template <typename T>
class Tape {
 public:
  using Var = std::size_t;

  // When set, non-finite forward outputs throw NumericError naming the primitive.
  bool check_finite = true;

  Var constant(Tensor<T> value, bool requires_grad = false) {
    Node n = node(Primitive::constant);
    n.owned = std::move(value);
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  // Leaf bound to an external tensor. Frozen leaves receive no gradient.
  // Registering the same tensor again returns the existing leaf, so a
  // parameter used twice (real and fake passes) accumulates one gradient.
  Var parameter(const Tensor<T>& value, bool trainable = true) {
    if (const auto it = params_.find(&value); it != params_.end() && nodes_[it->second].needs_grad == trainable) {
      return it->second;
    }
    Node n = node(Primitive::parameter);
    n.external = &value;
    n.needs_grad = trainable;
    const Var v = push(std::move(n));
    params_[&value] = v;
    return v;
  }
  Var parameter(const Tensor<T>&&, bool = true) = delete;

  Var affine(Var x, Var w, Var b) {
    const auto& X = value(x);
    const auto& W = value(w);
    const auto& B = value(b);
    if (X.rank() != 2 || W.rank() != 2 || B.rank() != 1 || X.dim(1) != W.dim(0) || B.dim(0) != W.dim(1)) {
      throw DimensionError("affine: input " + shape_string(X.shape()) + ", weights " +
                           shape_string(W.shape()) + ", bias " + shape_string(B.shape()) + " do not conform");
    }
    const std::size_t batch = X.dim(0), in = W.dim(0), out = W.dim(1);
    Tensor<T> Y({batch, out});
    auto y = detail::as_matrix(Y, batch, out);
    y.noalias() = detail::as_matrix(X, batch, in) * detail::as_matrix(W, in, out);
    y.rowwise() += detail::ConstRowVectorMap<T>(B.data().data(), static_cast<Eigen::Index>(out));
    return push_op(Primitive::affine, {x, w, b}, std::move(Y));
  }

  Var relu(Var x) {
    const auto& X = value(x);
    Tensor<T> Y(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) {
      Y[i] = X[i] > T(0) ? X[i] : T(0);
      detail::hash_mix(pattern_, X[i] > T(0));
    }
    return push_op(Primitive::relu, {x}, std::move(Y));
  }

  Var sigmoid(Var x) {
    const auto& X = value(x);
    Tensor<T> Y(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) Y[i] = detail::logistic(X[i]);
    return push_op(Primitive::sigmoid, {x}, std::move(Y));
  }

  // weights [pieces, in, units], bias [pieces, units]. Ties go to the lowest piece.
  Var maxout(Var x, Var w, Var b) {
    const auto& X = value(x);
    const auto& W = value(w);
    const auto& B = value(b);
    if (W.rank() != 3 || W.dim(0) == 0) throw ConfigError("maxout: weights need shape [pieces>=1, in, units]");
    const std::size_t pieces = W.dim(0), in = W.dim(1), units = W.dim(2);
    if (X.rank() != 2 || X.dim(1) != in || B.rank() != 2 || B.dim(0) != pieces || B.dim(1) != units) {
      throw DimensionError("maxout: input " + shape_string(X.shape()) + ", weights " +
                           shape_string(W.shape()) + ", bias " + shape_string(B.shape()) + " do not conform");
    }
    const std::size_t batch = X.dim(0);
    const auto xm = detail::as_matrix(X, batch, in);
    Tensor<T> Y({batch, units});
    Tensor<T> second({batch, units}, -std::numeric_limits<T>::infinity());
    std::vector<std::uint32_t> winners(batch * units, 0);
    detail::RowMatrix<T> z(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(units));
    for (std::size_t k = 0; k < pieces; ++k) {
      z.noalias() = xm * detail::as_matrix(W, in, units, k * in * units);
      z.rowwise() += detail::ConstRowVectorMap<T>(B.data().data() + k * units, static_cast<Eigen::Index>(units));
      const T* zk = z.data();
      for (std::size_t i = 0; i < batch * units; ++i) {
        if (k == 0) {
          Y[i] = zk[i];
        } else if (zk[i] > Y[i]) {
          second[i] = Y[i];
          Y[i] = zk[i];
          winners[i] = static_cast<std::uint32_t>(k);
        } else if (zk[i] > second[i]) {
          second[i] = zk[i];
        }
      }
    }
    for (std::size_t i = 0; i < batch * units; ++i) {
      if (pieces > 1) min_maxout_margin_ = std::min<double>(min_maxout_margin_, Y[i] - second[i]);
      detail::hash_mix(pattern_, winners[i]);
    }
    Node n = node(Primitive::maxout);
    n.winners = std::move(winners);
    return push_op(std::move(n), {x, w, b}, std::move(Y));
  }

  // Inverted dropout: survivors are scaled by 1/(1-rate) in train mode; eval is the identity.
  Var dropout(Var x, double rate, Mode mode, RngStream& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1)");
    const auto& X = value(x);
    Tensor<T> Y = X;
    Node n = node(Primitive::dropout);
    if (mode == Mode::train && rate > 0.0) {
      const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
      n.mask = Tensor<T>(X.shape());
      for (std::size_t i = 0; i < X.size(); ++i) {
        n.mask[i] = rng.uniform() < rate ? T(0) : keep_scale;
        Y[i] *= n.mask[i];
      }
    }
    return push_op(std::move(n), {x}, std::move(Y));
  }

  // Dropout with a caller-supplied mask (already scaled); used to freeze masks.
  Var dropout_with_mask(Var x, const Tensor<T>& mask) {
    const auto& X = value(x);
    if (mask.shape() != X.shape()) throw DimensionError("dropout: mask shape does not match input");
    Tensor<T> Y = X;
    for (std::size_t i = 0; i < X.size(); ++i) Y[i] *= mask[i];
    Node n = node(Primitive::dropout);
    n.mask = mask;
    return push_op(std::move(n), {x}, std::move(Y));
  }

  Var concat(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0)) {
      throw DimensionError("concat: batch extents differ (" + shape_string(A.shape()) + " vs " +
                           shape_string(B.shape()) + ")");
    }
    const std::size_t batch = A.dim(0), n = A.dim(1), m = B.dim(1);
    Tensor<T> Y({batch, n + m});
    for (std::size_t r = 0; r < batch; ++r) {
      std::copy_n(A.row(r).begin(), n, Y.row(r).begin());
      std::copy_n(B.row(r).begin(), m, Y.row(r).begin() + static_cast<std::ptrdiff_t>(n));
    }
    return push_op(Primitive::concat, {a, b}, std::move(Y));
  }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape() != B.shape()) throw DimensionError("add: operand shapes differ");
    Tensor<T> Y = A;
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] += B[i];
    return push_op(Primitive::add, {a, b}, std::move(Y));
  }

  Var scale(Var x, T factor) {
    Tensor<T> Y = value(x);
    for (auto& v : Y.data()) v *= factor;
    Node n = node(Primitive::scale);
    n.scalar = factor;
    return push_op(std::move(n), {x}, std::move(Y));
  }

  Var mean(Var x) {
    const auto& X = value(x);
    if (X.size() == 0) throw DimensionError("mean: empty input");
    T sum = 0;
    for (T v : X.data()) sum += v;
    return push_op(Primitive::mean, {x}, Tensor<T>({1}, std::vector<T>{sum / static_cast<T>(X.size())}));
  }

  // mean(softplus(sign * x)); with sign=-1 this is -mean(log sigmoid(x)),
  // with sign=+1 it is -mean(log(1 - sigmoid(x))).
  Var softplus_mean(Var x, T sign) {
    const auto& X = value(x);
    if (X.size() == 0) throw DimensionError("softplus_mean: empty input");
    T sum = 0;
    for (T v : X.data()) sum += detail::softplus(sign * v);
    Node n = node(Primitive::softplus_mean);
    n.scalar = sign;
    return push_op(std::move(n), {x}, Tensor<T>({1}, std::vector<T>{sum / static_cast<T>(X.size())}));
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v);
    return n.external ? *n.external : n.owned;
  }

  Primitive kind(Var v) const { return nodes_.at(v).kind; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root seeded with 1.
  void backward(Var root) {
    if (value(root).size() != 1) throw DimensionError("backward: root is not a scalar");
    backward(root, Tensor<T>(value(root).shape(), T(1)));
  }

  void backward(Var root, Tensor<T> seed) {
    if (seed.shape() != value(root).shape()) throw DimensionError("backward: seed shape mismatch");
    grads_.assign(nodes_.size(), Tensor<T>());
    trace_.clear();
    grads_[root] = std::move(seed);
    for (Var v = root + 1; v-- > 0;) {
      if (grads_[v].shape().empty() || !nodes_[v].needs_grad) continue;
      trace_.push_back(v);
      propagate(v);
    }
  }

  // Gradient of the last backward root w.r.t. v; zeros when none reached v.
  Tensor<T> grad(Var v) const {
    if (v < grads_.size() && !grads_[v].shape().empty()) return grads_[v];
    return Tensor<T>(value(v).shape());
  }

  Tensor<T> grad_of(const Tensor<T>& param) const {
    const auto it = params_.find(&param);
    if (it == params_.end()) throw Error("tape: tensor was not registered as a parameter");
    return grad(it->second);
  }

  // Nodes visited by the last backward sweep, in visit order.
  const std::vector<Var>& backward_trace() const { return trace_; }

  // Smallest gap between the best and second-best maxout piece seen so far.
  double min_maxout_margin() const { return min_maxout_margin_; }

  // Hash of every ReLU sign and maxout winner; changes when a kink is crossed.
  std::uint64_t activation_pattern() const { return pattern_; }

  const std::vector<std::uint32_t>& maxout_winners(Var v) const { return nodes_.at(v).winners; }

  // Test hook: scales every gradient produced by the given primitive.
  void corrupt_backward(Primitive p, T factor) { fault_ = std::make_pair(p, factor); }

 private:
  struct Node {
    Primitive kind = Primitive::constant;
    std::array<Var, 3> inputs{};
    std::uint8_t n_inputs = 0;
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    bool needs_grad = false;
    std::vector<std::uint32_t> winners;
    Tensor<T> mask;
    T scalar = 0;
  };

  static Node node(Primitive p) {
    Node n;
    n.kind = p;
    return n;
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Var push_op(Primitive p, std::initializer_list<Var> inputs, Tensor<T> out) {
    return push_op(node(p), inputs, std::move(out));
  }

  Var push_op(Node n, std::initializer_list<Var> inputs, Tensor<T> out) {
    if (check_finite && !out.all_finite()) {
      throw NumericError("non-finite value produced by " + std::string(primitive_name(n.kind)));
    }
    for (Var in : inputs) {
      n.inputs[n.n_inputs++] = in;
      n.needs_grad = n.needs_grad || nodes_.at(in).needs_grad;
    }
    n.owned = std::move(out);
    return push(std::move(n));
  }

  bool wants(Var v) const { return nodes_[v].needs_grad; }

  void accumulate(Primitive from, Var v, Tensor<T> g) {
    if (fault_ && fault_->first == from) {
      for (auto& e : g.data()) e *= fault_->second;
    }
    auto& slot = grads_[v];
    if (slot.shape().empty()) {
      slot = std::move(g);
    } else {
      for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
    }
  }

  void propagate(Var v) {
    const Node& n = nodes_[v];
    const Tensor<T>& G = grads_[v];
    switch (n.kind) {
      case Primitive::constant:
      case Primitive::parameter:
        break;
      case Primitive::affine: {
        const Var x = n.inputs[0], w = n.inputs[1], b = n.inputs[2];
        const auto& X = value(x);
        const auto& W = value(w);
        const std::size_t batch = X.dim(0), in = W.dim(0), out = W.dim(1);
        const auto g = detail::as_matrix(G, batch, out);
        if (wants(x)) {
          Tensor<T> dX({batch, in});
          detail::as_matrix(dX, batch, in).noalias() = g * detail::as_matrix(W, in, out).transpose();
          accumulate(n.kind, x, std::move(dX));
        }
        if (wants(w)) {
          Tensor<T> dW({in, out});
          detail::as_matrix(dW, in, out).noalias() = detail::as_matrix(X, batch, in).transpose() * g;
          accumulate(n.kind, w, std::move(dW));
        }
        if (wants(b)) accumulate(n.kind, b, column_sums(G, batch, out));
        break;
      }
      case Primitive::relu: {
        const Var x = n.inputs[0];
        if (!wants(x)) break;
        const auto& X = value(x);
        Tensor<T> dX(X.shape());
        for (std::size_t i = 0; i < X.size(); ++i) dX[i] = X[i] > T(0) ? G[i] : T(0);
        accumulate(n.kind, x, std::move(dX));
        break;
      }
      case Primitive::sigmoid: {
        const Var x = n.inputs[0];
        if (!wants(x)) break;
        Tensor<T> dX(n.owned.shape());
        for (std::size_t i = 0; i < dX.size(); ++i) {
          const T s = n.owned[i];
          dX[i] = G[i] * s * (T(1) - s);
        }
        accumulate(n.kind, x, std::move(dX));
        break;
      }
      case Primitive::maxout: {
        const Var x = n.inputs[0], w = n.inputs[1], b = n.inputs[2];
        const auto& X = value(x);
        const auto& W = value(w);
        const std::size_t pieces = W.dim(0), in = W.dim(1), units = W.dim(2), batch = X.dim(0);
        Tensor<T> dX({batch, in});
        Tensor<T> dW(W.shape());
        Tensor<T> dB({pieces, units});
        Tensor<T> routed({batch, units});
        for (std::size_t k = 0; k < pieces; ++k) {
          bool any = false;
          for (std::size_t i = 0; i < batch * units; ++i) {
            const bool win = n.winners[i] == k;
            routed[i] = win ? G[i] : T(0);
            any = any || win;
          }
          if (!any) continue;
          const auto r = detail::as_matrix(routed, batch, units);
          if (wants(x)) {
            detail::as_matrix(dX, batch, in).noalias() +=
                r * detail::as_matrix(W, in, units, k * in * units).transpose();
          }
          if (wants(w)) {
            detail::as_matrix(dW, in, units, k * in * units).noalias() =
                detail::as_matrix(X, batch, in).transpose() * r;
          }
          if (wants(b)) {
            const Tensor<T> db = column_sums(routed, batch, units);
            std::copy(db.data().begin(), db.data().end(), dB.data().begin() + static_cast<std::ptrdiff_t>(k * units));
          }
        }
        if (wants(x)) accumulate(n.kind, x, std::move(dX));
        if (wants(w)) accumulate(n.kind, w, std::move(dW));
        if (wants(b)) accumulate(n.kind, b, std::move(dB));
        break;
      }
      case Primitive::dropout: {
        const Var x = n.inputs[0];
        if (!wants(x)) break;
        Tensor<T> dX = G;
        if (!n.mask.empty()) {
          for (std::size_t i = 0; i < dX.size(); ++i) dX[i] *= n.mask[i];
        }
        accumulate(n.kind, x, std::move(dX));
        break;
      }
      case Primitive::concat: {
        const Var a = n.inputs[0], b = n.inputs[1];
        const std::size_t batch = G.dim(0), width_a = value(a).dim(1), width_b = value(b).dim(1);
        if (wants(a)) {
          Tensor<T> dA({batch, width_a});
          for (std::size_t r = 0; r < batch; ++r) std::copy_n(G.row(r).begin(), width_a, dA.row(r).begin());
          accumulate(n.kind, a, std::move(dA));
        }
        if (wants(b)) {
          Tensor<T> dB({batch, width_b});
          for (std::size_t r = 0; r < batch; ++r) {
            std::copy_n(G.row(r).begin() + static_cast<std::ptrdiff_t>(width_a), width_b, dB.row(r).begin());
          }
          accumulate(n.kind, b, std::move(dB));
        }
        break;
      }
      case Primitive::add: {
        for (std::size_t i = 0; i < 2; ++i) {
          if (wants(n.inputs[i])) accumulate(n.kind, n.inputs[i], G);
        }
        break;
      }
      case Primitive::scale: {
        const Var x = n.inputs[0];
        if (!wants(x)) break;
        Tensor<T> dX = G;
        for (auto& v : dX.data()) v *= n.scalar;
        accumulate(n.kind, x, std::move(dX));
        break;
      }
      case Primitive::mean: {
        const Var x = n.inputs[0];
        if (!wants(x)) break;
        const auto& X = value(x);
        accumulate(n.kind, x, Tensor<T>(X.shape(), G[0] / static_cast<T>(X.size())));
        break;
      }
      case Primitive::softplus_mean: {
        const Var x = n.inputs[0];
        if (!wants(x)) break;
        const auto& X = value(x);
        const T scale = G[0] / static_cast<T>(X.size());
        Tensor<T> dX(X.shape());
        for (std::size_t i = 0; i < X.size(); ++i) dX[i] = scale * n.scalar * detail::logistic(n.scalar * X[i]);
        accumulate(n.kind, x, std::move(dX));
        break;
      }
    }
  }

  static Tensor<T> column_sums(const Tensor<T>& m, std::size_t rows, std::size_t cols) {
    Tensor<T> out({cols});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[c] += m[r * cols + c];
    }
    return out;
  }

  std::deque<Node> nodes_;  // deque: value() references survive later pushes
  std::vector<Tensor<T>> grads_;
  std::vector<Var> trace_;
  std::map<const Tensor<T>*, Var> params_;
  double min_maxout_margin_ = std::numeric_limits<double>::infinity();
  std::uint64_t pattern_ = 0;
  std::optional<std::pair<Primitive, T>> fault_;
};

}  // namespace cgan
