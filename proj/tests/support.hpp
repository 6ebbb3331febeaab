#pragma once

// Test-only oracles. Nothing here calls into the code paths it is used to check.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cgan/rng.hpp"
#include "cgan/tensor.hpp"

namespace cgan::testing {

inline Tensor<double> random_tensor(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Central differences of a scalar function of one tensor.
inline Tensor<double> central_difference(const std::function<double(const Tensor<double>&)>& f,
                                         Tensor<double> x, double step) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double plus = f(x);
    x[i] = orig - step;
    const double minus = f(x);
    x[i] = orig;
    g[i] = (plus - minus) / (2.0 * step);
  }
  return g;
}

inline double weighted_sum(const Tensor<double>& y, const Tensor<double>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

inline double max_relative_error(const Tensor<double>& a, const Tensor<double>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Naive triple-loop x * w + b.
inline Tensor<double> naive_affine(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t batch = x.dim(0), in = w.dim(0), out = w.dim(1);
  Tensor<double> y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < out; ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[i * out + j];
      y[r * out + j] = s;
    }
  }
  return y;
}

// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace cgan::testing
