#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cgan/errors.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

// Per-minibatch learning-rate and momentum schedules.
//   lr(n)       = max(lr_initial / lr_decay_factor^n, lr_floor)
//   momentum(n) = m0 + (m1 - m0) * min(n / ramp_steps, 1)
struct Schedule {
  double lr_initial = 0.1;
  double lr_floor = 1e-6;
  double lr_decay_factor = 1.00004;
  double momentum_initial = 0.5;
  double momentum_final = 0.7;
  std::uint64_t momentum_ramp_steps = 1;

  void validate() const {
    if (!(lr_decay_factor > 1.0)) throw ConfigError("lr_decay_factor must exceed 1");
    if (!(lr_floor <= lr_initial)) throw ConfigError("lr_floor must not exceed lr_initial");
    if (!(0.0 <= momentum_initial && momentum_initial <= momentum_final && momentum_final < 1.0)) {
      throw ConfigError("momentum must satisfy 0 <= initial <= final < 1");
    }
    if (momentum_ramp_steps == 0) throw ConfigError("momentum_ramp_steps must be positive");
  }

  double lr(std::uint64_t step) const {
    return std::max(lr_initial / std::pow(lr_decay_factor, static_cast<double>(step)), lr_floor);
  }

  double momentum(std::uint64_t step) const {
    const double ramp = std::min(static_cast<double>(step) / static_cast<double>(momentum_ramp_steps), 1.0);
    return momentum_initial + (momentum_final - momentum_initial) * ramp;
  }
};

// Classical momentum: v <- momentum * v - lr * g; theta <- theta + v.
// All gradients are checked before any parameter is touched.
template <typename T>
void sgd_momentum_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
                       std::vector<Tensor<T>>& velocity, double lr, double momentum,
                       const std::vector<std::string>& names = {}) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw DimensionError("sgd: parameter, gradient and velocity counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
    if (grads[i].shape() != params[i].shape() || velocity[i].shape() != params[i].shape()) {
      throw DimensionError("sgd: shape mismatch for parameter " + name);
    }
    if (!grads[i].all_finite()) throw NumericError("sgd: non-finite gradient for parameter " + name);
  }
  const T mu = static_cast<T>(momentum);
  const T eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto v = velocity[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu * v[j] - eta * g[j];
      p[j] += v[j];
    }
  }
}

template <typename T>
std::vector<Tensor<T>> zeros_like(const std::vector<Tensor<T>>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape());
  return out;
}

}  // namespace cgan
