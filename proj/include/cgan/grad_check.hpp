#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cgan/rng.hpp"
#include "cgan/tape.hpp"

namespace cgan {

// A tensor whose gradient is checked. The objective must register exactly
// this tensor with Tape::parameter.
struct GradTarget {
  std::string name;
  Tensor<double>* tensor = nullptr;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // 0 checks every element; otherwise a seeded random subsample of this size.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t sample_seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-6;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  // Elements whose finite-difference stencil crossed a ReLU or maxout kink.
  std::size_t excluded = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::size_t excluded = 0;
  // True when the base point itself sits on a maxout tie.
  bool base_on_tie = false;
  bool passed = false;
  std::string failure;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central-difference check of a scalar objective built on a double tape.
// `objective(tape)` must be deterministic and return the scalar root.
template <typename Objective>
GradCheckReport grad_check(Objective&& objective, std::span<const GradTarget> targets,
                           const GradCheckOptions& options = {}) {
  GradCheckReport report;
  try {
    Tape<double> base;
    const auto root = objective(base);
    base.backward(root);
    const std::uint64_t base_pattern = base.activation_pattern();
    report.base_on_tie = base.min_maxout_margin() == 0.0;

    std::vector<Tensor<double>> analytic;
    analytic.reserve(targets.size());
    for (const auto& t : targets) analytic.push_back(base.grad_of(*t.tensor));

    auto evaluate = [&](std::uint64_t& pattern) {
      Tape<double> tape;
      const auto r = objective(tape);
      pattern = tape.activation_pattern();
      return tape.value(r)[0];
    };

    RngStream sampler(options.sample_seed);
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      auto& param = *targets[ti].tensor;
      TensorCheck tc;
      tc.name = targets[ti].name;

      std::vector<std::size_t> indices(param.size());
      std::iota(indices.begin(), indices.end(), std::size_t{0});
      if (options.max_elements_per_tensor > 0 && indices.size() > options.max_elements_per_tensor) {
        sampler.shuffle(indices);
        indices.resize(options.max_elements_per_tensor);
        std::sort(indices.begin(), indices.end());
      }

      for (std::size_t i : indices) {
        const double original = param[i];
        std::uint64_t plus_pattern = 0, minus_pattern = 0;
        param[i] = original + options.step;
        const double plus = evaluate(plus_pattern);
        param[i] = original - options.step;
        const double minus = evaluate(minus_pattern);
        param[i] = original;

        if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
          ++tc.excluded;
          continue;
        }
        const double numeric = (plus - minus) / (2.0 * options.step);
        const double err = relative_error(analytic[ti][i], numeric, options.denominator_floor);
        ++tc.checked;
        if (err > tc.max_rel_error || tc.checked == 1) {
          tc.max_rel_error = std::max(tc.max_rel_error, err);
          if (err >= tc.max_rel_error) {
            tc.worst_index = i;
            tc.worst_analytic = analytic[ti][i];
            tc.worst_numeric = numeric;
          }
        }
      }
      report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
      report.excluded += tc.excluded;
      report.tensors.push_back(std::move(tc));
    }
    report.passed = report.max_rel_error <= options.tolerance;
  } catch (const NumericError& e) {
    report.passed = false;
    report.failure = e.what();
  }
  return report;
}

}  // namespace cgan
