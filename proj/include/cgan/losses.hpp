#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "cgan/errors.hpp"
#include "cgan/tape.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

// saturating: minimize mean log(1 - D(G(z|y)))
// nonsaturating: minimize -mean log D(G(z|y))
enum class GeneratorLoss { saturating, nonsaturating };

inline std::string_view to_string(GeneratorLoss v) {
  return v == GeneratorLoss::saturating ? "saturating" : "nonsaturating";
}

inline GeneratorLoss parse_generator_loss(std::string_view s) {
  if (s == "saturating") return GeneratorLoss::saturating;
  if (s == "nonsaturating") return GeneratorLoss::nonsaturating;
  throw ConfigError("unknown generator loss '" + std::string(s) + "'");
}

namespace detail {

template <typename T>
void require_open_unit(const Tensor<T>& p, std::string_view what) {
  if (p.size() == 0) throw DimensionError(std::string(what) + ": empty batch");
  for (T v : p.data()) {
    if (!(v > T(0) && v < T(1))) throw DomainError(std::string(what) + ": probabilities must lie in (0, 1)");
  }
}

template <typename T>
double mean_log(const Tensor<T>& p, bool complement) {
  double s = 0.0;
  for (T v : p.data()) s += complement ? std::log1p(-static_cast<double>(v)) : std::log(static_cast<double>(v));
  return s / static_cast<double>(p.size());
}

}  // namespace detail

// -mean log D(x|y) - mean log(1 - D(G(z|y)|y)), the negated value function
// the discriminator ascends. Probability inputs.
template <typename T>
double discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  detail::require_open_unit(d_real, "discriminator_loss");
  detail::require_open_unit(d_fake, "discriminator_loss");
  return -detail::mean_log(d_real, false) - detail::mean_log(d_fake, true);
}

template <typename T>
double generator_loss(const Tensor<T>& d_fake, GeneratorLoss variant) {
  detail::require_open_unit(d_fake, "generator_loss");
  return variant == GeneratorLoss::saturating ? detail::mean_log(d_fake, true) : -detail::mean_log(d_fake, false);
}

// Value function V(D, G) = mean log D(x|y) + mean log(1 - D(G(z|y)|y)).
template <typename T>
double value_function(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  return -discriminator_loss(d_real, d_fake);
}

// Stable tape forms on the discriminator's pre-sigmoid outputs:
//   -log sigmoid(a) = softplus(-a),  -log(1 - sigmoid(a)) = softplus(a).
template <typename T>
typename Tape<T>::Var discriminator_loss(Tape<T>& tape, typename Tape<T>::Var real_logits,
                                         typename Tape<T>::Var fake_logits) {
  return tape.add(tape.softplus_mean(real_logits, T(-1)), tape.softplus_mean(fake_logits, T(1)));
}

template <typename T>
typename Tape<T>::Var generator_loss(Tape<T>& tape, typename Tape<T>::Var fake_logits, GeneratorLoss variant) {
  if (variant == GeneratorLoss::saturating) return tape.scale(tape.softplus_mean(fake_logits, T(1)), T(-1));
  return tape.softplus_mean(fake_logits, T(-1));
}

}  // namespace cgan
