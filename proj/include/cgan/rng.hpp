#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cgan/errors.hpp"

namespace cgan {

// Seeded random stream. The engine is std::mt19937_64 (fully specified by
// the standard); all conversions to real numbers are done here rather than
// through <random> distributions, whose algorithms are implementation-defined.
class RngStream {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  // Independent stream derived from this stream's seed and a tag.
  static RngStream derive(std::uint64_t seed, std::uint64_t tag) {
    return RngStream(splitmix64(seed ^ splitmix64(tag + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two draws, keeps no cached value.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw DomainError("rng: below(0)");
    const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  template <typename Index>
  void shuffle(std::vector<Index>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Full engine state as text, for checkpoints.
  std::string serialize() const {
    std::ostringstream os;
    os << kAlgorithm << ' ' << seed_ << ' ' << draws_ << ' ' << engine_;
    return os.str();
  }

  static RngStream deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string algorithm;
    RngStream rng;
    is >> algorithm >> rng.seed_ >> rng.draws_ >> rng.engine_;
    if (!is || algorithm != kAlgorithm) throw FormatError("rng: cannot restore stream state");
    return rng;
  }

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.seed_ == b.seed_ && a.draws_ == b.draws_ && a.engine_ == b.engine_;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace cgan
