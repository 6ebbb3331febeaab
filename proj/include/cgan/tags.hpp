#pragma once

// Tag generation for word-vector generators: sample, decode each sample to
// its nearest concepts, and vote.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cgan/data.hpp"
#include "cgan/errors.hpp"
#include "cgan/nets.hpp"
#include "cgan/rng.hpp"

namespace cgan {

struct TagOptions {
  std::size_t n_samples = 100;
  std::size_t k_near = 20;
  std::size_t k_out = 10;
};

struct TagCount {
  std::size_t concept_id = 0;
  std::size_t count = 0;
};

// Votes over nearest-concept lists: the k_out most frequent concepts. Equal
// counts are ordered by summed list position (closer first), then by id.
inline std::vector<TagCount> vote_tags(const Tensor<double>& samples, const Tensor<double>& table,
                                       const TagOptions& opt) {
  std::vector<std::size_t> counts(table.rows(), 0), rank_sum(table.rows(), 0);
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const auto near = nearest_words(samples.row(r), table, opt.k_near);
    for (std::size_t pos = 0; pos < near.size(); ++pos) {
      ++counts[near[pos]];
      rank_sum[near[pos]] += pos;
    }
  }
  std::vector<std::size_t> ids(table.rows());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return rank_sum[a] < rank_sum[b];
  });
  std::vector<TagCount> out;
  for (std::size_t i = 0; i < std::min(opt.k_out, ids.size()); ++i) out.push_back({ids[i], counts[ids[i]]});
  return out;
}

// n_samples generator outputs conditioned on one feature vector.
template <typename T>
Tensor<double> sample_for_feature(const Net<T>& gen, std::span<const double> feature, std::size_t n, RngStream& rng) {
  const NetSpec& s = gen.spec();
  if (s.role != NetRole::generator || !s.noise || s.output_activation != Activation::linear) {
    throw ConfigError("tags: checkpoint is not a word-vector generator");
  }
  if (feature.size() != s.branch_b.input_width) {
    throw DimensionError("tags: feature has " + std::to_string(feature.size()) + " values, generator expects " +
                         std::to_string(s.branch_b.input_width));
  }
  Tensor<T> y({n, feature.size()});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < feature.size(); ++k) y(r, k) = static_cast<T>(feature[k]);
  }
  const auto z = sample_noise<T>(*s.noise, n, rng);
  return generate(gen, z, y, Mode::eval, rng).template cast<double>();
}

template <typename T>
std::vector<TagCount> top_tags_protocol(const Net<T>& gen, std::span<const double> feature, const Tensor<double>& table,
                                        RngStream& rng, const TagOptions& opt = {}) {
  if (opt.k_near > table.rows()) throw DomainError("tags: k_near exceeds the number of concepts");
  return vote_tags(sample_for_feature(gen, feature, opt.n_samples, rng), table, opt);
}

}  // namespace cgan
