#pragma once

// Pinned reference runs for the desk-scale checks, and the measurements taken
// on their trained generators.

#include <cstddef>
#include <string>

#include "cgan/data.hpp"
#include "cgan/parzen.hpp"
#include "cgan/rng.hpp"
#include "cgan/tags.hpp"
#include "cgan/tasks.hpp"
#include "cgan/trainer.hpp"

namespace cgan::reference {

inline constexpr std::uint64_t kMixtureDataSeed = 1;
inline constexpr std::uint64_t kMixtureTrainSeed = 7;
inline constexpr std::uint64_t kCorpusSeed = 1;
inline constexpr std::uint64_t kEmbeddingTrainSeed = 0;
inline constexpr std::uint64_t kMnistTrainSeed = 0;
inline constexpr std::uint64_t kMeasureSeed = 99;

inline constexpr double kConditioningGate = 0.90;
inline constexpr double kTagRecoveryGate = 0.80;
inline constexpr double kParzenMarginGate = 50.0;

// Fraction of generated points, per_class for each class, whose nearest true
// mixture mean is the conditioning class.
template <typename T>
double conditioning_accuracy(const Net<T>& gen, const MixtureSpec& spec, std::size_t per_class, RngStream& rng) {
  const std::size_t classes = spec.means.size();
  std::size_t hits = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    Tensor<T> y({per_class, classes});
    for (std::size_t r = 0; r < per_class; ++r) y(r, c) = T(1);
    const auto z = sample_noise<T>(*gen.spec().noise, per_class, rng);
    const auto x = generate(gen, z, y, Mode::eval, rng);
    for (std::size_t r = 0; r < per_class; ++r) {
      hits += nearest_mean(spec, static_cast<double>(x(r, 0)), static_cast<double>(x(r, 1))) == c;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(per_class * classes);
}

// Fraction of concepts whose prototype feature yields a tag list containing
// the concept itself.
template <typename T>
double tag_recovery(const Net<T>& gen, const EmbeddingCorpus& corpus, RngStream& rng, const TagOptions& opt = {}) {
  const std::size_t n = corpus.prototypes.rows();
  std::size_t hits = 0;
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& t : top_tags_protocol(gen, corpus.prototypes.row(c), corpus.embeddings, rng, opt)) {
      if (t.concept_id == c) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

inline MixtureSpec mixture_spec() {
  MixtureSpec s;
  s.seed = kMixtureDataSeed;
  return s;
}

inline CorpusSpec corpus_spec() {
  CorpusSpec s;
  s.seed = kCorpusSeed;
  return s;
}

// The trainer keeps a reference to data; it must outlive the trainer.
inline Trainer mixture_trainer(const LabeledDataset& data) {
  auto cfg = default_config(Task::toy_mixture);
  cfg.seed = kMixtureTrainSeed;
  const auto [g, d] = toy_mixture_specs();
  return make_trainer(g, d, cfg, data);
}

// MNIST subset run: published settings except where noted in the README.
inline GanConfig mnist_config() {
  auto cfg = default_config(Task::mnist);
  cfg.seed = kMnistTrainSeed;
  cfg.generator_loss_variant = GeneratorLoss::nonsaturating;
  cfg.lr_initial = 0.003;
  cfg.max_epochs = 1000000;
  cfg.max_steps = 20000;
  cfg.eval_every = 500;
  return cfg;
}

// As above, corpus must outlive the trainer.
inline Trainer embedding_trainer(const EmbeddingCorpus& corpus) {
  auto cfg = default_config(Task::toy_embedding);
  cfg.seed = kEmbeddingTrainSeed;
  const auto [g, d] = toy_embedding_specs(corpus.spec);
  return make_trainer(g, d, cfg, corpus.data);
}

}  // namespace cgan::reference
