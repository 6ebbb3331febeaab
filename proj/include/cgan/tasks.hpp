#pragma once

// Named training tasks: architecture pairs and default training settings.

#include <string>
#include <string_view>
#include <utility>

#include "cgan/data.hpp"
#include "cgan/errors.hpp"
#include "cgan/nets.hpp"
#include "cgan/trainer.hpp"

namespace cgan {

enum class Task { mnist, toy_mixture, toy_embedding };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::mnist: return "mnist";
    case Task::toy_mixture: return "toy-mixture";
    case Task::toy_embedding: return "toy-embedding";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "mnist") return Task::mnist;
  if (s == "toy-mixture") return Task::toy_mixture;
  if (s == "toy-embedding") return Task::toy_embedding;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected mnist, toy-mixture or toy-embedding)");
}

// 2-D mixture: z(8, uniform) and a 4-way one-hot y feed ReLU branches, a
// ReLU joint layer and a linear 2-D output. The discriminator mirrors the
// published maxout layout at small widths.
inline std::pair<NetSpec, NetSpec> toy_mixture_specs(std::size_t classes = 4) {
  NetSpec g;
  g.role = NetRole::generator;
  g.branch_a = {8, 32, Activation::relu, std::nullopt};
  g.branch_b = {classes, 32, Activation::relu, std::nullopt};
  g.joint = BranchSpec{64, 64, Activation::relu, std::nullopt};
  g.output_width = 2;
  g.output_activation = Activation::linear;
  g.noise = NoisePrior{NoiseKind::uniform, 8};

  NetSpec d;
  d.role = NetRole::discriminator;
  d.branch_a = {2, 32, Activation::maxout, 3};
  d.branch_b = {classes, 16, Activation::maxout, 3};
  d.joint = BranchSpec{48, 32, Activation::maxout, 3};
  d.output_width = 1;
  d.output_activation = Activation::sigmoid;
  g.validate();
  d.validate();
  return {g, d};
}

// Word-vector layout at toy widths for a corpus.
inline std::pair<NetSpec, NetSpec> toy_embedding_specs(const CorpusSpec& corpus) {
  VectorModeWidths w;
  w.noise = 16;
  w.feature = corpus.feat_dim;
  w.wordvec = corpus.embed_dim;
  w.g_noise_hidden = 32;
  w.g_feature_hidden = 128;
  w.d_wordvec_hidden = 64;
  w.d_feature_hidden = 64;
  w.d_joint_units = 64;
  w.d_joint_pieces = 3;
  return vector_mode_specs(w);
}

inline std::pair<NetSpec, NetSpec> task_specs(Task t, const CorpusSpec& corpus = {}) {
  switch (t) {
    case Task::mnist: return {mnist_generator_spec(), mnist_discriminator_spec()};
    case Task::toy_mixture: return toy_mixture_specs();
    case Task::toy_embedding: return toy_embedding_specs(corpus);
  }
  throw ConfigError("unknown task");
}

// Training defaults per task. MNIST keeps the published settings; the toy
// tasks are tuned for short CPU runs.
inline GanConfig default_config(Task t) {
  GanConfig c;
  switch (t) {
    case Task::mnist:
      c.max_epochs = 100;
      c.eval_every = 500;
      break;
    case Task::toy_mixture:
      c.batch_size = 100;
      c.lr_initial = 0.02;
      c.dropout_rate = 0.0;
      c.generator_loss_variant = GeneratorLoss::nonsaturating;
      c.max_epochs = 60;
      break;
    case Task::toy_embedding:
      c.batch_size = 64;
      c.lr_initial = 0.01;
      c.dropout_rate = 0.0;
      c.generator_loss_variant = GeneratorLoss::nonsaturating;
      c.max_epochs = 100;
      break;
  }
  return c;
}

}  // namespace cgan
