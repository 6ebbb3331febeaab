#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cgan/grad_check.hpp"
#include "cgan/losses.hpp"
#include "cgan/nets.hpp"

namespace cgan {

// Small-width versions of the published architectures, keeping each one's
// layer types, piece counts and output activation.
inline std::pair<NetSpec, NetSpec> toy_image_mode_specs() {
  NetSpec g = mnist_generator_spec();
  g.branch_a = {6, 8, Activation::relu, std::nullopt};
  g.branch_b = {4, 8, Activation::relu, std::nullopt};
  g.joint = BranchSpec{16, 12, Activation::relu, std::nullopt};
  g.output_width = 10;
  g.noise = NoisePrior{NoiseKind::uniform, 6};

  NetSpec d = mnist_discriminator_spec();
  d.branch_a = {10, 8, Activation::maxout, 5};
  d.branch_b = {4, 5, Activation::maxout, 5};
  d.joint = BranchSpec{13, 8, Activation::maxout, 4};
  g.validate();
  d.validate();
  return {g, d};
}

inline VectorModeWidths toy_vector_widths() {
  VectorModeWidths w;
  w.noise = 6;
  w.feature = 16;
  w.wordvec = 8;
  w.g_noise_hidden = 10;
  w.g_feature_hidden = 12;
  w.d_wordvec_hidden = 10;
  w.d_feature_hidden = 12;
  w.d_joint_units = 12;
  w.d_joint_pieces = 3;
  return w;
}

struct SuiteCase {
  std::string name;
  GradCheckReport report;
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  std::size_t batch = 4;
  GradCheckOptions check;
  // Negative control: corrupt one primitive's backward by this factor.
  std::optional<std::pair<Primitive, double>> fault;
};

// Gradient checks of the discriminator loss w.r.t. D's parameters and of both
// generator losses w.r.t. G's parameters through a frozen D, in train mode
// with dropout masks frozen by reseeding the mask stream per evaluation.
inline std::vector<SuiteCase> run_architecture_suite(const std::string& label, const NetSpec& gen_spec,
                                                     const NetSpec& disc_spec, const SuiteOptions& opt) {
  RngStream init(opt.seed);
  auto gen = init_parameters<double>(gen_spec, init);
  auto disc = init_parameters<double>(disc_spec, init);
  // Random biases so every unit is exercised away from zero.
  for (auto* net : {&gen, &disc}) {
    for (std::size_t i = 0; i < net->names().size(); ++i) {
      if (net->names()[i].ends_with(".bias")) {
        for (auto& v : net->parameters()[i].data()) v = init.uniform(-0.5, 0.5);
      }
    }
  }

  const std::size_t batch = opt.batch;
  const std::size_t cond = gen_spec.branch_b.input_width;
  Tensor<double> y({batch, cond});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < cond; ++c) y(r, c) = cond <= 10 ? (c == r % cond ? 1.0 : 0.0) : init.normal();
  }
  const auto z = sample_noise<double>(*gen_spec.noise, batch, init);
  Tensor<double> real({batch, gen_spec.output_width});
  for (auto& v : real.data()) v = gen_spec.output_activation == Activation::sigmoid ? init.uniform() : init.normal();
  RngStream fake_rng(opt.seed + 7);
  const Tensor<double> fake = generate(gen, z, y, Mode::eval, fake_rng);

  const std::uint64_t mask_seed = opt.seed + 11;
  auto with_fault = [&](Tape<double>& t) {
    if (opt.fault) t.corrupt_backward(opt.fault->first, opt.fault->second);
  };

  std::vector<SuiteCase> out;

  std::vector<GradTarget> d_targets;
  for (std::size_t i = 0; i < disc.names().size(); ++i) {
    d_targets.push_back({"discriminator." + disc.names()[i], &disc.parameters()[i]});
  }
  out.push_back({label + "/discriminator_loss",
                 grad_check(
                     [&](Tape<double>& t) {
                       with_fault(t);
                       RngStream masks(mask_seed);
                       const auto yv = t.constant(y);
                       const auto dr = forward_discriminator(disc, t, t.constant(real), yv, Mode::train, masks);
                       const auto df = forward_discriminator(disc, t, t.constant(fake), yv, Mode::train, masks);
                       return discriminator_loss(t, dr.logits, df.logits);
                     },
                     d_targets, opt.check)});

  std::vector<GradTarget> g_targets;
  for (std::size_t i = 0; i < gen.names().size(); ++i) {
    g_targets.push_back({"generator." + gen.names()[i], &gen.parameters()[i]});
  }
  for (GeneratorLoss variant : {GeneratorLoss::saturating, GeneratorLoss::nonsaturating}) {
    out.push_back({label + "/generator_loss_" + std::string(to_string(variant)),
                   grad_check(
                       [&](Tape<double>& t) {
                         with_fault(t);
                         RngStream masks(mask_seed);
                         const auto yv = t.constant(y);
                         const auto g = forward_generator(gen, t, t.constant(z), yv, Mode::train, masks);
                         const auto d = forward_discriminator(disc, t, g.output, yv, Mode::train, masks, false);
                         return generator_loss(t, d.logits, variant);
                       },
                       g_targets, opt.check)});
  }
  return out;
}

// Every toy-width architecture: image-mode pair and vector-mode pair.
inline std::vector<SuiteCase> run_gradcheck_suite(const SuiteOptions& opt = {}) {
  std::vector<SuiteCase> all;
  const auto [ig, id] = toy_image_mode_specs();
  for (auto& c : run_architecture_suite("image_mode", ig, id, opt)) all.push_back(std::move(c));
  const auto [vg, vd] = vector_mode_specs(toy_vector_widths());
  for (auto& c : run_architecture_suite("vector_mode", vg, vd, opt)) all.push_back(std::move(c));
  return all;
}

}  // namespace cgan
