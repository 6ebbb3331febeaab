#pragma once

// Alternating minibatch training of a conditional generator/discriminator pair.
//
// One step consumes one minibatch: d_steps_per_g_step discriminator updates
// (fresh noise each), then one generator update through the frozen
// discriminator with fresh noise. The learning rate and momentum follow
// Schedule evaluated at the shared step counter. Incomplete trailing
// minibatches are dropped.
//
// Metrics records are single lines of space-separated key=value pairs:
//   step epoch lr momentum d_loss g_loss d_real d_fake [val_ll best_ll]

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cgan/container.hpp"
#include "cgan/data.hpp"
#include "cgan/errors.hpp"
#include "cgan/losses.hpp"
#include "cgan/nets.hpp"
#include "cgan/optimizer.hpp"
#include "cgan/parzen.hpp"
#include "cgan/rng.hpp"

namespace cgan {

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a real number, got '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' is out of range: '" + v + "'");
  }
}

}  // namespace detail

struct GanConfig {
  std::size_t batch_size = 100;
  double lr_initial = 0.1;
  double lr_floor = 1e-6;
  double lr_decay_factor = 1.00004;
  double momentum_initial = 0.5;
  double momentum_final = 0.7;
  std::uint64_t momentum_ramp_steps = 0;  // 0 resolves to one epoch of steps
  double dropout_rate = 0.5;
  std::size_t d_steps_per_g_step = 1;
  GeneratorLoss generator_loss_variant = GeneratorLoss::saturating;
  std::uint64_t max_epochs = 1;
  std::uint64_t max_steps = 0;   // 0 means no step cap
  std::uint64_t eval_every = 0;  // steps between early-stopping evaluations; 0 disables
  std::size_t eval_samples_per_class = 100;
  std::uint64_t seed = 0;

  static constexpr const char* kKeys[] = {
      "batch_size",       "lr_initial",     "lr_floor",   "lr_decay_factor", "momentum_initial",
      "momentum_final",   "momentum_ramp_steps", "dropout_rate", "d_steps_per_g_step",
      "generator_loss_variant", "max_epochs", "max_steps", "eval_every", "eval_samples_per_class", "seed"};

  Schedule schedule() const {
    return {lr_initial, lr_floor, lr_decay_factor, momentum_initial, momentum_final,
            momentum_ramp_steps == 0 ? 1 : momentum_ramp_steps};
  }

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (d_steps_per_g_step == 0) throw ConfigError("d_steps_per_g_step must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    if (eval_samples_per_class == 0) throw ConfigError("eval_samples_per_class must be positive");
    if (!(lr_initial >= 0.0)) throw ConfigError("lr_initial must be non-negative");
    Schedule s = schedule();
    s.validate();
  }

  bool set(const std::string& key, const std::string& v) {
    if (key == "batch_size") batch_size = detail::parse_uint(key, v);
    else if (key == "lr_initial") lr_initial = detail::parse_double(key, v);
    else if (key == "lr_floor") lr_floor = detail::parse_double(key, v);
    else if (key == "lr_decay_factor") lr_decay_factor = detail::parse_double(key, v);
    else if (key == "momentum_initial") momentum_initial = detail::parse_double(key, v);
    else if (key == "momentum_final") momentum_final = detail::parse_double(key, v);
    else if (key == "momentum_ramp_steps") momentum_ramp_steps = detail::parse_uint(key, v);
    else if (key == "dropout_rate") dropout_rate = detail::parse_double(key, v);
    else if (key == "d_steps_per_g_step") d_steps_per_g_step = detail::parse_uint(key, v);
    else if (key == "generator_loss_variant") generator_loss_variant = parse_generator_loss(v);
    else if (key == "max_epochs") max_epochs = detail::parse_uint(key, v);
    else if (key == "max_steps") max_steps = detail::parse_uint(key, v);
    else if (key == "eval_every") eval_every = detail::parse_uint(key, v);
    else if (key == "eval_samples_per_class") eval_samples_per_class = detail::parse_uint(key, v);
    else if (key == "seed") seed = detail::parse_uint(key, v);
    else return false;
    return true;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "batch_size=" << batch_size << "\nlr_initial=" << detail::format_double(lr_initial)
       << "\nlr_floor=" << detail::format_double(lr_floor)
       << "\nlr_decay_factor=" << detail::format_double(lr_decay_factor)
       << "\nmomentum_initial=" << detail::format_double(momentum_initial)
       << "\nmomentum_final=" << detail::format_double(momentum_final)
       << "\nmomentum_ramp_steps=" << momentum_ramp_steps << "\ndropout_rate=" << detail::format_double(dropout_rate)
       << "\nd_steps_per_g_step=" << d_steps_per_g_step
       << "\ngenerator_loss_variant=" << to_string(generator_loss_variant) << "\nmax_epochs=" << max_epochs
       << "\nmax_steps=" << max_steps << "\neval_every=" << eval_every
       << "\neval_samples_per_class=" << eval_samples_per_class << "\nseed=" << seed << '\n';
    return os.str();
  }

  static GanConfig from_text(const std::string& text) {
    GanConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config: malformed line '" + line + "'");
      if (!c.set(line.substr(0, eq), line.substr(eq + 1))) {
        throw ConfigError("config: unknown key '" + line.substr(0, eq) + "'");
      }
    }
    return c;
  }
};

struct StepMetrics {
  std::uint64_t step = 0;  // steps completed, including this one
  std::uint64_t epoch = 0;
  double lr = 0, momentum = 0;
  double d_loss = 0, g_loss = 0;
  double d_real = 0, d_fake = 0;  // mean D output on the last discriminator update
  std::optional<double> val_ll, best_ll;

  std::string to_line() const {
    char buf[512];
    std::snprintf(buf, sizeof buf, "step=%llu epoch=%llu lr=%.9g momentum=%.9g d_loss=%.9g g_loss=%.9g d_real=%.9g d_fake=%.9g",
                  static_cast<unsigned long long>(step), static_cast<unsigned long long>(epoch), lr, momentum, d_loss,
                  g_loss, d_real, d_fake);
    std::string s = buf;
    if (val_ll) {
      std::snprintf(buf, sizeof buf, " val_ll=%.9g best_ll=%.9g", *val_ll, *best_ll);
      s += buf;
    }
    return s;
  }
};

// Parses one metrics line back into key/value pairs.
inline std::vector<std::pair<std::string, double>> parse_metrics_line(const std::string& line) {
  std::vector<std::pair<std::string, double>> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("metrics: malformed token '" + tok + "'");
    out.emplace_back(tok.substr(0, eq), detail::parse_double(tok.substr(0, eq), tok.substr(eq + 1)));
  }
  return out;
}

struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::size_t cursor = 0;  // minibatches consumed in the current epoch
  std::vector<std::size_t> order;
  std::vector<Tensor<float>> gen_velocity, disc_velocity;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::uint64_t best_step = 0;
  std::optional<Net<float>> best_gen;
  RngStream noise_rng, dropout_rng, shuffle_rng, eval_rng;
};

// Stream tags for RngStream::derive.
inline constexpr std::uint64_t kInitStream = 1, kNoiseStream = 2, kDropoutStream = 3, kShuffleStream = 4,
                               kEvalStream = 5;

class Trainer {
 public:
  // `validation` may be null; early stopping needs one-hot conditions.
  Trainer(Net<float> gen, Net<float> disc, GanConfig config, const LabeledDataset& train,
          const LabeledDataset* validation = nullptr)
      : gen_(std::move(gen)), disc_(std::move(disc)), config_(std::move(config)), data_(train), val_(validation) {
    config_.validate();
    check_compatible();
    if (config_.momentum_ramp_steps == 0) config_.momentum_ramp_steps = std::max<std::uint64_t>(steps_per_epoch(), 1);
    schedule_ = config_.schedule();
    state_.gen_velocity = zeros_like(gen_.parameters());
    state_.disc_velocity = zeros_like(disc_.parameters());
    state_.noise_rng = RngStream::derive(config_.seed, kNoiseStream);
    state_.dropout_rng = RngStream::derive(config_.seed, kDropoutStream);
    state_.shuffle_rng = RngStream::derive(config_.seed, kShuffleStream);
    state_.eval_rng = RngStream::derive(config_.seed, kEvalStream);
  }

  const Net<float>& generator() const { return gen_; }
  // Swaps in generator parameters of the same spec, e.g. a stub.
  void replace_generator(Net<float> gen) {
    if (gen.spec().to_text() != gen_.spec().to_text()) throw ConfigError("trainer: replacement generator spec differs");
    gen_ = std::move(gen);
  }
  const Net<float>& discriminator() const { return disc_; }
  const GanConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  const Schedule& schedule() const { return schedule_; }

  // Extends or shortens the run, e.g. after resuming a checkpoint.
  void set_budget(std::uint64_t max_epochs, std::uint64_t max_steps) {
    config_.max_epochs = max_epochs;
    config_.max_steps = max_steps;
  }

  std::size_t steps_per_epoch() const { return data_.size() / config_.batch_size; }

  bool finished() const {
    return state_.epoch >= config_.max_epochs || (config_.max_steps != 0 && state_.step >= config_.max_steps);
  }

  // Indices of the next minibatch; reshuffles at the start of an epoch.
  std::vector<std::size_t> next_batch_indices() {
    if (state_.cursor == 0) {
      state_.order.resize(data_.size());
      std::iota(state_.order.begin(), state_.order.end(), std::size_t{0});
      state_.shuffle_rng.shuffle(state_.order);
    }
    const auto first = state_.order.begin() + static_cast<std::ptrdiff_t>(state_.cursor * config_.batch_size);
    return {first, first + static_cast<std::ptrdiff_t>(config_.batch_size)};
  }

  // One discriminator update on (x, y) against fresh generated samples.
  // Returns {loss, mean D(real), mean D(fake)}.
  std::array<double, 3> discriminator_update(const Tensor<float>& x, const Tensor<float>& y, double lr,
                                             double momentum) {
    const auto z = sample_noise<float>(*gen_.spec().noise, y.rows(), state_.noise_rng);
    const Tensor<float> fake = generate(gen_, z, y, Mode::train, state_.dropout_rng);
    Tape<float> tape;
    const auto yv = tape.constant(y);
    const auto real_out = forward_discriminator(disc_, tape, tape.constant(x), yv, Mode::train, state_.dropout_rng);
    const auto fake_out = forward_discriminator(disc_, tape, tape.constant(fake), yv, Mode::train, state_.dropout_rng);
    const auto loss = discriminator_loss(tape, real_out.logits, fake_out.logits);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) throw NumericError("training: non-finite discriminator loss at step " + std::to_string(state_.step));
    tape.backward(loss);
    apply_update(tape, disc_, state_.disc_velocity, lr, momentum, "discriminator.");
    return {value, mean_of(tape.value(real_out.output)), mean_of(tape.value(fake_out.output))};
  }

  // One generator update through the frozen discriminator.
  double generator_update(const Tensor<float>& y, double lr, double momentum) {
    const auto z = sample_noise<float>(*gen_.spec().noise, y.rows(), state_.noise_rng);
    Tape<float> tape;
    const auto yv = tape.constant(y);
    const auto g = forward_generator(gen_, tape, tape.constant(z), yv, Mode::train, state_.dropout_rng);
    const auto d = forward_discriminator(disc_, tape, g.output, yv, Mode::train, state_.dropout_rng, false);
    const auto loss = generator_loss(tape, d.logits, config_.generator_loss_variant);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) throw NumericError("training: non-finite generator loss at step " + std::to_string(state_.step));
    tape.backward(loss);
    apply_update(tape, gen_, state_.gen_velocity, lr, momentum, "generator.");
    return value;
  }

  StepMetrics step() {
    if (steps_per_epoch() == 0) throw DataError("training: dataset smaller than one minibatch");
    const auto idx = next_batch_indices();
    const auto x = data_.x.gather_rows(idx).cast<float>();
    const auto y = data_.y.gather_rows(idx).cast<float>();
    StepMetrics m;
    m.lr = schedule_.lr(state_.step);
    m.momentum = schedule_.momentum(state_.step);
    for (std::size_t k = 0; k < config_.d_steps_per_g_step; ++k) {
      const auto [loss, dr, df] = discriminator_update(x, y, m.lr, m.momentum);
      m.d_loss = loss;
      m.d_real = dr;
      m.d_fake = df;
    }
    m.g_loss = generator_update(y, m.lr, m.momentum);
    ++state_.step;
    if (++state_.cursor == steps_per_epoch()) {
      state_.cursor = 0;
      ++state_.epoch;
    }
    m.step = state_.step;
    m.epoch = state_.epoch;
    if (config_.eval_every != 0 && state_.step % config_.eval_every == 0 && can_evaluate()) {
      m.val_ll = early_stopping_check();
      m.best_ll = state_.best_ll;
    }
    return m;
  }

  // Runs until max_epochs or max_steps; each record goes to `sink`.
  void run(const std::function<void(const StepMetrics&)>& sink = {}) {
    while (!finished()) {
      const auto m = step();
      if (sink) sink(m);
    }
  }

  // Completes the current epoch.
  std::vector<StepMetrics> run_epoch() {
    std::vector<StepMetrics> out;
    const auto epoch = state_.epoch;
    while (state_.epoch == epoch) out.push_back(step());
    return out;
  }

  bool can_evaluate() const { return val_ != nullptr && val_->size() > 0 && val_->one_hot(); }

  // Reduced Parzen estimate on the validation split: samples_per_class
  // generated points per class, sigma chosen on the validation set itself,
  // and the best mean validation log density reported. Improvements replace
  // the best-generator snapshot.
  double early_stopping_check() {
    if (!can_evaluate()) throw DataError("early stopping: needs a one-hot validation set");
    const double ll = validation_log_likelihood(gen_, *val_, config_.eval_samples_per_class, state_.eval_rng);
    if (ll > state_.best_ll || !state_.best_gen) {
      state_.best_ll = ll;
      state_.best_step = state_.step;
      state_.best_gen = gen_;
    }
    return ll;
  }

  static double validation_log_likelihood(const Net<float>& gen, const LabeledDataset& val,
                                          std::size_t samples_per_class, RngStream& rng) {
    const auto g64 = gen.cast<double>();
    ProtocolOptions opt;
    opt.samples_per_class = samples_per_class;
    opt.classes = val.condition_width();
    const auto bank = draw_sample_bank(generator_sampler(g64), val.data_width(), opt, rng);
    const auto sel = select_sigma_detailed(bank, val.x, opt.grid);
    return *std::max_element(sel.mean_ll.begin(), sel.mean_ll.end());
  }

  // -------------------------------------------------------------------------
  // Checkpoints.

  Container checkpoint() const {
    Container c;
    c.set_block("config", config_.to_text());
    std::ostringstream st;
    st << "step=" << state_.step << "\nepoch=" << state_.epoch << "\ncursor=" << state_.cursor
       << "\nbest_ll=" << detail::format_double(state_.best_ll) << "\nbest_step=" << state_.best_step
       << "\nrng.noise=" << state_.noise_rng.serialize() << "\nrng.dropout=" << state_.dropout_rng.serialize()
       << "\nrng.shuffle=" << state_.shuffle_rng.serialize() << "\nrng.eval=" << state_.eval_rng.serialize() << '\n';
    c.set_block("state", st.str());
    store_net(c, "gen", gen_);
    store_net(c, "disc", disc_);
    for (std::size_t i = 0; i < gen_.names().size(); ++i) c.add_tensor("gen_velocity." + gen_.names()[i], state_.gen_velocity[i]);
    for (std::size_t i = 0; i < disc_.names().size(); ++i) c.add_tensor("disc_velocity." + disc_.names()[i], state_.disc_velocity[i]);
    if (state_.best_gen) store_net(c, "best_gen", *state_.best_gen);
    Tensor<double> order({state_.order.size()});
    for (std::size_t i = 0; i < state_.order.size(); ++i) order[i] = static_cast<double>(state_.order[i]);
    c.add_tensor("order", order);
    return c;
  }

  static Trainer resume(const Container& c, const LabeledDataset& train, const LabeledDataset* validation = nullptr) {
    Trainer t(load_net<float>(c, "gen"), load_net<float>(c, "disc"), GanConfig::from_text(c.block("config")), train,
              validation);
    std::istringstream is(c.block("state"));
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
      if (k == "step") t.state_.step = detail::parse_uint(k, v);
      else if (k == "epoch") t.state_.epoch = detail::parse_uint(k, v);
      else if (k == "cursor") t.state_.cursor = detail::parse_uint(k, v);
      else if (k == "best_ll") t.state_.best_ll = v == "-inf" ? -std::numeric_limits<double>::infinity() : detail::parse_double(k, v);
      else if (k == "best_step") t.state_.best_step = detail::parse_uint(k, v);
      else if (k == "rng.noise") t.state_.noise_rng = RngStream::deserialize(v);
      else if (k == "rng.dropout") t.state_.dropout_rng = RngStream::deserialize(v);
      else if (k == "rng.shuffle") t.state_.shuffle_rng = RngStream::deserialize(v);
      else if (k == "rng.eval") t.state_.eval_rng = RngStream::deserialize(v);
    }
    for (std::size_t i = 0; i < t.gen_.names().size(); ++i) {
      t.state_.gen_velocity[i] = c.tensor<float>("gen_velocity." + t.gen_.names()[i]);
    }
    for (std::size_t i = 0; i < t.disc_.names().size(); ++i) {
      t.state_.disc_velocity[i] = c.tensor<float>("disc_velocity." + t.disc_.names()[i]);
    }
    if (c.has_block("best_gen.spec")) t.state_.best_gen = load_net<float>(c, "best_gen");
    const auto order = c.tensor<double>("order");
    t.state_.order.clear();
    for (double v : order.data()) t.state_.order.push_back(static_cast<std::size_t>(v));
    if (t.state_.cursor != 0 && t.state_.order.size() != train.size()) {
      throw DataError("resume: checkpoint was taken on a dataset of a different size");
    }
    return t;
  }

 private:
  void check_compatible() const {
    const NetSpec& g = gen_.spec();
    const NetSpec& d = disc_.spec();
    if (g.role != NetRole::generator || !g.noise) throw ConfigError("trainer: first net must be a generator");
    if (d.role != NetRole::discriminator) throw ConfigError("trainer: second net must be a discriminator");
    if (d.output_width != 1) throw ConfigError("trainer: discriminator must have one output");
    if (data_.size() == 0) throw DataError("trainer: empty training set");
    if (g.output_width != data_.data_width() || d.branch_a.input_width != data_.data_width()) {
      throw DimensionError("trainer: data width " + std::to_string(data_.data_width()) +
                           " does not match the nets");
    }
    if (g.branch_b.input_width != data_.condition_width() || d.branch_b.input_width != data_.condition_width()) {
      throw DimensionError("trainer: condition width " + std::to_string(data_.condition_width()) +
                           " does not match the nets");
    }
  }

  static double mean_of(const Tensor<float>& t) {
    double s = 0;
    for (float v : t.data()) s += v;
    return s / static_cast<double>(t.size());
  }

  static void apply_update(const Tape<float>& tape, Net<float>& net, std::vector<Tensor<float>>& velocity, double lr,
                           double momentum, const std::string& prefix) {
    std::vector<Tensor<float>> grads;
    std::vector<std::string> names;
    grads.reserve(net.parameters().size());
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
      grads.push_back(tape.grad_of(net.parameters()[i]));
      names.push_back(prefix + net.names()[i]);
    }
    sgd_momentum_step(net.parameters(), grads, velocity, lr, momentum, names);
  }

  Net<float> gen_, disc_;
  GanConfig config_;
  Schedule schedule_;
  const LabeledDataset& data_;
  const LabeledDataset* val_;
  TrainState state_;
};

// Fresh nets for a pair of specs, initialized from the config seed.
inline Trainer make_trainer(NetSpec gen_spec, NetSpec disc_spec, const GanConfig& config, const LabeledDataset& train,
                            const LabeledDataset* validation = nullptr) {
  gen_spec.dropout_rate = config.dropout_rate;
  disc_spec.dropout_rate = config.dropout_rate;
  RngStream init = RngStream::derive(config.seed, kInitStream);
  auto gen = init_parameters<float>(gen_spec, init);
  auto disc = init_parameters<float>(disc_spec, init);
  return Trainer(std::move(gen), std::move(disc), config, train, validation);
}

}  // namespace cgan
