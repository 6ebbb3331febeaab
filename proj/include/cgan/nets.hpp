#pragma once

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cgan/errors.hpp"
#include "cgan/rng.hpp"
#include "cgan/tape.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

enum class NetRole { generator, discriminator };
enum class Activation { relu, maxout, linear, sigmoid };
enum class NoiseKind { uniform, gaussian };

inline std::string_view to_string(NetRole r) { return r == NetRole::generator ? "generator" : "discriminator"; }

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::maxout: return "maxout";
    case Activation::linear: return "linear";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline std::string_view to_string(NoiseKind k) { return k == NoiseKind::uniform ? "uniform" : "gaussian"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "maxout") return Activation::maxout;
  if (s == "linear") return Activation::linear;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

// p_z: uniform on the unit hypercube [0,1)^d or standard normal.
struct NoisePrior {
  NoiseKind kind = NoiseKind::uniform;
  std::size_t dimension = 100;

  friend bool operator==(const NoisePrior&, const NoisePrior&) = default;
};

// One hidden layer: input_width -> hidden_width.
struct BranchSpec {
  std::size_t input_width = 0;
  std::size_t hidden_width = 0;
  Activation activation = Activation::relu;
  std::optional<std::size_t> maxout_pieces;

  friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

// Two input branches whose hidden activations are concatenated, an optional
// joint hidden layer, and an output layer. Without a joint layer the output
// layer reads the concatenation directly (the vector-mode generator).
struct NetSpec {
  NetRole role = NetRole::generator;
  BranchSpec branch_a;  // noise (generator) or data (discriminator)
  BranchSpec branch_b;  // condition
  std::optional<BranchSpec> joint;
  std::size_t output_width = 1;
  Activation output_activation = Activation::sigmoid;
  double dropout_rate = 0.5;
  std::optional<NoisePrior> noise;  // generators only

  friend bool operator==(const NetSpec&, const NetSpec&) = default;

  std::size_t merged_width() const { return branch_a.hidden_width + branch_b.hidden_width; }
  std::size_t output_input_width() const { return joint ? joint->hidden_width : merged_width(); }

  void validate() const {
    auto check_branch = [](const BranchSpec& b, std::string_view name) {
      if (b.input_width == 0 || b.hidden_width == 0) {
        throw ConfigError(std::string(name) + ": widths must be positive");
      }
      if (b.activation == Activation::sigmoid) throw ConfigError(std::string(name) + ": sigmoid is output-only");
      if ((b.activation == Activation::maxout) != b.maxout_pieces.has_value()) {
        throw ConfigError(std::string(name) + ": maxout_pieces must be given exactly for maxout layers");
      }
      if (b.maxout_pieces && *b.maxout_pieces == 0) throw ConfigError(std::string(name) + ": maxout needs pieces >= 1");
    };
    check_branch(branch_a, "branch_a");
    check_branch(branch_b, "branch_b");
    if (joint) {
      check_branch(*joint, "joint");
      if (joint->input_width != merged_width()) {
        throw ConfigError("joint: input width " + std::to_string(joint->input_width) +
                          " must equal the merged branch width " + std::to_string(merged_width()));
      }
    }
    if (output_width == 0) throw ConfigError("output width must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    if (role == NetRole::discriminator) {
      if (output_width != 1 || output_activation != Activation::sigmoid) {
        throw ConfigError("discriminator output must be a single sigmoid unit");
      }
      if (noise) throw ConfigError("discriminator has no noise prior");
    } else {
      if (output_activation != Activation::sigmoid && output_activation != Activation::linear) {
        throw ConfigError("generator output must be sigmoid or linear");
      }
      if (!noise || noise->dimension != branch_a.input_width) {
        throw ConfigError("generator noise prior must match branch_a input width");
      }
    }
  }

  // Canonical text: one key=value per line, fixed key order.
  std::string to_text() const {
    std::ostringstream os;
    auto branch = [&](const BranchSpec& b) {
      os << to_string(b.activation) << ' ' << b.input_width << ' ' << b.hidden_width;
      if (b.maxout_pieces) os << ' ' << *b.maxout_pieces;
      os << '\n';
    };
    os << "role=" << to_string(role) << '\n';
    os << "branch_a=";
    branch(branch_a);
    os << "branch_b=";
    branch(branch_b);
    os << "joint=";
    if (joint) {
      branch(*joint);
    } else {
      os << "none\n";
    }
    os << "output=" << to_string(output_activation) << ' ' << output_width << '\n';
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.17g", dropout_rate);
    os << "dropout=" << rate << '\n';
    os << "noise=";
    if (noise) {
      os << to_string(noise->kind) << ' ' << noise->dimension << '\n';
    } else {
      os << "none\n";
    }
    return os.str();
  }

  static NetSpec from_text(std::string_view text) {
    NetSpec spec;
    std::istringstream in{std::string(text)};
    std::string line;
    auto parse_branch = [](const std::string& v) {
      std::istringstream is(v);
      std::string act;
      BranchSpec b;
      is >> act >> b.input_width >> b.hidden_width;
      if (!is) throw FormatError("net spec: malformed layer '" + v + "'");
      b.activation = parse_activation(act);
      std::size_t pieces = 0;
      if (is >> pieces) b.maxout_pieces = pieces;
      return b;
    };
    int seen = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("net spec: expected key=value, got '" + line + "'");
      const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
      if (key == "role") {
        if (v == "generator") {
          spec.role = NetRole::generator;
        } else if (v == "discriminator") {
          spec.role = NetRole::discriminator;
        } else {
          throw FormatError("net spec: unknown role '" + v + "'");
        }
      } else if (key == "branch_a") {
        spec.branch_a = parse_branch(v);
      } else if (key == "branch_b") {
        spec.branch_b = parse_branch(v);
      } else if (key == "joint") {
        spec.joint = v == "none" ? std::nullopt : std::optional(parse_branch(v));
      } else if (key == "output") {
        std::istringstream is(v);
        std::string act;
        is >> act >> spec.output_width;
        if (!is) throw FormatError("net spec: malformed output '" + v + "'");
        spec.output_activation = parse_activation(act);
      } else if (key == "dropout") {
        spec.dropout_rate = std::stod(v);
      } else if (key == "noise") {
        if (v == "none") {
          spec.noise.reset();
        } else {
          std::istringstream is(v);
          std::string kind;
          NoisePrior p;
          is >> kind >> p.dimension;
          if (!is || (kind != "uniform" && kind != "gaussian")) throw FormatError("net spec: malformed noise '" + v + "'");
          p.kind = kind == "uniform" ? NoiseKind::uniform : NoiseKind::gaussian;
          spec.noise = p;
        }
      } else {
        throw FormatError("net spec: unknown key '" + key + "'");
      }
      ++seen;
    }
    if (seen != 7) throw FormatError("net spec: expected 7 keys, found " + std::to_string(seen));
    spec.validate();
    return spec;
  }
};

// ---------------------------------------------------------------------------
// Published architectures.

// z(100, uniform) -> ReLU 200; y(10) -> ReLU 1000; joint ReLU 1200; sigmoid 784.
inline NetSpec mnist_generator_spec() {
  NetSpec s;
  s.role = NetRole::generator;
  s.branch_a = {100, 200, Activation::relu, std::nullopt};
  s.branch_b = {10, 1000, Activation::relu, std::nullopt};
  s.joint = BranchSpec{1200, 1200, Activation::relu, std::nullopt};
  s.output_width = 784;
  s.output_activation = Activation::sigmoid;
  s.dropout_rate = 0.5;
  s.noise = NoisePrior{NoiseKind::uniform, 100};
  return s;
}

// x(784) -> maxout 240x5; y(10) -> maxout 50x5; joint maxout 240x4; sigmoid 1.
inline NetSpec mnist_discriminator_spec() {
  NetSpec s;
  s.role = NetRole::discriminator;
  s.branch_a = {784, 240, Activation::maxout, 5};
  s.branch_b = {10, 50, Activation::maxout, 5};
  s.joint = BranchSpec{290, 240, Activation::maxout, 4};
  s.output_width = 1;
  s.output_activation = Activation::sigmoid;
  s.dropout_rate = 0.5;
  return s;
}

// Widths of the word-vector architecture; defaults are the published sizes.
struct VectorModeWidths {
  std::size_t noise = 100;
  std::size_t feature = 4096;
  std::size_t wordvec = 200;
  std::size_t g_noise_hidden = 500;
  std::size_t g_feature_hidden = 2000;
  std::size_t d_wordvec_hidden = 500;
  std::size_t d_feature_hidden = 1200;
  std::size_t d_joint_units = 1000;
  std::size_t d_joint_pieces = 3;
  double dropout_rate = 0.5;
};

// Generator: z(Gaussian) -> ReLU, feature -> ReLU, concat -> linear word vector.
// Discriminator: word vector -> ReLU, feature -> ReLU, joint maxout, sigmoid 1.
inline std::pair<NetSpec, NetSpec> vector_mode_specs(const VectorModeWidths& w = {}) {
  NetSpec g;
  g.role = NetRole::generator;
  g.branch_a = {w.noise, w.g_noise_hidden, Activation::relu, std::nullopt};
  g.branch_b = {w.feature, w.g_feature_hidden, Activation::relu, std::nullopt};
  g.joint.reset();
  g.output_width = w.wordvec;
  g.output_activation = Activation::linear;
  g.dropout_rate = w.dropout_rate;
  g.noise = NoisePrior{NoiseKind::gaussian, w.noise};

  NetSpec d;
  d.role = NetRole::discriminator;
  d.branch_a = {w.wordvec, w.d_wordvec_hidden, Activation::relu, std::nullopt};
  d.branch_b = {w.feature, w.d_feature_hidden, Activation::relu, std::nullopt};
  d.joint = BranchSpec{w.d_wordvec_hidden + w.d_feature_hidden, w.d_joint_units, Activation::maxout, w.d_joint_pieces};
  d.output_width = 1;
  d.output_activation = Activation::sigmoid;
  d.dropout_rate = w.dropout_rate;
  g.validate();
  d.validate();
  return {g, d};
}

// ---------------------------------------------------------------------------
// Parameters.

struct ParameterShape {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

inline void append_layer_shapes(std::vector<ParameterShape>& out, const std::string& layer, std::size_t in,
                                std::size_t width, Activation act, std::optional<std::size_t> pieces) {
  if (act == Activation::maxout) {
    out.push_back({layer + ".weight", {*pieces, in, width}, in, width});
    out.push_back({layer + ".bias", {*pieces, width}, in, width});
  } else {
    out.push_back({layer + ".weight", {in, width}, in, width});
    out.push_back({layer + ".bias", {width}, in, width});
  }
}

// Layer names: a, b, joint (if present), out.
inline std::vector<ParameterShape> parameter_shapes(const NetSpec& spec) {
  spec.validate();
  std::vector<ParameterShape> out;
  const auto branch = [&](const std::string& name, const BranchSpec& b) {
    append_layer_shapes(out, name, b.input_width, b.hidden_width, b.activation, b.maxout_pieces);
  };
  branch("a", spec.branch_a);
  branch("b", spec.branch_b);
  if (spec.joint) branch("joint", *spec.joint);
  append_layer_shapes(out, "out", spec.output_input_width(), spec.output_width, Activation::linear, std::nullopt);
  return out;
}

template <typename T>
class Net {
 public:
  Net() = default;

  // Zero-filled parameters of the shapes the spec implies.
  explicit Net(NetSpec spec) : spec_(std::move(spec)) {
    for (auto& p : parameter_shapes(spec_)) {
      names_.push_back(p.name);
      params_.emplace_back(p.shape);
    }
  }

  const NetSpec& spec() const { return spec_; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    throw Error("net: no parameter named '" + std::string(name) + "'");
  }

  bool has(std::string_view name) const {
    for (const auto& n : names_) {
      if (n == name) return true;
    }
    return false;
  }

  Tensor<T>& parameter(std::string_view name) { return params_[index_of(name)]; }
  const Tensor<T>& parameter(std::string_view name) const { return params_[index_of(name)]; }

  void set_parameter(std::string_view name, Tensor<T> value) {
    auto& slot = parameter(name);
    if (slot.shape() != value.shape()) {
      throw DimensionError("net: parameter '" + std::string(name) + "' expects shape " + shape_string(slot.shape()) +
                           ", got " + shape_string(value.shape()));
    }
    slot = std::move(value);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  template <typename U>
  Net<U> cast() const {
    Net<U> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = params_[i].template cast<U>();
    return out;
  }

  friend bool bitwise_equal(const Net& a, const Net& b) {
    if (!(a.spec_ == b.spec_) || a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (!bitwise_equal(a.params_[i], b.params_[i])) return false;
    }
    return true;
  }

 private:
  NetSpec spec_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> params_;
};

// Weights ~ U(-s, s), s = sqrt(6 / (fan_in + fan_out)); biases zero.
// Draws follow parameter order, then row-major element order.
template <typename T>
Net<T> init_parameters(const NetSpec& spec, RngStream& rng) {
  Net<T> net(spec);
  const auto shapes = parameter_shapes(spec);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (!shapes[i].name.ends_with(".weight")) continue;
    const double s = std::sqrt(6.0 / static_cast<double>(shapes[i].fan_in + shapes[i].fan_out));
    for (auto& w : net.parameters()[i].data()) w = static_cast<T>(rng.uniform(-s, s));
  }
  return net;
}

template <typename T>
Tensor<T> sample_noise(const NoisePrior& prior, std::size_t batch, RngStream& rng) {
  Tensor<T> z({batch, prior.dimension});
  for (auto& v : z.data()) v = static_cast<T>(prior.kind == NoiseKind::uniform ? rng.uniform() : rng.normal());
  return z;
}

// ---------------------------------------------------------------------------
// Forward passes.

template <typename T>
struct NetOutput {
  typename Tape<T>::Var logits;  // output layer pre-activation
  typename Tape<T>::Var output;  // sigmoid(logits), or logits for a linear output
};

namespace detail {

template <typename T>
typename Tape<T>::Var apply_layer(Tape<T>& tape, const Net<T>& net, const std::string& layer,
                                  typename Tape<T>::Var x, Activation act, bool trainable) {
  const auto w = tape.parameter(net.parameter(layer + ".weight"), trainable);
  const auto b = tape.parameter(net.parameter(layer + ".bias"), trainable);
  switch (act) {
    case Activation::relu: return tape.relu(tape.affine(x, w, b));
    case Activation::maxout: return tape.maxout(x, w, b);
    default: return tape.affine(x, w, b);
  }
}

template <typename T>
void check_input(const Tape<T>& tape, typename Tape<T>::Var v, std::size_t width, std::string_view what) {
  const auto& t = tape.value(v);
  if (t.rank() != 2 || t.dim(1) != width) {
    throw DimensionError(std::string(what) + ": expected [batch, " + std::to_string(width) + "], got " +
                         shape_string(t.shape()));
  }
}

}  // namespace detail

// Shared two-branch forward. Dropout touches hidden activations only
// (branch a, branch b, joint), consuming `rng` in that order.
template <typename T>
NetOutput<T> forward(const Net<T>& net, Tape<T>& tape, typename Tape<T>::Var a_in, typename Tape<T>::Var b_in,
                     Mode mode, RngStream& rng, bool trainable = true) {
  const NetSpec& s = net.spec();
  detail::check_input(tape, a_in, s.branch_a.input_width, "branch_a input");
  detail::check_input(tape, b_in, s.branch_b.input_width, "branch_b input");
  if (tape.value(a_in).dim(0) != tape.value(b_in).dim(0)) throw DimensionError("forward: batch extents differ");

  auto hidden = [&](const std::string& layer, typename Tape<T>::Var x, const BranchSpec& b) {
    auto h = detail::apply_layer(tape, net, layer, x, b.activation, trainable);
    return tape.dropout(h, s.dropout_rate, mode, rng);
  };
  const auto ha = hidden("a", a_in, s.branch_a);
  const auto hb = hidden("b", b_in, s.branch_b);
  auto h = tape.concat(ha, hb);
  if (s.joint) h = hidden("joint", h, *s.joint);
  const auto logits = detail::apply_layer(tape, net, "out", h, Activation::linear, trainable);
  const auto output = s.output_activation == Activation::sigmoid ? tape.sigmoid(logits) : logits;
  return {logits, output};
}

// G(z|y).
template <typename T>
NetOutput<T> forward_generator(const Net<T>& net, Tape<T>& tape, typename Tape<T>::Var z,
                               typename Tape<T>::Var y, Mode mode, RngStream& rng, bool trainable = true) {
  if (net.spec().role != NetRole::generator) throw ConfigError("forward_generator: net is not a generator");
  return forward(net, tape, z, y, mode, rng, trainable);
}

// D(x|y).
template <typename T>
NetOutput<T> forward_discriminator(const Net<T>& net, Tape<T>& tape, typename Tape<T>::Var x,
                                   typename Tape<T>::Var y, Mode mode, RngStream& rng, bool trainable = true) {
  if (net.spec().role != NetRole::discriminator) throw ConfigError("forward_discriminator: net is not a discriminator");
  return forward(net, tape, x, y, mode, rng, trainable);
}

// Value-only helpers for sampling and scoring.
template <typename T>
Tensor<T> generate(const Net<T>& gen, const Tensor<T>& z, const Tensor<T>& y, Mode mode, RngStream& rng) {
  Tape<T> tape;
  const auto out = forward_generator(gen, tape, tape.constant(z), tape.constant(y), mode, rng, false);
  return tape.value(out.output);
}

template <typename T>
Tensor<T> discriminate(const Net<T>& disc, const Tensor<T>& x, const Tensor<T>& y, Mode mode, RngStream& rng) {
  Tape<T> tape;
  const auto out = forward_discriminator(disc, tape, tape.constant(x), tape.constant(y), mode, rng, false);
  return tape.value(out.output);
}

}  // namespace cgan
