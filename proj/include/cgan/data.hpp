#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cgan/container.hpp"
#include "cgan/errors.hpp"
#include "cgan/rng.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

// Examples x paired with condition vectors y (one row each).
struct LabeledDataset {
  Tensor<double> x;  // [N, d]
  Tensor<double> y;  // [N, c]
  std::string source;
  std::string split;

  std::size_t size() const { return x.rows(); }
  std::size_t data_width() const { return x.cols(); }
  std::size_t condition_width() const { return y.cols(); }

  // True when every row of y is a one-hot vector.
  bool one_hot() const {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      int ones = 0;
      for (double v : y.row(r)) {
        if (v == 1.0) {
          ++ones;
        } else if (v != 0.0) {
          return false;
        }
      }
      if (ones != 1) return false;
    }
    return true;
  }

  std::size_t label(std::size_t r) const {
    const auto row = y.row(r);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }

  LabeledDataset subset(std::span<const std::size_t> rows, std::string split_name) const {
    return {x.gather_rows(rows), y.gather_rows(rows), source, std::move(split_name)};
  }

  LabeledDataset head(std::size_t n) const {
    if (n > size()) throw DataError("dataset: head(" + std::to_string(n) + ") exceeds size " + std::to_string(size()));
    return {x.slice_rows(0, n), y.slice_rows(0, n), source, split};
  }
};

inline Tensor<double> one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor<double> y({labels.size(), classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= classes) throw DataError("one_hot: label " + std::to_string(labels[r]) + " out of range");
    y(r, labels[r]) = 1.0;
  }
  return y;
}

// ---------------------------------------------------------------------------
// IDX (big-endian). Images: magic 0x00000803, count, rows, cols, then bytes.
// Labels: magic 0x00000801, count, then bytes.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

inline std::uint32_t read_be32(std::string_view bytes, std::size_t offset, std::string_view what) {
  if (bytes.size() < offset + 4) {
    throw FormatError(std::string(what) + ": truncated header at byte offset " + std::to_string(bytes.size()));
  }
  const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

inline void write_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline void expect_magic(std::uint32_t found, std::uint32_t expected, std::string_view what) {
  if (found != expected) {
    throw FormatError(std::string(what) + ": bad magic, expected " + hex32(expected) + ", found " + hex32(found));
  }
}

}  // namespace detail

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages parse_idx_images(std::string_view bytes) {
  detail::expect_magic(detail::read_be32(bytes, 0, "idx images"), kIdxImageMagic, "idx images");
  IdxImages im;
  im.count = detail::read_be32(bytes, 4, "idx images");
  im.rows = detail::read_be32(bytes, 8, "idx images");
  im.cols = detail::read_be32(bytes, 12, "idx images");
  const std::size_t need = 16 + im.count * im.rows * im.cols;
  if (bytes.size() < need) {
    throw FormatError("idx images: truncated at byte offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(need) + " bytes)");
  }
  im.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(need));
  return im;
}

inline std::vector<std::uint8_t> parse_idx_labels(std::string_view bytes) {
  detail::expect_magic(detail::read_be32(bytes, 0, "idx labels"), kIdxLabelMagic, "idx labels");
  const std::size_t count = detail::read_be32(bytes, 4, "idx labels");
  if (bytes.size() < 8 + count) {
    throw FormatError("idx labels: truncated at byte offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(8 + count) + " bytes)");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

// Pixels scaled by 1/255 into [0, 1]; labels one-hot over 10 classes.
inline LabeledDataset dataset_from_idx(std::string_view image_bytes, std::string_view label_bytes,
                                       std::string source = "idx") {
  const auto im = parse_idx_images(image_bytes);
  const auto labels = parse_idx_labels(label_bytes);
  if (labels.size() != im.count) {
    throw DataError("idx: image file holds " + std::to_string(im.count) + " examples but label file holds " +
                    std::to_string(labels.size()));
  }
  const std::size_t d = im.rows * im.cols;
  LabeledDataset ds;
  ds.x = Tensor<double>({im.count, d});
  for (std::size_t i = 0; i < im.pixels.size(); ++i) ds.x[i] = static_cast<double>(im.pixels[i]) / 255.0;
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  ds.y = one_hot(lab, 10);
  ds.source = std::move(source);
  ds.split = "all";
  return ds;
}

inline LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  return dataset_from_idx(read_file(images), read_file(labels), images.filename().string());
}

// Inverse of dataset_from_idx for [0,1] images with one-hot labels.
inline std::pair<std::string, std::string> encode_idx(const LabeledDataset& ds, std::size_t rows, std::size_t cols) {
  if (rows * cols != ds.data_width()) throw DimensionError("encode_idx: rows*cols does not match data width");
  std::string images, labels;
  detail::write_be32(images, kIdxImageMagic);
  detail::write_be32(images, static_cast<std::uint32_t>(ds.size()));
  detail::write_be32(images, static_cast<std::uint32_t>(rows));
  detail::write_be32(images, static_cast<std::uint32_t>(cols));
  for (double v : ds.x.data()) images.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
  detail::write_be32(labels, kIdxLabelMagic);
  detail::write_be32(labels, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t r = 0; r < ds.size(); ++r) labels.push_back(static_cast<char>(ds.label(r)));
  return {images, labels};
}

// Last n_val rows (file order) become the validation split.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, std::size_t n_val) {
  if (n_val == 0 || n_val >= data.size()) {
    throw DataError("split: need 0 < n_val < " + std::to_string(data.size()) + ", got " + std::to_string(n_val));
  }
  const std::size_t n_train = data.size() - n_val;
  LabeledDataset train{data.x.slice_rows(0, n_train), data.y.slice_rows(0, n_train), data.source, "train"};
  LabeledDataset val{data.x.slice_rows(n_train, n_val), data.y.slice_rows(n_train, n_val), data.source, "validation"};
  return {std::move(train), std::move(val)};
}

// ---------------------------------------------------------------------------
// Synthetic 2-D Gaussian mixture, one component per class.

struct MixtureSpec {
  std::vector<std::pair<double, double>> means = {{-2.0, -2.0}, {2.0, -2.0}, {-2.0, 2.0}, {2.0, 2.0}};
  double stddev = 0.5;
  std::size_t samples_per_class = 2000;
  std::uint64_t seed = 0;

  std::size_t classes() const { return means.size(); }

  void validate() const {
    if (means.empty()) throw ConfigError("mixture: need at least one class");
    if (!(stddev >= 0.0)) throw ConfigError("mixture: stddev must be non-negative");
    for (std::size_t i = 0; i < means.size(); ++i) {
      for (std::size_t j = i + 1; j < means.size(); ++j) {
        const double dist = std::hypot(means[i].first - means[j].first, means[i].second - means[j].second);
        if (dist < 6.0 * stddev) throw ConfigError("mixture: class means closer than 6 standard deviations");
      }
    }
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "kind=mixture\nclasses=" << means.size() << "\nstddev=" << stddev
       << "\nsamples_per_class=" << samples_per_class << "\nseed=" << seed << "\nmeans=";
    for (std::size_t i = 0; i < means.size(); ++i) os << (i ? " " : "") << means[i].first << ',' << means[i].second;
    os << '\n';
    return os.str();
  }
};

// Class-major rows: all of class 0, then class 1, ...
inline LabeledDataset synth_mixture(const MixtureSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed);
  const std::size_t k = spec.classes(), n = spec.samples_per_class;
  LabeledDataset ds;
  ds.x = Tensor<double>({k * n, 2});
  std::vector<std::size_t> labels(k * n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = c * n + i;
      ds.x(r, 0) = spec.means[c].first + spec.stddev * rng.normal();
      ds.x(r, 1) = spec.means[c].second + spec.stddev * rng.normal();
      labels[r] = c;
    }
  }
  ds.y = one_hot(labels, k);
  ds.source = "toy-mixture";
  ds.split = "all";
  return ds;
}

// Index of the mean closest (Euclidean) to (px, py); ties to the lower index.
inline std::size_t nearest_mean(const MixtureSpec& spec, double px, double py) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < spec.means.size(); ++c) {
    const double d = std::hypot(px - spec.means[c].first, py - spec.means[c].second);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Synthetic concept-embedding corpus: a stand-in for word vectors paired with
// image features. Conditioning y is a feature vector; data x is the
// embedding of the concept the feature depicts.

struct CorpusSpec {
  std::size_t n_concepts = 32;
  std::size_t embed_dim = 32;
  std::size_t feat_dim = 16;
  std::size_t samples_per_concept = 64;
  double feature_noise = 0.3;
  // Items depicting two concepts; each emits one row per concept.
  std::size_t multi_concept_items = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_concepts < 2) throw ConfigError("corpus: need at least 2 concepts");
    if (embed_dim == 0 || feat_dim == 0) throw ConfigError("corpus: dimensions must be positive");
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "kind=corpus\nn_concepts=" << n_concepts << "\nembed_dim=" << embed_dim << "\nfeat_dim=" << feat_dim
       << "\nsamples_per_concept=" << samples_per_concept << "\nfeature_noise=" << feature_noise
       << "\nmulti_concept_items=" << multi_concept_items << "\nseed=" << seed << '\n';
    return os.str();
  }
};

struct EmbeddingCorpus {
  CorpusSpec spec;
  Tensor<double> embeddings;        // [n_concepts, embed_dim], unit rows
  Tensor<double> prototypes;        // [n_concepts, feat_dim]
  LabeledDataset data;              // x = embedding, y = noisy feature
  std::vector<std::size_t> concept_of_row;
};

inline EmbeddingCorpus synth_embedding_corpus(const CorpusSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed);
  EmbeddingCorpus c;
  c.spec = spec;
  const std::size_t n = spec.n_concepts, e = spec.embed_dim, f = spec.feat_dim;

  // Gaussian directions, Gram-Schmidt orthogonalized while n <= e, then normalized.
  c.embeddings = Tensor<double>({n, e});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = c.embeddings.row(i);
    for (auto& v : row) v = rng.normal();
    for (std::size_t j = 0; j < std::min(i, e); ++j) {
      const auto prev = c.embeddings.row(j);
      double dot = 0;
      for (std::size_t k = 0; k < e; ++k) dot += row[k] * prev[k];
      for (std::size_t k = 0; k < e; ++k) row[k] -= dot * prev[k];
    }
    double norm = 0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : row) v /= norm;
  }

  c.prototypes = Tensor<double>({n, f});
  for (auto& v : c.prototypes.data()) v = rng.normal();

  std::vector<std::vector<double>> xs, ys;
  auto emit = [&](std::size_t concept_id, std::span<const double> feature) {
    const auto emb = c.embeddings.row(concept_id);
    xs.emplace_back(emb.begin(), emb.end());
    ys.emplace_back(feature.begin(), feature.end());
    c.concept_of_row.push_back(concept_id);
  };
  std::vector<double> feature(f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < spec.samples_per_concept; ++s) {
      for (std::size_t k = 0; k < f; ++k) feature[k] = c.prototypes(i, k) + spec.feature_noise * rng.normal();
      emit(i, feature);
    }
  }
  for (std::size_t m = 0; m < spec.multi_concept_items; ++m) {
    const std::size_t a = rng.below(n);
    std::size_t b = rng.below(n - 1);
    if (b >= a) ++b;
    for (std::size_t k = 0; k < f; ++k) {
      feature[k] = 0.5 * (c.prototypes(a, k) + c.prototypes(b, k)) + spec.feature_noise * rng.normal();
    }
    emit(a, feature);
    emit(b, feature);
  }

  const std::size_t rows = xs.size();
  c.data.x = Tensor<double>({rows, e});
  c.data.y = Tensor<double>({rows, f});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(xs[r].begin(), xs[r].end(), c.data.x.row(r).begin());
    std::copy(ys[r].begin(), ys[r].end(), c.data.y.row(r).begin());
  }
  c.data.source = "toy-embedding";
  c.data.split = "all";
  return c;
}

// Concept ids by descending cosine similarity; ties by ascending id.
inline std::vector<std::size_t> nearest_words(std::span<const double> query, const Tensor<double>& table,
                                              std::size_t k) {
  if (query.size() != table.cols()) throw DimensionError("nearest_words: query width does not match table");
  if (k > table.rows()) throw DomainError("nearest_words: k exceeds the number of concepts");
  double qn = 0;
  for (double v : query) qn += v * v;
  if (qn == 0.0) throw DomainError("nearest_words: zero-norm query");
  qn = std::sqrt(qn);
  std::vector<double> sim(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto row = table.row(i);
    double dot = 0, rn = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      dot += row[j] * query[j];
      rn += row[j] * row[j];
    }
    sim[i] = dot / (qn * std::sqrt(rn));
  }
  std::vector<std::size_t> ids(table.rows());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  ids.resize(k);
  return ids;
}

// ---------------------------------------------------------------------------
// Persistence in the CANV1 container.

inline Container dataset_container(const LabeledDataset& ds, const std::string& spec_text) {
  Container c;
  c.set_block("dataset", "source=" + ds.source + "\nsplit=" + ds.split + "\n");
  c.set_block("dataset.spec", spec_text);
  c.add_tensor("x", ds.x);
  c.add_tensor("y", ds.y);
  return c;
}

inline LabeledDataset dataset_from_container(const Container& c) {
  LabeledDataset ds;
  ds.x = c.tensor<double>("x");
  ds.y = c.tensor<double>("y");
  std::istringstream is(c.block("dataset"));
  std::string line;
  while (std::getline(is, line)) {
    if (line.starts_with("source=")) ds.source = line.substr(7);
    if (line.starts_with("split=")) ds.split = line.substr(6);
  }
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds, const std::string& spec_text) {
  dataset_container(ds, spec_text).save(path);
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_container(Container::load(path));
}

inline CorpusSpec parse_corpus_spec(const std::string& text) {
  CorpusSpec s;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "n_concepts") s.n_concepts = std::stoull(v);
    else if (k == "embed_dim") s.embed_dim = std::stoull(v);
    else if (k == "feat_dim") s.feat_dim = std::stoull(v);
    else if (k == "samples_per_concept") s.samples_per_concept = std::stoull(v);
    else if (k == "feature_noise") s.feature_noise = std::stod(v);
    else if (k == "multi_concept_items") s.multi_concept_items = std::stoull(v);
    else if (k == "seed") s.seed = std::stoull(v);
  }
  return s;
}

inline void save_corpus(const std::filesystem::path& path, const EmbeddingCorpus& corpus) {
  Container c = dataset_container(corpus.data, corpus.spec.to_text());
  c.add_tensor("embeddings", corpus.embeddings);
  c.add_tensor("prototypes", corpus.prototypes);
  Tensor<double> ids({corpus.concept_of_row.size()});
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<double>(corpus.concept_of_row[i]);
  c.add_tensor("concept_of_row", ids);
  c.save(path);
}

inline EmbeddingCorpus load_corpus(const std::filesystem::path& path) {
  const Container c = Container::load(path);
  EmbeddingCorpus corpus;
  corpus.spec = parse_corpus_spec(c.block("dataset.spec"));
  corpus.data = dataset_from_container(c);
  corpus.embeddings = c.tensor<double>("embeddings");
  corpus.prototypes = c.tensor<double>("prototypes");
  const auto ids = c.tensor<double>("concept_of_row");
  for (double v : ids.data()) corpus.concept_of_row.push_back(static_cast<std::size_t>(v));
  return corpus;
}

}  // namespace cgan
