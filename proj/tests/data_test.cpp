#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "cgan/data.hpp"
#include "support.hpp"

using namespace cgan;

namespace {

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

// Two 3x3 images with pixel bytes 0..8 and 247..255, labels 3 and 7.
std::pair<std::string, std::string> tiny_fixture() {
  std::string images, labels;
  put_be32(images, 0x803);
  put_be32(images, 2);
  put_be32(images, 3);
  put_be32(images, 3);
  for (int i = 0; i < 9; ++i) images.push_back(static_cast<char>(i));
  for (int i = 247; i < 256; ++i) images.push_back(static_cast<char>(i));
  put_be32(labels, 0x801);
  put_be32(labels, 2);
  labels.push_back(3);
  labels.push_back(7);
  return {images, labels};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cgan_data_test_" + name);
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Idx, TinyFixtureShapesAndScaling) {
  const auto [im, lb] = tiny_fixture();
  const auto ds = dataset_from_idx(im, lb);
  EXPECT_EQ(ds.x.shape(), (Shape{2, 9}));
  EXPECT_EQ(ds.y.shape(), (Shape{2, 10}));
  EXPECT_EQ(ds.x(0, 0), 0.0);
  EXPECT_EQ(ds.x(1, 8), 1.0);
  EXPECT_EQ(ds.x(0, 5), 5.0 / 255.0);
  EXPECT_EQ(ds.label(0), 3u);
  EXPECT_EQ(ds.label(1), 7u);
  EXPECT_TRUE(ds.one_hot());
}

TEST(Idx, ReserializationIsByteIdentical) {
  const auto [im, lb] = tiny_fixture();
  const auto [im2, lb2] = encode_idx(dataset_from_idx(im, lb), 3, 3);
  EXPECT_EQ(im2, im);
  EXPECT_EQ(lb2, lb);
}

TEST(Idx, WrongMagicNamesExpectedAndFound) {
  auto [im, lb] = tiny_fixture();
  im[3] = 0x01;
  const auto msg = message_of([&] { dataset_from_idx(im, lb); });
  EXPECT_NE(msg.find("0x00000803"), std::string::npos) << msg;
  EXPECT_NE(msg.find("0x00000801"), std::string::npos) << msg;
  EXPECT_THROW(dataset_from_idx(lb, lb), FormatError);
}

TEST(Idx, TruncationReportsByteOffset) {
  const auto [im, lb] = tiny_fixture();
  const std::string cut = im.substr(0, 20);
  const auto msg = message_of([&] { dataset_from_idx(cut, lb); });
  EXPECT_NE(msg.find("offset 20"), std::string::npos) << msg;
  EXPECT_THROW(dataset_from_idx(im.substr(0, 6), lb), FormatError);
  EXPECT_THROW(dataset_from_idx(im, lb.substr(0, 9)), FormatError);
}

TEST(Idx, CountMismatchRejected) {
  auto [im, lb] = tiny_fixture();
  lb[7] = 1;
  lb.pop_back();
  EXPECT_THROW(dataset_from_idx(im, lb), DataError);
}

TEST(Idx, MissingFileIsDataError) {
  EXPECT_THROW(load_idx("/nonexistent/images", "/nonexistent/labels"), DataError);
}

TEST(Idx, BundledSubsetMatchesIndependentByteCount) {
  const std::filesystem::path dir = std::filesystem::path(CGAN_SOURCE_DIR) / "data" / "mnist-subset";
  for (const auto& [prefix, per_class] : {std::pair<std::string, std::size_t>{"train", 400}, {"t10k", 100}}) {
    const auto ip = dir / (prefix + "-images-idx3-ubyte");
    const auto lp = dir / (prefix + "-labels-idx1-ubyte");
    const std::string raw_labels = read_file(lp);
    // Header read by hand: count at bytes 4..7.
    const std::size_t count = (static_cast<unsigned char>(raw_labels[4]) << 24) |
                              (static_cast<unsigned char>(raw_labels[5]) << 16) |
                              (static_cast<unsigned char>(raw_labels[6]) << 8) | static_cast<unsigned char>(raw_labels[7]);
    EXPECT_EQ(std::filesystem::file_size(ip), 16 + count * 784);
    EXPECT_EQ(raw_labels.size(), 8 + count);
    std::map<int, std::size_t> hist;
    for (std::size_t i = 8; i < raw_labels.size(); ++i) ++hist[raw_labels[i]];

    const auto ds = load_idx(ip, lp);
    EXPECT_EQ(ds.size(), count);
    EXPECT_EQ(count, per_class * 10);
    EXPECT_TRUE(ds.one_hot());
    std::map<int, std::size_t> parsed;
    for (std::size_t r = 0; r < ds.size(); ++r) ++parsed[static_cast<int>(ds.label(r))];
    EXPECT_EQ(parsed, hist);
    for (int c = 0; c < 10; ++c) EXPECT_EQ(hist[c], per_class);
    for (double v : ds.x.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Split, TailPartition) {
  RngStream rng(1);
  LabeledDataset ds{cgan::testing::random_tensor({10, 3}, rng), Tensor<double>({10, 2}, 0.0), "t", "all"};
  for (std::size_t r = 0; r < 10; ++r) ds.y(r, r % 2) = 1.0;
  const auto [train, val] = split(ds, 4);
  EXPECT_EQ(train.size(), 6u);
  EXPECT_EQ(val.size(), 4u);
  EXPECT_EQ(val.split, "validation");
  for (std::size_t r = 0; r < 6; ++r) EXPECT_EQ(train.x(r, 0), ds.x(r, 0));
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(val.x(r, 2), ds.x(6 + r, 2));
  const auto [t2, v2] = split(ds, 4);
  EXPECT_TRUE(bitwise_equal(t2.x, train.x));
  EXPECT_TRUE(bitwise_equal(v2.y, val.y));
  EXPECT_EQ(split(ds, 9).first.size(), 1u);
  EXPECT_THROW(split(ds, 0), DataError);
  EXPECT_THROW(split(ds, 10), DataError);
}

TEST(Mixture, ZeroStddevCollapsesToMeans) {
  MixtureSpec spec;
  spec.stddev = 0.0;
  spec.samples_per_class = 5;
  const auto ds = synth_mixture(spec);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    EXPECT_EQ(ds.x(r, 0), spec.means[ds.label(r)].first);
    EXPECT_EQ(ds.x(r, 1), spec.means[ds.label(r)].second);
  }
}

TEST(Mixture, EmpiricalMeansWithinCltBound) {
  MixtureSpec spec;
  spec.seed = 11;
  const auto ds = synth_mixture(spec);
  EXPECT_EQ(ds.size(), 8000u);
  EXPECT_TRUE(ds.one_hot());
  const double bound = 4.0 * spec.stddev / std::sqrt(static_cast<double>(spec.samples_per_class));
  for (std::size_t c = 0; c < 4; ++c) {
    double sx = 0, sy = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      if (ds.label(r) != c) continue;
      sx += ds.x(r, 0);
      sy += ds.x(r, 1);
    }
    EXPECT_LT(std::abs(sx / 2000.0 - spec.means[c].first), bound);
    EXPECT_LT(std::abs(sy / 2000.0 - spec.means[c].second), bound);
  }
}

TEST(Mixture, RealDataNearestCenterAccuracy) {
  MixtureSpec spec;
  spec.seed = 12;
  const auto ds = synth_mixture(spec);
  std::size_t hit = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    // Independent nearest-center rule over squared distances.
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < spec.classes(); ++c) {
      const double dx = ds.x(r, 0) - spec.means[c].first, dy = ds.x(r, 1) - spec.means[c].second;
      if (dx * dx + dy * dy < bd) {
        bd = dx * dx + dy * dy;
        best = c;
      }
    }
    EXPECT_EQ(best, nearest_mean(spec, ds.x(r, 0), ds.x(r, 1)));
    hit += best == ds.label(r);
  }
  EXPECT_GE(static_cast<double>(hit) / static_cast<double>(ds.size()), 0.999);
}

TEST(Mixture, SeedDeterminismAndSeparationInvariant) {
  MixtureSpec spec;
  spec.seed = 3;
  EXPECT_TRUE(bitwise_equal(synth_mixture(spec).x, synth_mixture(spec).x));
  spec.seed = 4;
  MixtureSpec other;
  other.seed = 3;
  EXPECT_FALSE(bitwise_equal(synth_mixture(spec).x, synth_mixture(other).x));
  spec.stddev = 1.0;  // separation 4 < 6 sigma
  EXPECT_THROW(synth_mixture(spec), ConfigError);
}

TEST(Corpus, UnitNormNearOrthogonalEmbeddings) {
  CorpusSpec spec;
  spec.seed = 5;
  const auto c = synth_embedding_corpus(spec);
  ASSERT_EQ(c.embeddings.shape(), (Shape{32, 32}));
  for (std::size_t i = 0; i < 32; ++i) {
    double n = 0;
    for (double v : c.embeddings.row(i)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < 32; ++k) dot += c.embeddings(i, k) * c.embeddings(j, k);
      EXPECT_LT(dot, 0.5);
    }
  }
}

TEST(Corpus, RowsPairFeaturesWithConceptEmbeddings) {
  CorpusSpec spec;
  spec.n_concepts = 5;
  spec.embed_dim = 6;
  spec.feat_dim = 4;
  spec.samples_per_concept = 3;
  spec.multi_concept_items = 2;
  const auto c = synth_embedding_corpus(spec);
  ASSERT_EQ(c.data.size(), 5u * 3 + 2 * 2);
  EXPECT_EQ(c.data.x.cols(), 6u);
  EXPECT_EQ(c.data.y.cols(), 4u);
  for (std::size_t r = 0; r < c.data.size(); ++r) {
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(c.data.x(r, k), c.embeddings(c.concept_of_row[r], k));
  }
  // Each multi-concept item emits two rows sharing a feature for two distinct concepts.
  for (std::size_t r = 15; r < 19; r += 2) {
    EXPECT_NE(c.concept_of_row[r], c.concept_of_row[r + 1]);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(c.data.y(r, k), c.data.y(r + 1, k));
  }
  CorpusSpec bad;
  bad.n_concepts = 1;
  EXPECT_THROW(synth_embedding_corpus(bad), ConfigError);
}

TEST(Corpus, SaveLoadRoundTripIsBitExact) {
  CorpusSpec spec;
  spec.n_concepts = 7;
  spec.seed = 9;
  const auto c = synth_embedding_corpus(spec);
  const auto path = temp_path("corpus.canv");
  save_corpus(path, c);
  const auto back = load_corpus(path);
  std::filesystem::remove(path);
  EXPECT_TRUE(bitwise_equal(back.embeddings, c.embeddings));
  EXPECT_TRUE(bitwise_equal(back.prototypes, c.prototypes));
  EXPECT_TRUE(bitwise_equal(back.data.x, c.data.x));
  EXPECT_TRUE(bitwise_equal(back.data.y, c.data.y));
  EXPECT_EQ(back.concept_of_row, c.concept_of_row);
  EXPECT_EQ(back.spec.to_text(), c.spec.to_text());
  EXPECT_EQ(back.data.source, "toy-embedding");

  MixtureSpec ms;
  ms.samples_per_class = 10;
  const auto mix = synth_mixture(ms);
  const auto mpath = temp_path("mixture.canv");
  save_dataset(mpath, mix, ms.to_text());
  const auto mback = load_dataset(mpath);
  std::filesystem::remove(mpath);
  EXPECT_TRUE(bitwise_equal(mback.x, mix.x));
  EXPECT_TRUE(bitwise_equal(mback.y, mix.y));
}

TEST(NearestWords, SelfQueryRanksFirstAndScaleInvariant) {
  CorpusSpec spec;
  spec.seed = 2;
  const auto c = synth_embedding_corpus(spec);
  for (std::size_t i = 0; i < spec.n_concepts; ++i) {
    const auto q = c.embeddings.row(i);
    EXPECT_EQ(nearest_words(q, c.embeddings, 20).front(), i);
  }
  // Scale invariance on generic queries; a self-query's remaining cosines are
  // all zero up to rounding, so their order carries no information.
  RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(spec.embed_dim);
    for (auto& v : q) v = rng.normal();
    const auto ranked = nearest_words(q, c.embeddings, 20);
    for (auto& v : q) v *= 37.5;
    EXPECT_EQ(nearest_words(q, c.embeddings, 20), ranked);
  }
}

TEST(NearestWords, MatchesAllPairsOracle) {
  CorpusSpec spec;
  spec.seed = 4;
  const auto c = synth_embedding_corpus(spec);
  RngStream rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q(spec.embed_dim);
    for (auto& v : q) v = rng.normal();
    // Oracle: count, for each concept, how many others strictly beat it or tie with a lower id.
    std::vector<double> cos(spec.n_concepts);
    double qn = 0;
    for (double v : q) qn += v * v;
    for (std::size_t i = 0; i < spec.n_concepts; ++i) {
      double dot = 0, n = 0;
      for (std::size_t k = 0; k < spec.embed_dim; ++k) {
        dot += q[k] * c.embeddings(i, k);
        n += c.embeddings(i, k) * c.embeddings(i, k);
      }
      cos[i] = dot / std::sqrt(qn * n);
    }
    std::vector<std::size_t> oracle(spec.n_concepts);
    for (std::size_t i = 0; i < spec.n_concepts; ++i) {
      std::size_t rank = 0;
      for (std::size_t j = 0; j < spec.n_concepts; ++j) rank += cos[j] > cos[i] || (cos[j] == cos[i] && j < i);
      oracle[rank] = i;
    }
    oracle.resize(20);
    ASSERT_EQ(nearest_words(q, c.embeddings, 20), oracle) << trial;
  }
}

TEST(NearestWords, TiesByAscendingIdAndErrors) {
  const auto table = Tensor<double>::matrix({{1, 0}, {0, 1}, {1, 0}, {-1, 0}});
  const std::vector<double> q{2, 0};
  EXPECT_EQ(nearest_words(q, table, 4), (std::vector<std::size_t>{0, 2, 1, 3}));
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(nearest_words(zero, table, 2), DomainError);
  EXPECT_THROW(nearest_words(q, table, 5), DomainError);
  const std::vector<double> wide{1, 0, 0};
  EXPECT_THROW(nearest_words(wide, table, 2), DimensionError);
}
