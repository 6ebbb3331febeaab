#pragma once

// Subcommands of the command-line tool. Each takes a resolved RunConfig,
// writes its artifacts atomically, logs to `out`, and returns an exit code.
// Library errors propagate; exit_code_for maps them onto the exit contract.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgan/container.hpp"
#include "cgan/data.hpp"
#include "cgan/errors.hpp"
#include "cgan/gradcheck_suite.hpp"
#include "cgan/parzen.hpp"
#include "cgan/pgm.hpp"
#include "cgan/run_config.hpp"
#include "cgan/tags.hpp"
#include "cgan/tasks.hpp"
#include "cgan/trainer.hpp"

namespace cgan {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumeric = 3 };

// Config and argument errors -> 1, data and format errors -> 2, numeric -> 3.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kExitData;
  return kExitConfig;
}

// ---------------------------------------------------------------------------
// Inputs per task.

struct TaskData {
  LabeledDataset train;
  std::optional<LabeledDataset> val;
  std::optional<EmbeddingCorpus> corpus;
};

inline fs::path idx_path(const RunConfig& rc, const char* name) { return fs::path(rc.data_dir) / name; }

inline LabeledDataset load_mnist_train_file(const RunConfig& rc) {
  return load_idx(idx_path(rc, "train-images-idx3-ubyte"), idx_path(rc, "train-labels-idx1-ubyte"));
}

inline LabeledDataset load_mnist_test_file(const RunConfig& rc) {
  return load_idx(idx_path(rc, "t10k-images-idx3-ubyte"), idx_path(rc, "t10k-labels-idx1-ubyte"));
}

inline TaskData load_task_data(const RunConfig& rc) {
  TaskData td;
  switch (rc.task) {
    case Task::mnist: {
      auto [tr, val] = split(load_mnist_train_file(rc), rc.val_size);
      td.train = std::move(tr);
      td.val = std::move(val);
      break;
    }
    case Task::toy_mixture: {
      MixtureSpec ms;
      ms.seed = rc.data_seed;
      td.train = synth_mixture(ms);
      break;
    }
    case Task::toy_embedding: {
      CorpusSpec cs;
      cs.seed = rc.data_seed;
      td.corpus = synth_embedding_corpus(cs);
      td.train = td.corpus->data;
      break;
    }
  }
  return td;
}

inline std::string checkpoint_name(std::uint64_t step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint-%08" PRIu64 ".cgan", step);
  return buf;
}

inline bool is_image_generator(const NetSpec& s) {
  return s.role == NetRole::generator && s.noise && s.output_width == 784 && s.branch_b.input_width == 10 &&
         s.output_activation == Activation::sigmoid;
}

inline bool is_vector_generator(const NetSpec& s) {
  return s.role == NetRole::generator && s.noise && s.output_activation == Activation::linear;
}

inline Net<float> load_generator(const std::string& path) {
  if (path.empty()) throw ConfigError("a checkpoint path is required");
  return load_net<float>(Container::load(path), "gen");
}

inline void write_text_atomic(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

// Records from a metrics stream, one map per line.
inline std::vector<std::map<std::string, double>> read_metrics(const std::string& text) {
  std::vector<std::map<std::string, double>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::map<std::string, double> rec;
    for (auto& [k, v] : parse_metrics_line(line)) rec[k] = v;
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(RunConfig rc, std::ostream& log) {
  const TaskData td = load_task_data(rc);
  const LabeledDataset* val = td.val ? &*td.val : nullptr;
  const auto [gs, ds] = task_specs(rc.task, td.corpus ? td.corpus->spec : CorpusSpec{});

  std::optional<Trainer> trainer;
  if (rc.resume.empty()) {
    trainer.emplace(make_trainer(gs, ds, rc.train, td.train, val));
  } else {
    trainer.emplace(Trainer::resume(Container::load(rc.resume), td.train, val));
    trainer->set_budget(rc.train.max_epochs, rc.train.max_steps);
  }
  Trainer& t = *trainer;
  // The checkpoint's hyperparameters win on resume; only the budget is taken
  // from the command line.
  rc.train = t.config();
  rc.seed = rc.train.seed;

  const fs::path dir = rc.out_dir;
  fs::create_directories(dir);
  write_text_atomic(dir / "run.config", rc.to_text());
  if (td.corpus) save_corpus(dir / "corpus.cgan", *td.corpus);

  const std::uint64_t start = t.state().step;
  std::string metrics;
  if (!rc.resume.empty() && fs::exists(dir / "metrics.txt")) {
    std::istringstream is(read_file(dir / "metrics.txt"));
    std::string line;
    while (std::getline(is, line)) {
      const auto rec = parse_metrics_line(line);
      if (!rec.empty() && rec.front().first == "step" && rec.front().second <= static_cast<double>(start)) {
        metrics += line + '\n';
      }
    }
  }

  auto save_checkpoint = [&] {
    t.checkpoint().save(dir / checkpoint_name(t.state().step));
    if (!metrics.empty()) write_text_atomic(dir / "metrics.txt", metrics);
  };
  if (rc.resume.empty()) save_checkpoint();

  std::uint64_t last_saved = start;
  try {
    while (!t.finished()) {
      const StepMetrics m = t.step();
      metrics += m.to_line() + '\n';
      if (m.val_ll && t.state().best_step == m.step) {
        Container best;
        best.set_block("config", t.config().to_text());
        best.set_block("best", "best_step=" + std::to_string(t.state().best_step) +
                                   "\nbest_ll=" + detail::format_double(t.state().best_ll) + '\n');
        store_net(best, "gen", *t.state().best_gen);
        best.save(dir / "best.cgan");
        log << "step " << m.step << ": validation log-likelihood " << *m.val_ll << " (new best)\n";
      }
      const bool due = rc.checkpoint_every != 0 && m.step % rc.checkpoint_every == 0;
      if (due) {
        save_checkpoint();
        last_saved = m.step;
      }
    }
  } catch (const NumericError&) {
    write_text_atomic(dir / "metrics.txt", metrics);
    throw;
  }

  if (t.state().step != start) {
    if (last_saved != t.state().step) save_checkpoint();
    t.checkpoint().save(dir / "final.cgan");
    write_text_atomic(dir / "metrics.txt", metrics);
    write_text_atomic(dir / "metrics.svg", metrics_svg(read_metrics(metrics)));
  }
  log << "trained " << to_string(rc.task) << " from step " << start << " to step " << t.state().step << " (epoch "
      << t.state().epoch << "); outputs in " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sample

// Row r of the grid holds n_per_class samples conditioned on label r.
inline Tensor<double> sample_grid_images(const Net<float>& gen, std::size_t n_per_class, RngStream& rng) {
  if (!is_image_generator(gen.spec())) {
    throw ConfigError("sample: the checkpoint does not hold an image-mode (MNIST) generator");
  }
  const std::size_t n = 10 * n_per_class;
  Tensor<float> y({n, 10});
  for (std::size_t r = 0; r < n; ++r) y(r, r / n_per_class) = 1.0f;
  const auto z = sample_noise<float>(*gen.spec().noise, n, rng);
  return generate(gen, z, y, Mode::eval, rng).cast<double>();
}

inline int cmd_sample(const RunConfig& rc, std::ostream& log) {
  const auto gen = load_generator(rc.checkpoint);
  RngStream rng(rc.seed);
  const auto images = sample_grid_images(gen, rc.n_per_class, rng);
  GridLayout layout;
  layout.cols = rc.n_per_class;
  const fs::path out = rc.out.empty() ? "samples.pgm" : rc.out;
  write_file_atomic(out, encode_pgm_grid(images, layout));
  write_text_atomic(out.string() + ".config", rc.to_text());
  log << "wrote " << layout.width() << "x" << layout.height() << " grid to " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval-parzen

inline constexpr const char* kPublishedReference =
    "# published reference values (full MNIST, 1000 samples per class, not comparable to desk-scale runs):\n"
    "#   conditional adversarial nets 132 +- 1.8\n"
    "#   adversarial nets 225 +- 2\n";

inline int cmd_eval_parzen(const RunConfig& rc, std::ostream& log) {
  const auto [train, val] = split(load_mnist_train_file(rc), rc.val_size);
  const auto test = load_mnist_test_file(rc);

  std::optional<Net<double>> gen;
  ConditionalSampler sampler;
  if (rc.stub == "replay") {
    sampler = replay_sampler(train);
  } else if (rc.stub == "uniform") {
    sampler = uniform_sampler(test.data_width());
  } else {
    const auto g = load_generator(rc.checkpoint);
    if (!is_image_generator(g.spec())) {
      throw ConfigError("eval-parzen: the checkpoint does not hold an image-mode (MNIST) generator");
    }
    gen = g.cast<double>();
    sampler = generator_sampler(*gen);
  }
  ProtocolOptions opt;
  opt.samples_per_class = rc.samples_per_class;
  RngStream rng(rc.seed);
  const auto report = parzen_protocol(sampler, test, val, rng, opt);

  const std::string text = report.to_text();
  if (!rc.out.empty()) {
    write_text_atomic(rc.out, text);
    write_text_atomic(rc.out + ".config", rc.to_text());
  }
  log << text << kPublishedReference;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

inline int cmd_gradcheck(const RunConfig& rc, std::ostream& log, bool inject_fault = false) {
  SuiteOptions opt;
  opt.seed = rc.seed == 0 ? 1 : rc.seed;
  if (inject_fault) opt.fault = std::make_pair(Primitive::affine, 1.01);
  const auto cases = run_gradcheck_suite(opt);
  double worst = 0.0;
  bool ok = true;
  char buf[256];
  for (const auto& c : cases) {
    log << c.name << (c.report.passed ? "  ok" : "  FAILED") << '\n';
    for (const auto& tc : c.report.tensors) {
      std::snprintf(buf, sizeof buf, "  %-40s checked=%zu excluded=%zu max_rel_error=%.3e\n", tc.name.c_str(),
                    tc.checked, tc.excluded, tc.max_rel_error);
      log << buf;
    }
    if (!c.report.passed && !c.report.failure.empty()) log << "  " << c.report.failure << '\n';
    worst = std::max(worst, c.report.max_rel_error);
    ok = ok && c.report.passed;
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e (tolerance %.0e): %s\n", worst, opt.check.tolerance,
                ok ? "pass" : "FAIL");
  log << buf;
  return ok ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
// tags

inline std::vector<double> read_feature_file(const std::string& path) {
  std::istringstream is(read_file(path));
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(detail::parse_double("feature_file", tok));
  return out;
}

inline std::string format_tags(const std::vector<TagCount>& tags, std::size_t n_samples) {
  std::ostringstream os;
  os << "rank concept count\n";
  for (std::size_t i = 0; i < tags.size(); ++i) {
    os << i + 1 << ' ' << tags[i].concept_id << ' ' << tags[i].count << '\n';
  }
  os << "# votes out of " << n_samples << " samples\n";
  return os.str();
}

inline int cmd_tags(const RunConfig& rc, std::ostream& log) {
  const auto gen = load_generator(rc.checkpoint);
  if (!is_vector_generator(gen.spec())) {
    throw ConfigError("tags: the checkpoint does not hold a word-vector generator");
  }
  EmbeddingCorpus corpus;
  if (rc.corpus.empty()) {
    CorpusSpec cs;
    cs.seed = rc.data_seed;
    corpus = synth_embedding_corpus(cs);
  } else {
    corpus = load_corpus(rc.corpus);
  }
  if (gen.spec().output_width != corpus.embeddings.cols()) {
    throw ConfigError("tags: the checkpoint does not hold a word-vector generator for this corpus (outputs " +
                      std::to_string(gen.spec().output_width) + " values, embeddings have " +
                      std::to_string(corpus.embeddings.cols()) + ")");
  }
  std::vector<double> feature;
  if (!rc.feature_file.empty()) {
    feature = read_feature_file(rc.feature_file);
  } else {
    if (rc.feature >= corpus.prototypes.rows()) {
      throw ConfigError("tags: feature index " + std::to_string(rc.feature) + " out of range (corpus has " +
                        std::to_string(corpus.prototypes.rows()) + " concepts)");
    }
    const auto row = corpus.prototypes.row(rc.feature);
    feature.assign(row.begin(), row.end());
  }
  RngStream rng(rc.seed);
  const auto tags = top_tags_protocol(gen, feature, corpus.embeddings, rng, rc.tags);
  const std::string text = format_tags(tags, rc.tags.n_samples);
  if (!rc.out.empty()) {
    write_text_atomic(rc.out, text);
    write_text_atomic(rc.out + ".config", rc.to_text());
  }
  log << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot

inline int cmd_plot(const std::string& metrics_path, const std::string& out, std::ostream& log) {
  const auto records = read_metrics(read_file(metrics_path));
  write_text_atomic(out, metrics_svg(records));
  log << "wrote chart of " << records.size() << " records to " << out << '\n';
  return kExitOk;
}

}  // namespace cgan
