#pragma once

// Command-line run configuration and its canonical text form.
//
// The text form is one key=value per line, '#' starts a comment line.
// Training hyperparameters appear under a "train." prefix; the run seed is
// also the training seed, so it appears once as "seed".

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgan/errors.hpp"
#include "cgan/tags.hpp"
#include "cgan/tasks.hpp"
#include "cgan/trainer.hpp"

#ifndef CGAN_DEFAULT_DATA_DIR
#define CGAN_DEFAULT_DATA_DIR "data/mnist-subset"
#endif

namespace cgan {

struct RunConfig {
  std::string command = "train";
  Task task = Task::mnist;
  std::uint64_t seed = 0;

  // Inputs.
  std::string data_dir = CGAN_DEFAULT_DATA_DIR;  // MNIST IDX files
  std::size_t val_size = 500;                    // tail of the training file held out for validation
  std::uint64_t data_seed = 1;                   // synthetic task data
  std::string checkpoint;                        // sample, eval-parzen, tags
  std::string resume;                            // train
  std::string corpus;                            // tags; empty regenerates from data_seed

  // Outputs.
  std::string out_dir = "run";  // train
  std::string out;              // sample, eval-parzen, tags
  std::uint64_t checkpoint_every = 2000;  // steps between periodic checkpoints; 0 disables them

  // sample
  std::size_t n_per_class = 10;
  // eval-parzen
  std::size_t samples_per_class = 1000;
  std::string stub;  // replay | uniform; empty uses the checkpoint
  // tags
  std::size_t feature = 0;  // prototype index into the corpus
  std::string feature_file;
  TagOptions tags;

  GanConfig train;

  static RunConfig defaults(Task t) {
    RunConfig r;
    r.task = t;
    r.train = default_config(t);
    r.seed = r.train.seed;
    return r;
  }

  static std::vector<std::string> keys() {
    std::vector<std::string> k = {"command",  "task",         "seed",        "data_dir",   "val_size",
                                  "data_seed", "checkpoint",  "resume",      "corpus",     "out_dir",
                                  "out",       "checkpoint_every", "n_per_class", "samples_per_class", "stub",
                                  "feature",   "feature_file", "tag_samples", "tag_near",   "tag_out"};
    for (const char* g : GanConfig::kKeys) {
      if (std::string(g) != "seed") k.push_back(std::string("train.") + g);
    }
    return k;
  }

  bool set(const std::string& key, const std::string& v) {
    using detail::parse_uint;
    if (key == "command") command = v;
    else if (key == "task") task = parse_task(v);
    else if (key == "seed") seed = train.seed = parse_uint(key, v);
    else if (key == "data_dir") data_dir = v;
    else if (key == "val_size") val_size = parse_uint(key, v);
    else if (key == "data_seed") data_seed = parse_uint(key, v);
    else if (key == "checkpoint") checkpoint = v;
    else if (key == "resume") resume = v;
    else if (key == "corpus") corpus = v;
    else if (key == "out_dir") out_dir = v;
    else if (key == "out") out = v;
    else if (key == "checkpoint_every") checkpoint_every = parse_uint(key, v);
    else if (key == "n_per_class") n_per_class = parse_uint(key, v);
    else if (key == "samples_per_class") samples_per_class = parse_uint(key, v);
    else if (key == "stub") stub = v;
    else if (key == "feature") feature = parse_uint(key, v);
    else if (key == "feature_file") feature_file = v;
    else if (key == "tag_samples") tags.n_samples = parse_uint(key, v);
    else if (key == "tag_near") tags.k_near = parse_uint(key, v);
    else if (key == "tag_out") tags.k_out = parse_uint(key, v);
    else if (key.starts_with("train.") && key != "train.seed") return train.set(key.substr(6), v);
    else return false;
    return true;
  }

  void validate() const {
    train.validate();
    if (stub != "" && stub != "replay" && stub != "uniform") {
      throw ConfigError("stub must be replay or uniform, got '" + stub + "'");
    }
    if (n_per_class == 0) throw ConfigError("n_per_class must be positive");
    if (samples_per_class == 0) throw ConfigError("samples_per_class must be positive");
    if (tags.n_samples == 0 || tags.k_near == 0 || tags.k_out == 0) throw ConfigError("tag counts must be positive");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "command=" << command << "\ntask=" << to_string(task) << "\nseed=" << seed << "\ndata_dir=" << data_dir
       << "\nval_size=" << val_size << "\ndata_seed=" << data_seed << "\ncheckpoint=" << checkpoint
       << "\nresume=" << resume << "\ncorpus=" << corpus << "\nout_dir=" << out_dir << "\nout=" << out
       << "\ncheckpoint_every=" << checkpoint_every << "\nn_per_class=" << n_per_class
       << "\nsamples_per_class=" << samples_per_class << "\nstub=" << stub << "\nfeature=" << feature
       << "\nfeature_file=" << feature_file << "\ntag_samples=" << tags.n_samples << "\ntag_near=" << tags.k_near
       << "\ntag_out=" << tags.k_out << '\n';
    std::istringstream g(train.to_text());
    std::string line;
    while (std::getline(g, line)) {
      if (!line.starts_with("seed=")) os << "train." << line << '\n';
    }
    return os.str();
  }
};

// key=value pairs of a configuration text, in file order.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("config line " + std::to_string(n) + ": expected key=value, got '" + line + "'");
    }
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

// Task defaults, then file values, then overrides. The task is taken from the
// overrides if given there, else from the file.
inline RunConfig resolve_run_config(const std::vector<std::pair<std::string, std::string>>& file,
                                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  Task task = Task::mnist;
  for (const auto* src : {&file, &overrides}) {
    for (const auto& [k, v] : *src) {
      if (k == "task") task = parse_task(v);
    }
  }
  RunConfig rc = RunConfig::defaults(task);
  for (const auto* src : {&file, &overrides}) {
    for (const auto& [k, v] : *src) {
      if (!rc.set(k, v)) throw ConfigError("unknown configuration key '" + k + "'");
    }
  }
  rc.validate();
  return rc;
}

}  // namespace cgan
