// Command-line tool: train, sample, eval-parzen, gradcheck, tags, plot.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cgan/commands.hpp"

namespace {

// "train.lr_initial" -> "--lr-initial", "data_dir" -> "--data-dir".
std::string flag_for(std::string key) {
  if (key.starts_with("train.")) key = key.substr(6);
  for (auto& ch : key) {
    if (ch == '_') ch = '-';
  }
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional adversarial nets: training, sampling and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "Canonical text configuration file; flags override its values");

  // One flag per configuration key.
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> flag_options;
  for (const auto& key : cgan::RunConfig::keys()) {
    if (key == "command") continue;
    flag_options.emplace_back(key, app.add_option(flag_for(key), flag_values[key], key));
  }
  std::string epochs, steps;
  auto* epochs_opt = app.add_option("--epochs", epochs, "Same as --max-epochs");
  auto* steps_opt = app.add_option("--steps", steps, "Same as --max-steps");

  auto* train = app.add_subcommand("train", "Train a generator/discriminator pair");
  auto* sample = app.add_subcommand("sample", "Write a PGM grid of generated digits, one row per label");
  auto* eval = app.add_subcommand("eval-parzen", "Parzen-window log-likelihood of generated samples on MNIST test");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks on toy-width architectures");
  bool inject_fault = false;
  grad->add_flag("--inject-fault", inject_fault)->group("");
  auto* tags = app.add_subcommand("tags", "Top tags for a conditioning feature of a word-vector generator");
  auto* plot = app.add_subcommand("plot", "Render a metrics stream to an SVG chart");
  std::string metrics_path;
  plot->add_option("--metrics", metrics_path, "Metrics stream written by train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cgan::kExitOk : cgan::kExitConfig;
  }

  try {
    std::vector<std::pair<std::string, std::string>> file, overrides;
    if (!config_path.empty()) file = cgan::parse_key_values(cgan::read_file(config_path));
    for (const auto& [key, opt] : flag_options) {
      if (opt->count() > 0) overrides.emplace_back(key, flag_values[key]);
    }
    if (epochs_opt->count() > 0) overrides.emplace_back("train.max_epochs", epochs);
    if (steps_opt->count() > 0) overrides.emplace_back("train.max_steps", steps);

    const auto* sub = app.get_subcommands().front();
    overrides.emplace_back("command", sub->get_name());
    const cgan::RunConfig rc = cgan::resolve_run_config(file, overrides);

    if (sub == train) return cgan::cmd_train(rc, std::cout);
    if (sub == sample) return cgan::cmd_sample(rc, std::cout);
    if (sub == eval) return cgan::cmd_eval_parzen(rc, std::cout);
    if (sub == grad) return cgan::cmd_gradcheck(rc, std::cout, inject_fault);
    if (sub == tags) return cgan::cmd_tags(rc, std::cout);
    if (sub == plot) return cgan::cmd_plot(metrics_path, rc.out.empty() ? "metrics.svg" : rc.out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "cgan: error: " << e.what() << '\n';
    return cgan::exit_code_for(e);
  }
  return cgan::kExitConfig;
}
