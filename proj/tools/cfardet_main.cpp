// Command-line front end: train detectors, evaluate them on an experiment's
// performance surface, run the theory check battery, or dump a training batch.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfardet/config.hpp"
#include "cfardet/experiments.hpp"
#include "cfardet/version.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void add_common_options(CLI::App* app, CliOptions& opts) {
  app->add_option("--config", opts.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--out", opts.out_dir, "output directory")->required();
  app->add_option("--seed", opts.seed,
                  "run seed (overrides config and CFARDET_SEED)");
  app->add_option("--jobs", opts.jobs, "worker threads for Monte Carlo loops")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CFAR-constrained detector workbench"};
  app.set_version_flag("--version", cfardet::kVersionString);
  app.require_subcommand(1);

  CliOptions train_opts;
  CLI::App* train = app.add_subcommand(
      "train", "train a detector and write it with its training log");
  add_common_options(train, train_opts);

  CliOptions eval_opts;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "score detectors and write ROC/CFAR/partial-AUC reports");
  add_common_options(evaluate, eval_opts);

  CliOptions theory_opts;
  CLI::App* theory = app.add_subcommand(
      "theory", "run the identity and asymptotics check battery");
  add_common_options(theory, theory_opts);

  CliOptions generate_opts;
  CLI::App* generate = app.add_subcommand(
      "generate", "sample one training batch and write it as CSV");
  add_common_options(generate, generate_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      cfardet::Config config = cfardet::Config::load(train_opts.config_path);
      return cfardet::cmd_train(config, train_opts.out_dir, train_opts.seed,
                                train_opts.jobs);
    }
    if (evaluate->parsed()) {
      cfardet::Config config = cfardet::Config::load(eval_opts.config_path);
      return cfardet::cmd_evaluate(config, eval_opts.out_dir, eval_opts.seed,
                                   eval_opts.jobs);
    }
    if (theory->parsed()) {
      cfardet::Config config = cfardet::Config::load(theory_opts.config_path);
      return cfardet::cmd_theory(config, theory_opts.out_dir, theory_opts.seed,
                                 theory_opts.jobs);
    }
    cfardet::Config config = cfardet::Config::load(generate_opts.config_path);
    return cfardet::cmd_generate(config, generate_opts.out_dir,
                                 generate_opts.seed, generate_opts.jobs);
  } catch (const std::exception& e) {
    std::cerr << "cfardet: " << e.what() << "\n";
    return 1;
  }
}
