#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cfardet/config.hpp"
#include "cfardet/eval.hpp"
#include "cfardet/model_sim.hpp"
#include "cfardet/training.hpp"

namespace cfardet {

// ============================================================================
// Named experiments assembled from declarative configs, plus the subcommand
// drivers behind the CLI. Experiments: "dc-noise" (constant level in white
// or contaminated noise), "adaptive" (signal in estimated covariance),
// "material" (three synthetic clutter classes), and "theory" (check
// battery, handled by cmd_theory directly).
// ============================================================================

struct Experiment {
  std::string name;
  std::unique_ptr<const Model> model;
  FeatureMap feature_map;   // network input layout for learned detectors
  VectorXd signature;       // adaptive experiment: s, empty otherwise
  TrainConfig train;        // defaults overlaid with config values
  int eval_trials = 10000;
  double pauc_cap = 0.05;
  double lamf_lambda = 0.03;
  std::vector<std::string> detectors;  // evaluation list, config order
  Config resolved;  // every effective key (seed included, scheduling excluded)
};

// Builds the experiment named by the config's "experiment" key with the run
// seed folded into the resolved config. Unknown keys are rejected.
Experiment make_experiment(const Config& config, std::uint64_t seed);

// Detector registry: "glrt_dc" | "amf" | "kelly" | "lamf" |
// "net=PATH" | "cfarnet=PATH". Learned entries load a serialized detector
// and validate its feature map against the experiment's.
DetectorFn make_detector(const std::string& name, const Experiment& experiment);

// Output subdirectory name: text before '=' ("cfarnet=out/x.detector" ->
// "cfarnet").
std::string detector_display_name(const std::string& name);

// Subcommand drivers. Each writes its artifacts under out_dir (created if
// missing) along with config.resolved and run_info.txt, and returns the
// process exit code. Errors surface as exceptions for the CLI to report.
int cmd_train(const Config& config, const std::string& out_dir,
              const std::optional<std::uint64_t>& flag_seed, int jobs);
int cmd_evaluate(const Config& config, const std::string& out_dir,
                 const std::optional<std::uint64_t>& flag_seed, int jobs);
int cmd_theory(const Config& config, const std::string& out_dir,
               const std::optional<std::uint64_t>& flag_seed, int jobs);
int cmd_generate(const Config& config, const std::string& out_dir,
                 const std::optional<std::uint64_t>& flag_seed, int jobs);

}  // namespace cfardet
