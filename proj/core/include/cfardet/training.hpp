#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfardet/classical_detectors.hpp"
#include "cfardet/mmd.hpp"
#include "cfardet/model_sim.hpp"
#include "cfardet/neuralnet.hpp"

namespace cfardet {

// ============================================================================
// BCE training with an optional MMD CFAR penalty.
//
// Each step draws a fresh batch of parameter points from the fake prior
// (labels Bernoulli(prior_y1), nuisances uniform over their domains) with M
// replicate observations per point. The loss is
//     BCE(scores, labels) + alpha * sum over H0 point pairs of MMD(scores_i, scores_j)
// where a median-heuristic kernel bandwidth is resolved from the pooled H0
// scores once per step and treated as a constant in differentiation.
// alpha = 0 recovers plain BCE training ("net"); alpha > 0 is "cfarnet".
// ============================================================================

// Feature map from a model draw to the network input.
struct FeatureMap {
  enum class Kind { Dc, Adaptive, Identity };

  Kind kind = Kind::Identity;
  int raw_dim = 0;         // identity: observation dimension
  VectorXd signature;      // adaptive: s
  VectorXd lambda_grid;    // adaptive: loading grid

  int dim() const;
  VectorXd operator()(const ModelSample& sample) const;

  static FeatureMap dc();
  static FeatureMap identity(int dim);
  static FeatureMap adaptive(VectorXd signature, VectorXd lambda_grid);
};

enum class BceScope { AllReplicates, FirstReplicate };
enum class BatchNuisanceMode { PerPoint, PerBatch };

struct TrainConfig {
  std::uint64_t seed = 0;
  double alpha = 0.0;                       // CFAR penalty weight
  Pairing pairing = Pairing::AllPairs;
  KernelSpec kernel = KernelSpec::median_heuristic();
  double prior_y1 = 0.5;                    // fake prior Pr(y = 1)
  int points = 16;                          // parameter points per batch
  int replicates = 16;                      // observations per point
  int steps = 1500;
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<int> hidden = {32};
  BceScope bce_scope = BceScope::AllReplicates;
  // PerBatch pins all points of a step to one uniformly drawn nuisance
  // value (the batch-per-material variant); PerPoint draws nuisances
  // independently per point.
  BatchNuisanceMode nuisance_mode = BatchNuisanceMode::PerPoint;
  // Fixed-dataset mode: generate one batch up front and take every gradient
  // step on it (full-batch descent) instead of resampling per step.
  bool fixed_dataset = false;
  int calibration_points = 256;  // draws used to fit feature standardization
  std::uint64_t config_hash = 0; // provenance, embedded in the artifact
};

struct TrainedDetector {
  MlpNetwork net;
  FeatureMap feature_map;
  std::string tag;  // "net" (alpha = 0) or "cfarnet" (alpha > 0)
  std::uint64_t config_hash = 0;
  double final_bce = 0.0;
  double final_penalty = 0.0;

  double statistic(const ModelSample& sample) const {
    return forward(net, feature_map(sample));
  }
};

struct TrainLogRow {
  int step = 0;
  double bce = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  double bandwidth = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  TrainedDetector detector;
  std::vector<TrainLogRow> log;
};

// Draw one labeled batch from the fake prior. Guarantees at least two H0
// points when alpha > 0 by redrawing the label vector; throws if the prior
// makes that impossible (prior_y1 = 1 with alpha > 0) or if points < 2.
ObservationBatch build_batch(const TrainConfig& config, const Model& model,
                             RngKey batch_key);

// Full training loop. train_net requires alpha == 0 and train_cfarnet
// requires alpha > 0; both run the same engine, so a cfarnet run with
// alpha = 0 is bit-identical to the corresponding net run.
TrainResult train_detector(const TrainConfig& config, const Model& model,
                           const FeatureMap& feature_map);
TrainResult train_net(const TrainConfig& config, const Model& model,
                      const FeatureMap& feature_map);
TrainResult train_cfarnet(const TrainConfig& config, const Model& model,
                          const FeatureMap& feature_map);

// Loss and gradient of one batch at the current network, exposed for
// gradient verification. The kernel bandwidth is resolved from the pooled
// H0 scores at the supplied network unless already explicit.
struct BatchLoss {
  double bce = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  double bandwidth = 0.0;
};
BatchLoss batch_loss(const TrainConfig& config, const MlpNetwork& net,
                     const FeatureMap& feature_map,
                     const ObservationBatch& batch,
                     GradientTape* grad = nullptr);

// ----------------------------------------------------------------------------
// Detector artifact serialization (versioned flat text; exact round trip).
// ----------------------------------------------------------------------------

void write_detector(std::ostream& out, const TrainedDetector& detector);
TrainedDetector read_detector(std::istream& in);
std::string serialize_detector(const TrainedDetector& detector);
TrainedDetector deserialize_detector(const std::string& text);

// Training log CSV: fixed versioned header, one row per step.
void write_train_log_csv(std::ostream& out,
                         const std::vector<TrainLogRow>& log);

}  // namespace cfardet
