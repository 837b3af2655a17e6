#include "cfardet/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cfardet/stats.hpp"

namespace cfardet {

namespace {

void format_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

// Child indices under a batch key: 0 draws labels (and the shared nuisance
// in PerBatch mode); 1 + i is point i. Under a point key: 0 draws the
// parameter, 1 + j draws replicate j — so growing M never disturbs the
// first M - 1 replicates.
constexpr std::uint64_t kLabelChild = 0;

// Child indices under the training root key.
constexpr std::uint64_t kInitChild = 0;
constexpr std::uint64_t kCalibrationChild = 1;
constexpr std::uint64_t kBatchChild = 2;

}  // namespace

// ----------------------------------------------------------------------------
// FeatureMap
// ----------------------------------------------------------------------------

int FeatureMap::dim() const {
  switch (kind) {
    case Kind::Dc:
      return 4;
    case Kind::Adaptive:
      return 3 * static_cast<int>(lambda_grid.size());
    case Kind::Identity:
      return raw_dim;
  }
  throw std::logic_error("FeatureMap: bad kind");
}

VectorXd FeatureMap::operator()(const ModelSample& sample) const {
  switch (kind) {
    case Kind::Dc:
      return dc_features(sample.x);
    case Kind::Adaptive:
      return lamf_features(sample.x, sample.secondary, signature, lambda_grid);
    case Kind::Identity:
      if (sample.x.size() != raw_dim)
        throw std::invalid_argument("FeatureMap: observation dimension");
      return sample.x;
  }
  throw std::logic_error("FeatureMap: bad kind");
}

FeatureMap FeatureMap::dc() {
  FeatureMap f;
  f.kind = Kind::Dc;
  return f;
}

FeatureMap FeatureMap::identity(int dim) {
  if (dim <= 0) throw std::invalid_argument("FeatureMap: bad dimension");
  FeatureMap f;
  f.kind = Kind::Identity;
  f.raw_dim = dim;
  return f;
}

FeatureMap FeatureMap::adaptive(VectorXd signature, VectorXd lambda_grid) {
  if (signature.size() == 0 || lambda_grid.size() == 0)
    throw std::invalid_argument("FeatureMap: empty adaptive parameters");
  FeatureMap f;
  f.kind = Kind::Adaptive;
  f.signature = std::move(signature);
  f.lambda_grid = std::move(lambda_grid);
  return f;
}

// ----------------------------------------------------------------------------
// Batch construction
// ----------------------------------------------------------------------------

ObservationBatch build_batch(const TrainConfig& config, const Model& model,
                             RngKey batch_key) {
  const int n_points = config.points;
  const int n_reps = config.replicates;
  if (n_points <= 0 || n_reps <= 0)
    throw std::invalid_argument("build_batch: points and replicates > 0");
  if (!(config.prior_y1 >= 0.0 && config.prior_y1 <= 1.0))
    throw std::invalid_argument("build_batch: prior_y1 must be in [0, 1]");
  const bool need_h0_pair = config.alpha > 0.0;
  if (need_h0_pair && config.prior_y1 >= 1.0)
    throw std::invalid_argument(
        "build_batch: CFAR penalty needs H0 points but Pr(y=0) is zero");
  if (need_h0_pair && n_points < 2)
    throw std::invalid_argument(
        "build_batch: CFAR penalty needs at least two points per batch");
  if (need_h0_pair && n_reps < 2)
    throw std::invalid_argument(
        "build_batch: CFAR penalty needs at least two replicates per point");

  RngStream label_rng(batch_key.child(kLabelChild));

  std::vector<int> labels(static_cast<std::size_t>(n_points));
  for (int attempt = 0;; ++attempt) {
    int h0_count = 0;
    for (auto& l : labels) {
      l = label_rng.bernoulli(config.prior_y1) ? 1 : 0;
      h0_count += l == 0 ? 1 : 0;
    }
    if (!need_h0_pair || h0_count >= 2) break;
    if (attempt > 10000)
      throw std::runtime_error(
          "build_batch: could not draw two H0 points; prior_y1 too extreme");
  }

  // PerBatch mode pins every point of this batch to one uniformly drawn
  // nuisance value (batch-per-material sampling).
  int shared_nuisance = -1;
  if (config.nuisance_mode == BatchNuisanceMode::PerBatch)
    shared_nuisance = static_cast<int>(
        label_rng.uniform_index(static_cast<std::uint64_t>(model.nuisance_count())));

  ObservationBatch batch;
  batch.points.resize(static_cast<std::size_t>(n_points));
  batch.replicates.resize(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const RngKey point_key = batch_key.child(1 + static_cast<std::uint64_t>(i));
    RngStream param_rng(point_key.child(0));
    ParamPoint p =
        shared_nuisance >= 0
            ? model.sample_param_at(shared_nuisance, labels[static_cast<std::size_t>(i)], param_rng)
            : model.sample_param(labels[static_cast<std::size_t>(i)], param_rng);
    auto& reps = batch.replicates[static_cast<std::size_t>(i)];
    reps.reserve(static_cast<std::size_t>(n_reps));
    for (int j = 0; j < n_reps; ++j) {
      RngStream rep_rng(point_key.child(1 + static_cast<std::uint64_t>(j)));
      reps.push_back(model.sample_obs(p, rep_rng));
    }
    batch.points[static_cast<std::size_t>(i)] = std::move(p);
  }
  return batch;
}

// ----------------------------------------------------------------------------
// Loss evaluation
// ----------------------------------------------------------------------------

BatchLoss batch_loss(const TrainConfig& config, const MlpNetwork& net,
                     const FeatureMap& feature_map,
                     const ObservationBatch& batch, GradientTape* grad) {
  const int n_points = batch.point_count();
  const int n_reps = batch.replicate_count();
  if (n_points == 0 || n_reps == 0)
    throw std::invalid_argument("batch_loss: empty batch");

  // Forward pass over every replicate.
  std::vector<std::vector<ForwardCache>> caches(
      static_cast<std::size_t>(n_points));
  std::vector<std::vector<double>> scores(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    caches[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n_reps));
    scores[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n_reps));
    for (int j = 0; j < n_reps; ++j) {
      const VectorXd f =
          feature_map(batch.replicates[static_cast<std::size_t>(i)]
                                      [static_cast<std::size_t>(j)]);
      scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          forward(net, f, caches[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
  }

  // BCE over the configured replicate scope.
  const bool all_reps = config.bce_scope == BceScope::AllReplicates;
  const double bce_count =
      static_cast<double>(n_points) * (all_reps ? n_reps : 1);
  double bce_sum = 0.0;
  std::vector<std::vector<double>> upstream(
      static_cast<std::size_t>(n_points),
      std::vector<double>(static_cast<std::size_t>(n_reps), 0.0));
  for (int i = 0; i < n_points; ++i) {
    const int label = batch.points[static_cast<std::size_t>(i)].label;
    const int reps_in_scope = all_reps ? n_reps : 1;
    for (int j = 0; j < reps_in_scope; ++j) {
      const auto [loss, dlogit] = bce_loss(
          scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
          label);
      bce_sum += loss;
      upstream[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
          dlogit / bce_count;
    }
  }
  const double bce = bce_sum / bce_count;

  // CFAR penalty over the H0 points' score lists.
  double penalty = 0.0;
  double bandwidth = 0.0;
  if (config.alpha > 0.0) {
    std::vector<std::vector<double>> h0_scores;
    std::vector<int> h0_index;
    for (int i = 0; i < n_points; ++i) {
      if (batch.points[static_cast<std::size_t>(i)].label == 0) {
        h0_scores.push_back(scores[static_cast<std::size_t>(i)]);
        h0_index.push_back(i);
      }
    }
    if (h0_scores.size() < 2)
      throw std::runtime_error("batch_loss: fewer than two H0 points");
    std::vector<double> pooled;
    for (const auto& l : h0_scores)
      pooled.insert(pooled.end(), l.begin(), l.end());
    const KernelSpec resolved = resolve_kernel(config.kernel, pooled);
    bandwidth = resolved.bandwidth;
    std::vector<std::vector<double>> penalty_grads;
    penalty = cfar_penalty_with_grad(h0_scores, resolved, config.pairing,
                                     grad ? &penalty_grads : nullptr);
    if (grad) {
      for (std::size_t g = 0; g < h0_index.size(); ++g) {
        auto& up = upstream[static_cast<std::size_t>(h0_index[g])];
        for (int j = 0; j < n_reps; ++j)
          up[static_cast<std::size_t>(j)] +=
              config.alpha * penalty_grads[g][static_cast<std::size_t>(j)];
      }
    }
  }

  if (grad) {
    for (int i = 0; i < n_points; ++i)
      for (int j = 0; j < n_reps; ++j) {
        const double u =
            upstream[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (u != 0.0)
          backward(net, caches[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                   u, *grad);
      }
  }

  BatchLoss out;
  out.bce = bce;
  out.penalty = penalty;
  out.total = bce + config.alpha * penalty;
  out.bandwidth = bandwidth;
  return out;
}

// ----------------------------------------------------------------------------
// Training loop
// ----------------------------------------------------------------------------

namespace {

// Fit the affine feature standardization on fake-prior draws.
// Center/scale estimates are robust (median and scaled MAD) so that a few
// extreme feature values cannot crush the typical-case variation into a
// vanishing input range; the stored transform is still a plain affine map.
void fit_standardization(const TrainConfig& config, const Model& model,
                         const FeatureMap& feature_map, MlpNetwork& net,
                         RngKey calib_key) {
  const int n = std::max(config.calibration_points, 8);
  const int dim = feature_map.dim();
  std::vector<std::vector<double>> columns(static_cast<std::size_t>(dim));
  for (auto& column : columns) column.reserve(static_cast<std::size_t>(n));
  RngStream label_rng(calib_key.child(kLabelChild));
  for (int i = 0; i < n; ++i) {
    const RngKey point_key = calib_key.child(1 + static_cast<std::uint64_t>(i));
    RngStream param_rng(point_key.child(0));
    RngStream obs_rng(point_key.child(1));
    const int label = label_rng.bernoulli(config.prior_y1) ? 1 : 0;
    const ParamPoint p = model.sample_param(label, param_rng);
    const VectorXd f = feature_map(model.sample_obs(p, obs_rng));
    for (int d = 0; d < dim; ++d)
      columns[static_cast<std::size_t>(d)].push_back(f[d]);
  }
  net.feature_mean.resize(dim);
  net.feature_scale.resize(dim);
  for (int d = 0; d < dim; ++d) {
    auto& column = columns[static_cast<std::size_t>(d)];
    const double center = stats::median(column);
    std::vector<double> deviations(column.size());
    for (std::size_t i = 0; i < column.size(); ++i)
      deviations[i] = std::abs(column[i] - center);
    // 1.4826 makes the MAD consistent with the standard deviation under
    // Gaussian data; fall back to the standard deviation for point masses.
    double scale = 1.4826 * stats::median(deviations);
    if (scale <= 0.0) scale = std::sqrt(stats::variance(column));
    net.feature_mean[d] = center;
    net.feature_scale[d] = std::max(scale, 1.0e-8);
  }
}

}  // namespace

TrainResult train_detector(const TrainConfig& config, const Model& model,
                           const FeatureMap& feature_map) {
  if (config.steps <= 0)
    throw std::invalid_argument("train_detector: steps must be positive");
  if (config.alpha < 0.0)
    throw std::invalid_argument("train_detector: alpha must be >= 0");

  const RngKey root = RngKey::from_seed(config.seed);

  std::vector<int> dims;
  dims.push_back(feature_map.dim());
  for (int h : config.hidden) dims.push_back(h);
  dims.push_back(1);

  RngStream init_rng(root.child(kInitChild));
  MlpNetwork net = MlpNetwork::create(dims, init_rng);
  fit_standardization(config, model, feature_map, net,
                      root.child(kCalibrationChild));

  SgdOptimizer optimizer(config.lr, config.momentum);
  GradientTape grad = GradientTape::like(net);

  const RngKey batches_root = root.child(kBatchChild);
  ObservationBatch fixed;
  if (config.fixed_dataset)
    fixed = build_batch(config, model, batches_root.child(0));

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    ObservationBatch scratch;
    const ObservationBatch* batch = &fixed;
    if (!config.fixed_dataset) {
      scratch = build_batch(config, model,
                            batches_root.child(static_cast<std::uint64_t>(step)));
      batch = &scratch;
    }

    grad.zero();
    const BatchLoss loss = batch_loss(config, net, feature_map, *batch, &grad);
    if (!std::isfinite(loss.total))
      throw std::runtime_error("train_detector: non-finite loss at step " +
                               std::to_string(step));
    optimizer.step(net, grad);

    const auto t1 = std::chrono::steady_clock::now();
    TrainLogRow row;
    row.step = step;
    row.bce = loss.bce;
    row.penalty = loss.penalty;
    row.total = loss.total;
    row.bandwidth = loss.bandwidth;
    row.wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.log.push_back(row);
  }

  result.detector.net = std::move(net);
  result.detector.feature_map = feature_map;
  result.detector.tag = config.alpha == 0.0 ? "net" : "cfarnet";
  result.detector.config_hash = config.config_hash;
  result.detector.final_bce = result.log.back().bce;
  result.detector.final_penalty = result.log.back().penalty;
  return result;
}

TrainResult train_net(const TrainConfig& config, const Model& model,
                      const FeatureMap& feature_map) {
  if (config.alpha != 0.0)
    throw std::invalid_argument("train_net: alpha must be 0");
  return train_detector(config, model, feature_map);
}

TrainResult train_cfarnet(const TrainConfig& config, const Model& model,
                          const FeatureMap& feature_map) {
  if (!(config.alpha > 0.0))
    throw std::invalid_argument("train_cfarnet: alpha must be > 0");
  return train_detector(config, model, feature_map);
}

// ----------------------------------------------------------------------------
// Serialization
// ----------------------------------------------------------------------------

namespace {
constexpr const char* kDetectorHeader = "cfardet-detector 1";
}

void write_detector(std::ostream& out, const TrainedDetector& detector) {
  out << kDetectorHeader << "\n";
  out << "tag " << detector.tag << "\n";
  char hash_buf[32];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(detector.config_hash));
  out << "config_hash " << hash_buf << "\n";
  out << "final_bce ";
  format_double(out, detector.final_bce);
  out << "\n";
  out << "final_penalty ";
  format_double(out, detector.final_penalty);
  out << "\n";
  switch (detector.feature_map.kind) {
    case FeatureMap::Kind::Dc:
      out << "feature_map dc\n";
      break;
    case FeatureMap::Kind::Identity:
      out << "feature_map identity " << detector.feature_map.raw_dim << "\n";
      break;
    case FeatureMap::Kind::Adaptive: {
      out << "feature_map adaptive\n";
      out << "signature";
      for (int i = 0; i < detector.feature_map.signature.size(); ++i) {
        out << " ";
        format_double(out, detector.feature_map.signature[i]);
      }
      out << "\n";
      out << "lambda_grid";
      for (int i = 0; i < detector.feature_map.lambda_grid.size(); ++i) {
        out << " ";
        format_double(out, detector.feature_map.lambda_grid[i]);
      }
      out << "\n";
      break;
    }
  }
  write_network(out, detector.net);
}

TrainedDetector read_detector(std::istream& in) {
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line))
      throw std::invalid_argument("read_detector: truncated input");
    return line;
  };
  if (next_line() != kDetectorHeader)
    throw std::invalid_argument("read_detector: unknown format header");

  TrainedDetector d;
  {
    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag >> d.tag;
    if (tag != "tag" || d.tag.empty())
      throw std::invalid_argument("read_detector: want tag");
  }
  {
    std::istringstream ls(next_line());
    std::string tag, hex;
    ls >> tag >> hex;
    if (tag != "config_hash")
      throw std::invalid_argument("read_detector: want config_hash");
    d.config_hash = std::stoull(hex, nullptr, 16);
  }
  auto read_scalar = [&](const char* want) {
    std::istringstream ls(next_line());
    std::string tag;
    double v;
    ls >> tag >> v;
    if (tag != want)
      throw std::invalid_argument(std::string("read_detector: want ") + want);
    return v;
  };
  d.final_bce = read_scalar("final_bce");
  d.final_penalty = read_scalar("final_penalty");
  {
    std::istringstream ls(next_line());
    std::string tag, kind;
    ls >> tag >> kind;
    if (tag != "feature_map")
      throw std::invalid_argument("read_detector: want feature_map");
    if (kind == "dc") {
      d.feature_map = FeatureMap::dc();
    } else if (kind == "identity") {
      int dim = 0;
      ls >> dim;
      d.feature_map = FeatureMap::identity(dim);
    } else if (kind == "adaptive") {
      auto read_vector = [&](const char* want) {
        std::istringstream vs(next_line());
        std::string vtag;
        vs >> vtag;
        if (vtag != want)
          throw std::invalid_argument(std::string("read_detector: want ") +
                                      want);
        std::vector<double> vals;
        double v;
        while (vs >> v) vals.push_back(v);
        return Eigen::Map<const VectorXd>(vals.data(),
                                          static_cast<Eigen::Index>(vals.size()))
            .eval();
      };
      const VectorXd s = read_vector("signature");
      const VectorXd grid = read_vector("lambda_grid");
      d.feature_map = FeatureMap::adaptive(s, grid);
    } else {
      throw std::invalid_argument("read_detector: unknown feature map " + kind);
    }
  }
  d.net = read_network(in);
  if (d.net.input_dim() != d.feature_map.dim())
    throw std::invalid_argument(
        "read_detector: network input does not match the feature map");
  return d;
}

std::string serialize_detector(const TrainedDetector& detector) {
  std::ostringstream os;
  write_detector(os, detector);
  return os.str();
}

TrainedDetector deserialize_detector(const std::string& text) {
  std::istringstream is(text);
  return read_detector(is);
}

void write_train_log_csv(std::ostream& out,
                         const std::vector<TrainLogRow>& log) {
  out << "# cfardet-csv train_log 1\n";
  out << "step,bce,penalty,total,bandwidth,wall_ms\n";
  for (const auto& row : log) {
    out << row.step << ",";
    format_double(out, row.bce);
    out << ",";
    format_double(out, row.penalty);
    out << ",";
    format_double(out, row.total);
    out << ",";
    format_double(out, row.bandwidth);
    out << ",";
    format_double(out, row.wall_ms);
    out << "\n";
  }
}

}  // namespace cfardet
