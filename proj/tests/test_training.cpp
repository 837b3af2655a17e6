#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cfardet/classical_detectors.hpp"
#include "cfardet/mmd.hpp"
#include "cfardet/model_sim.hpp"
#include "cfardet/neuralnet.hpp"
#include "cfardet/training.hpp"

using namespace cfardet;
using doctest::Approx;

namespace {

DcModel small_model() {
  return DcModel(4, DcNoise{}, 0.5, 1.0, 1.0, {0.5, 1.0});
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.alpha = 1.0;
  cfg.points = 4;
  cfg.replicates = 3;
  cfg.steps = 8;
  cfg.lr = 0.02;
  cfg.hidden = {4};
  return cfg;
}

}  // namespace

TEST_CASE("feature map dimensions") {
  CHECK(FeatureMap::dc().dim() == 4);
  CHECK(FeatureMap::identity(7).dim() == 7);
  VectorXd s = VectorXd::Ones(8);
  VectorXd grid(3);
  grid << 0.0, 0.1, 0.2;
  CHECK(FeatureMap::adaptive(s, grid).dim() == 9);  // 3 forms per loading
  CHECK_THROWS_AS(FeatureMap::identity(0), std::invalid_argument);
}

TEST_CASE("feature maps evaluate through the classical feature builders") {
  const FeatureMap dc = FeatureMap::dc();
  ModelSample sample;
  sample.x = Observation(2);
  sample.x << 0.0, 2.0;
  const VectorXd f = dc(sample);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == Approx(1.0));

  const FeatureMap ident = FeatureMap::identity(2);
  const VectorXd g = ident(sample);
  CHECK(g == sample.x);
}

TEST_CASE("build_batch validates penalty requirements") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  const RngKey key = RngKey::from_seed(1);

  cfg.prior_y1 = 1.0;
  CHECK_THROWS_AS(build_batch(cfg, model, key), std::invalid_argument);
  cfg.prior_y1 = 0.5;
  cfg.points = 1;
  CHECK_THROWS_AS(build_batch(cfg, model, key), std::invalid_argument);
  cfg.points = 4;
  cfg.replicates = 1;
  CHECK_THROWS_AS(build_batch(cfg, model, key), std::invalid_argument);

  // Without the penalty a single H1-only point is legal.
  cfg.alpha = 0.0;
  cfg.points = 1;
  cfg.replicates = 1;
  cfg.prior_y1 = 1.0;
  const ObservationBatch b = build_batch(cfg, model, key);
  CHECK(b.point_count() == 1);
  CHECK(b.points[0].label == 1);
}

TEST_CASE("build_batch guarantees two H0 points when the penalty is active") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.prior_y1 = 0.9;  // H0 points are rare; the redraw must still find two
  for (std::uint64_t k = 0; k < 50; ++k) {
    const ObservationBatch b =
        build_batch(cfg, model, RngKey::from_seed(100 + k));
    int h0 = 0;
    for (const auto& p : b.points) h0 += p.label == 0 ? 1 : 0;
    CHECK(h0 >= 2);
  }
}

TEST_CASE("zero prior gives an all-H0 batch with null DC parameters") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.prior_y1 = 0.0;
  const ObservationBatch b = build_batch(cfg, model, RngKey::from_seed(5));
  for (const auto& p : b.points) {
    CHECK(p.label == 0);
    CHECK(p.values[0] == 0.0);  // no signal under H0
    CHECK(p.values[1] >= 0.5);
    CHECK(p.values[1] <= 1.0);
  }
}

TEST_CASE("label frequency tracks the fake prior") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.alpha = 0.0;  // no redraw constraint distorting the law
  cfg.points = 16;
  cfg.prior_y1 = 0.3;
  int ones = 0, total = 0;
  for (std::uint64_t k = 0; k < 400; ++k) {
    const ObservationBatch b =
        build_batch(cfg, model, RngKey::from_seed(k));
    for (const auto& p : b.points) {
      ones += p.label;
      ++total;
    }
  }
  const double freq = ones / static_cast<double>(total);
  const double sd = std::sqrt(0.3 * 0.7 / total);
  CHECK(std::abs(freq - 0.3) < 4.0 * sd);
}

TEST_CASE("replicate streams are keyed: prefixes survive a larger budget") {
  const DcModel model = small_model();
  TrainConfig small = small_config();
  TrainConfig large = small_config();
  large.replicates = 6;
  const RngKey key = RngKey::from_seed(42);
  const ObservationBatch a = build_batch(small, model, key);
  const ObservationBatch b = build_batch(large, model, key);
  REQUIRE(a.point_count() == b.point_count());
  for (int i = 0; i < a.point_count(); ++i) {
    CHECK(a.points[i].label == b.points[i].label);
    CHECK(a.points[i].values == b.points[i].values);
    for (int j = 0; j < small.replicates; ++j) {
      CHECK(a.replicates[i][j].x == b.replicates[i][j].x);
    }
  }
}

TEST_CASE("per-batch nuisance mode pins one nuisance for the whole batch") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.nuisance_mode = BatchNuisanceMode::PerBatch;
  bool saw_both = false;
  double first_sigma = -1.0;
  for (std::uint64_t k = 0; k < 30; ++k) {
    const ObservationBatch b =
        build_batch(cfg, model, RngKey::from_seed(k));
    const double sigma = b.points[0].values[1];
    CHECK((sigma == 0.5 || sigma == 1.0));  // grid values exactly
    for (const auto& p : b.points) CHECK(p.values[1] == sigma);
    if (first_sigma < 0.0) first_sigma = sigma;
    if (sigma != first_sigma) saw_both = true;
  }
  CHECK(saw_both);
}

TEST_CASE("batch_loss decomposes into BCE plus the weighted penalty") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.alpha = 2.5;
  const ObservationBatch batch =
      build_batch(cfg, model, RngKey::from_seed(7));
  RngStream init(1);
  const MlpNetwork net = MlpNetwork::create({4, 4, 1}, init);
  const FeatureMap fmap = FeatureMap::dc();
  const BatchLoss loss = batch_loss(cfg, net, fmap, batch);

  // Recompute both pieces independently from raw forwards.
  std::vector<std::vector<double>> h0_lists;
  double bce_sum = 0.0;
  int bce_n = 0;
  for (int i = 0; i < batch.point_count(); ++i) {
    std::vector<double> list;
    for (const auto& rep : batch.replicates[static_cast<std::size_t>(i)]) {
      const double s = forward(net, fmap(rep));
      list.push_back(s);
      bce_sum += bce_loss(s, batch.points[static_cast<std::size_t>(i)].label)
                     .first;
      ++bce_n;
    }
    if (batch.points[static_cast<std::size_t>(i)].label == 0)
      h0_lists.push_back(list);
  }
  std::vector<double> pooled;
  for (const auto& l : h0_lists) pooled.insert(pooled.end(), l.begin(), l.end());
  const double bw = median_bandwidth(pooled);
  const double pen =
      cfar_penalty(h0_lists, KernelSpec::fixed(bw), Pairing::AllPairs);

  CHECK(loss.bandwidth == Approx(bw).epsilon(1e-14));
  CHECK(loss.bce == Approx(bce_sum / bce_n).epsilon(1e-13));
  CHECK(loss.penalty == Approx(pen).epsilon(1e-13));
  CHECK(loss.total == Approx(loss.bce + cfg.alpha * loss.penalty)
                          .epsilon(1e-14));
}

TEST_CASE("first-replicate BCE scope narrows the classification term only") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  const ObservationBatch batch =
      build_batch(cfg, model, RngKey::from_seed(9));
  RngStream init(2);
  const MlpNetwork net = MlpNetwork::create({4, 4, 1}, init);
  const FeatureMap fmap = FeatureMap::dc();

  TrainConfig first = cfg;
  first.bce_scope = BceScope::FirstReplicate;
  const BatchLoss all = batch_loss(cfg, net, fmap, batch);
  const BatchLoss one = batch_loss(first, net, fmap, batch);

  double bce_first = 0.0;
  for (int i = 0; i < batch.point_count(); ++i) {
    const double s =
        forward(net, fmap(batch.replicates[static_cast<std::size_t>(i)][0]));
    bce_first +=
        bce_loss(s, batch.points[static_cast<std::size_t>(i)].label).first;
  }
  CHECK(one.bce == Approx(bce_first / batch.point_count()).epsilon(1e-13));
  CHECK(one.penalty == Approx(all.penalty).epsilon(1e-14));
  CHECK(one.bce != all.bce);
}

TEST_CASE("batch_loss gradient matches finite differences at a frozen kernel") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  const ObservationBatch batch =
      build_batch(cfg, model, RngKey::from_seed(11));
  RngStream init(3);
  MlpNetwork net = MlpNetwork::create({4, 3, 1}, init);
  const FeatureMap fmap = FeatureMap::dc();

  // Resolve the data-dependent bandwidth once, then differentiate the loss
  // at that fixed kernel (the analytic gradient treats it as a constant).
  const double bw = batch_loss(cfg, net, fmap, batch).bandwidth;
  cfg.kernel = KernelSpec::fixed(bw);

  GradientTape tape = GradientTape::like(net);
  tape.zero();
  const BatchLoss at = batch_loss(cfg, net, fmap, batch, &tape);
  CHECK(at.bandwidth == bw);

  const double eps = 1e-6;
  const auto loss_at = [&]() {
    return batch_loss(cfg, net, fmap, batch).total;
  };
  for (int layer = 0; layer < net.layer_count(); ++layer) {
    auto& w = net.weights[static_cast<std::size_t>(layer)];
    for (int o = 0; o < w.rows(); ++o) {
      for (int i = 0; i < w.cols(); ++i) {
        const double keep = w(o, i);
        w(o, i) = keep + eps;
        const double up = loss_at();
        w(o, i) = keep - eps;
        const double dn = loss_at();
        w(o, i) = keep;
        CHECK(tape.d_weights[static_cast<std::size_t>(layer)](o, i) ==
              Approx((up - dn) / (2.0 * eps)).epsilon(1e-4).scale(1e-3));
      }
    }
    auto& b = net.biases[static_cast<std::size_t>(layer)];
    for (int o = 0; o < b.size(); ++o) {
      const double keep = b[o];
      b[o] = keep + eps;
      const double up = loss_at();
      b[o] = keep - eps;
      const double dn = loss_at();
      b[o] = keep;
      CHECK(tape.d_biases[static_cast<std::size_t>(layer)][o] ==
            Approx((up - dn) / (2.0 * eps)).epsilon(1e-4).scale(1e-3));
    }
  }
}

TEST_CASE("training is deterministic and the learned scale is fitted") {
  const DcModel model = small_model();
  const TrainConfig cfg = small_config();
  const FeatureMap fmap = FeatureMap::dc();
  const TrainResult a = train_detector(cfg, model, fmap);
  const TrainResult b = train_detector(cfg, model, fmap);
  CHECK(serialize_detector(a.detector) == serialize_detector(b.detector));

  REQUIRE(static_cast<int>(a.log.size()) == cfg.steps);
  for (const auto& row : a.log) {
    CHECK(row.total == Approx(row.bce + cfg.alpha * row.penalty)
                           .epsilon(1e-14));
    CHECK(row.bandwidth > 0.0);
  }
  // Standardization was fitted from data, not left at the unit default.
  CHECK(a.detector.net.feature_scale.size() == 4);
  CHECK((a.detector.net.feature_scale.array() != 1.0).any());
  CHECK(a.detector.tag == "cfarnet");
}

TEST_CASE("net and cfarnet wrappers enforce their alpha domain") {
  const DcModel model = small_model();
  const FeatureMap fmap = FeatureMap::dc();
  TrainConfig cfg = small_config();

  cfg.alpha = 0.0;
  CHECK_THROWS_AS(train_cfarnet(cfg, model, fmap), std::invalid_argument);
  const TrainResult net_run = train_net(cfg, model, fmap);
  CHECK(net_run.detector.tag == "net");
  for (const auto& row : net_run.log) CHECK(row.penalty == 0.0);

  // The generic engine with alpha = 0 is the net run, bit for bit.
  const TrainResult generic = train_detector(cfg, model, fmap);
  CHECK(serialize_detector(generic.detector) ==
        serialize_detector(net_run.detector));

  cfg.alpha = 1.0;
  CHECK_THROWS_AS(train_net(cfg, model, fmap), std::invalid_argument);
}

TEST_CASE("fixed dataset mode reuses one batch for every step") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.alpha = 1.0;
  cfg.fixed_dataset = true;
  cfg.steps = 4;
  const TrainResult r = train_detector(cfg, model, FeatureMap::dc());
  // With one fixed batch the resolved bandwidth is recomputed from the same
  // scores only as far as the net moves; step-to-step jumps stay tiny
  // compared to fresh-batch resampling. Sanity: all rows finite, loss drops
  // or stays comparable.
  REQUIRE(r.log.size() == 4);
  for (const auto& row : r.log) CHECK(std::isfinite(row.total));
}

TEST_CASE("detector artifacts round trip exactly") {
  const DcModel model = small_model();
  TrainConfig cfg = small_config();
  cfg.config_hash = 0xDEADBEEFCAFEF00Dull;
  const TrainResult r = train_detector(cfg, model, FeatureMap::dc());

  const std::string text = serialize_detector(r.detector);
  const TrainedDetector back = deserialize_detector(text);
  CHECK(back.tag == r.detector.tag);
  CHECK(back.config_hash == cfg.config_hash);
  CHECK(serialize_detector(back) == text);

  std::ostringstream out;
  write_detector(out, r.detector);
  CHECK(out.str() == text);
  std::istringstream in(text);
  const TrainedDetector again = read_detector(in);
  CHECK(serialize_detector(again) == text);

  // The deserialized detector scores samples identically.
  RngStream rng(20);
  ParamPoint p = model.sample_param(0, rng);
  const ModelSample sample = model.sample_obs(p, rng);
  CHECK(back.statistic(sample) == r.detector.statistic(sample));

  CHECK_THROWS_AS(deserialize_detector("garbage"), std::invalid_argument);
  CHECK_THROWS_AS(deserialize_detector(text.substr(0, text.size() / 3)),
                  std::invalid_argument);
}

TEST_CASE("train log CSV has the versioned header and exact numbers") {
  const DcModel model = small_model();
  const TrainConfig cfg = small_config();
  const TrainResult r = train_detector(cfg, model, FeatureMap::dc());
  std::ostringstream out;
  write_train_log_csv(out, r.log);
  std::istringstream in(out.str());
  std::string version_line, header;
  std::getline(in, version_line);
  std::getline(in, header);
  CHECK(version_line == "# cfardet-csv train_log 1");
  CHECK(header == "step,bce,penalty,total,bandwidth,wall_ms");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == cfg.steps);
}
