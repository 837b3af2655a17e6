// Microbenchmarks for the hot paths: detector statistics, sampling, the MMD
// penalty, and network forward/backward.

#include <benchmark/benchmark.h>

#include <vector>

#include "cfardet/classical_detectors.hpp"
#include "cfardet/eval.hpp"
#include "cfardet/mmd.hpp"
#include "cfardet/model_sim.hpp"
#include "cfardet/neuralnet.hpp"
#include "cfardet/rng.hpp"
#include "cfardet/training.hpp"

using namespace cfardet;

namespace {

VectorXd random_vector(int n, RngStream& rng) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

void bm_glrt_dc(benchmark::State& state) {
  RngStream rng(1);
  const VectorXd x = random_vector(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(glrt_dc(x));
}
BENCHMARK(bm_glrt_dc)->Arg(16)->Arg(256);

void bm_glrt_linear(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  RngStream rng(2);
  MatrixXd h(n, 2);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < 2; ++c) h(r, c) = rng.normal();
  const LinearGaussianSpec spec(
      h, [n](const VectorXd&) { return MatrixXd::Identity(n, n); }, 1.0);
  const LinearGaussianEvaluator eval(spec, VectorXd());
  const VectorXd x = random_vector(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(eval.glrt(x));
}
BENCHMARK(bm_glrt_linear)->Arg(16)->Arg(128);

void bm_amf(benchmark::State& state) {
  const int n = 8, k = 32;
  RngStream rng(3);
  const VectorXd s = VectorXd::Ones(n);
  const VectorXd x = random_vector(n, rng);
  MatrixXd secondary(n, k);
  for (int c = 0; c < k; ++c) secondary.col(c) = random_vector(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(amf(x, secondary, s));
}
BENCHMARK(bm_amf);

void bm_sample_dc(benchmark::State& state) {
  const DcModel model(16, DcNoise{}, 0.5, 1.0, 1.0, {0.5, 0.75, 1.0});
  RngStream rng(4);
  ParamPoint p;
  p.label = 0;
  p.values = Eigen::Vector2d(0.0, 0.75);
  for (auto _ : state) benchmark::DoNotOptimize(model.sample_obs(p, rng));
}
BENCHMARK(bm_sample_dc);

void bm_mmd_penalty(benchmark::State& state) {
  const int lists = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  RngStream rng(5);
  std::vector<std::vector<double>> groups(static_cast<std::size_t>(lists));
  for (auto& g : groups) {
    g.resize(static_cast<std::size_t>(m));
    for (auto& v : g) v = rng.normal();
  }
  const KernelSpec kernel = KernelSpec::fixed(1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(cfar_penalty(groups, kernel, Pairing::AllPairs));
}
BENCHMARK(bm_mmd_penalty)->Args({4, 64})->Args({8, 16});

void bm_forward(benchmark::State& state) {
  RngStream rng(6);
  const MlpNetwork net = MlpNetwork::create({4, 32, 1}, rng);
  const VectorXd f = random_vector(4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, f));
}
BENCHMARK(bm_forward);

void bm_forward_backward(benchmark::State& state) {
  RngStream rng(7);
  const MlpNetwork net = MlpNetwork::create({4, 32, 1}, rng);
  const VectorXd f = random_vector(4, rng);
  GradientTape tape = GradientTape::like(net);
  ForwardCache cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(net, f, cache));
    benchmark::DoNotOptimize(backward(net, cache, 1.0, tape));
  }
}
BENCHMARK(bm_forward_backward);

void bm_train_step(benchmark::State& state) {
  const DcModel model(16, DcNoise{}, 0.5, 1.0, 1.0, {0.5, 0.75, 1.0});
  const FeatureMap fmap = FeatureMap::dc();
  TrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.points = 8;
  cfg.replicates = 16;
  RngStream rng(8);
  MlpNetwork net = MlpNetwork::create({fmap.dim(), 32, 1}, rng);
  GradientTape tape = GradientTape::like(net);
  std::uint64_t step = 0;
  const RngKey root = RngKey::from_seed(9);
  for (auto _ : state) {
    const ObservationBatch batch = build_batch(cfg, model, root.child(step++));
    tape.zero();
    benchmark::DoNotOptimize(batch_loss(cfg, net, fmap, batch, &tape));
  }
}
BENCHMARK(bm_train_step);

}  // namespace

BENCHMARK_MAIN();
