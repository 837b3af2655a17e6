#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cfardet/neuralnet.hpp"
#include "cfardet/rng.hpp"

using namespace cfardet;
using doctest::Approx;

namespace {

// Loop-based forward pass, written independently of the library's
// matrix-based implementation.
double forward_by_hand(const MlpNetwork& net, const Eigen::VectorXd& x) {
  std::vector<double> a(static_cast<std::size_t>(x.size()));
  for (int i = 0; i < x.size(); ++i)
    a[static_cast<std::size_t>(i)] =
        (x[i] - net.feature_mean[i]) / net.feature_scale[i];
  for (int layer = 0; layer < net.layer_count(); ++layer) {
    const auto& w = net.weights[static_cast<std::size_t>(layer)];
    const auto& b = net.biases[static_cast<std::size_t>(layer)];
    std::vector<double> next(static_cast<std::size_t>(w.rows()));
    for (int o = 0; o < w.rows(); ++o) {
      double s = b[o];
      for (int i = 0; i < w.cols(); ++i)
        s += w(o, i) * a[static_cast<std::size_t>(i)];
      const bool last = layer + 1 == net.layer_count();
      next[static_cast<std::size_t>(o)] =
          (last || net.hidden_activation == Activation::Identity)
              ? s
              : std::tanh(s);
    }
    a = std::move(next);
  }
  return a[0];
}

MlpNetwork small_net(std::uint64_t seed) {
  RngStream rng(seed);
  MlpNetwork net = MlpNetwork::create({3, 5, 1}, rng);
  net.feature_mean << 0.1, -0.2, 0.3;
  net.feature_scale << 1.5, 0.8, 2.0;
  return net;
}

}  // namespace

TEST_CASE("create builds the declared shape with standardization defaults") {
  RngStream rng(1);
  const MlpNetwork net = MlpNetwork::create({4, 8, 8, 1}, rng);
  CHECK(net.input_dim() == 4);
  CHECK(net.layer_count() == 3);
  CHECK(net.weights[0].rows() == 8);
  CHECK(net.weights[0].cols() == 4);
  CHECK(net.weights[2].rows() == 1);
  CHECK(net.parameter_count() == (4 * 8 + 8) + (8 * 8 + 8) + (8 * 1 + 1));
  CHECK(net.feature_mean.size() == 4);
  CHECK(net.feature_scale.minCoeff() > 0.0);
  CHECK_THROWS_AS(MlpNetwork::create({4}, rng), std::invalid_argument);
  CHECK_THROWS_AS(MlpNetwork::create({4, 8, 2}, rng), std::invalid_argument);
}

TEST_CASE("forward matches an independent loop implementation") {
  const MlpNetwork net = small_net(2);
  RngStream rng(3);
  for (int t = 0; t < 25; ++t) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = 2.0 * rng.normal();
    CHECK(forward(net, x) == Approx(forward_by_hand(net, x)).epsilon(1e-13));
  }
}

TEST_CASE("forward with cache reproduces the plain forward") {
  const MlpNetwork net = small_net(4);
  Eigen::VectorXd x(3);
  x << 0.4, -1.1, 0.9;
  ForwardCache cache;
  const double with_cache = forward(net, x, cache);
  CHECK(with_cache == forward(net, x));
  CHECK(cache.input_raw == x);
  CHECK(cache.act.back().size() == 1);
  CHECK(cache.act.back()[0] == with_cache);
}

TEST_CASE("backward matches finite differences in parameters and inputs") {
  MlpNetwork net = small_net(5);
  Eigen::VectorXd x(3);
  x << 1.2, -0.3, 0.5;

  ForwardCache cache;
  forward(net, x, cache);
  GradientTape tape = GradientTape::like(net);
  tape.zero();
  const double upstream = 1.7;  // arbitrary chain-rule seed
  const Eigen::VectorXd dx = backward(net, cache, upstream, tape);

  const double eps = 1e-6;
  for (int layer = 0; layer < net.layer_count(); ++layer) {
    auto& w = net.weights[static_cast<std::size_t>(layer)];
    for (int o = 0; o < w.rows(); ++o) {
      for (int i = 0; i < w.cols(); ++i) {
        const double keep = w(o, i);
        w(o, i) = keep + eps;
        const double up = forward(net, x);
        w(o, i) = keep - eps;
        const double dn = forward(net, x);
        w(o, i) = keep;
        const double fd = upstream * (up - dn) / (2.0 * eps);
        CHECK(tape.d_weights[static_cast<std::size_t>(layer)](o, i) ==
              Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
    auto& b = net.biases[static_cast<std::size_t>(layer)];
    for (int o = 0; o < b.size(); ++o) {
      const double keep = b[o];
      b[o] = keep + eps;
      const double up = forward(net, x);
      b[o] = keep - eps;
      const double dn = forward(net, x);
      b[o] = keep;
      const double fd = upstream * (up - dn) / (2.0 * eps);
      CHECK(tape.d_biases[static_cast<std::size_t>(layer)][o] ==
            Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd plus = x, minus = x;
    plus[i] += eps;
    minus[i] -= eps;
    const double fd =
        upstream * (forward(net, plus) - forward(net, minus)) / (2.0 * eps);
    CHECK(dx[i] == Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("gradient tape algebra") {
  const MlpNetwork net = small_net(6);
  GradientTape a = GradientTape::like(net);
  a.zero();
  CHECK(a.squared_norm() == 0.0);
  ForwardCache cache;
  Eigen::VectorXd x(3);
  x << 1.0, 2.0, 3.0;
  forward(net, x, cache);
  backward(net, cache, 1.0, a);
  const double norm = a.squared_norm();
  CHECK(norm > 0.0);
  CHECK(a.all_finite());

  GradientTape b = GradientTape::like(net);
  b.zero();
  b.axpy(2.0, a);
  CHECK(b.squared_norm() == Approx(4.0 * norm).epsilon(1e-12));
  b.scale(0.5);
  CHECK(b.squared_norm() == Approx(norm).epsilon(1e-12));
  b.d_weights[0](0, 0) = std::nan("");
  CHECK_FALSE(b.all_finite());
}

TEST_CASE("binary cross-entropy values and slope") {
  // Logit 0 scores both labels at log 2.
  const auto [l0, d0] = bce_loss(0.0, 0);
  const auto [l1, d1] = bce_loss(0.0, 1);
  CHECK(l0 == Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(l1 == Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(d0 == Approx(0.5).epsilon(1e-14));    // sigmoid(0) - 0
  CHECK(d1 == Approx(-0.5).epsilon(1e-14));   // sigmoid(0) - 1

  // Slope equals sigmoid(logit) - label everywhere, including far tails.
  for (double logit : {-40.0, -3.0, 0.7, 4.0, 40.0}) {
    const double sig = 1.0 / (1.0 + std::exp(-logit));
    const auto [lm, dm] = bce_loss(logit, 1);
    CHECK(dm == Approx(sig - 1.0).epsilon(1e-9).scale(1.0));
    CHECK(std::isfinite(lm));
    // Loss stays finite and nonnegative even at extreme logits.
    CHECK(lm >= 0.0);
  }
  // Matching label at a confident logit is nearly free.
  CHECK(bce_loss(40.0, 1).first == Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(bce_loss(-40.0, 0).first == Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("SGD with zero momentum takes plain gradient steps") {
  MlpNetwork net = small_net(7);
  const double w00 = net.weights[0](0, 0);
  GradientTape g = GradientTape::like(net);
  g.zero();
  g.d_weights[0](0, 0) = 2.0;
  SgdOptimizer opt(0.1, 0.0);
  opt.step(net, g);
  CHECK(net.weights[0](0, 0) == Approx(w00 - 0.2).epsilon(1e-14));
  opt.step(net, g);
  CHECK(net.weights[0](0, 0) == Approx(w00 - 0.4).epsilon(1e-14));
}

TEST_CASE("momentum accumulates geometrically on a constant gradient") {
  MlpNetwork net = small_net(8);
  const double b0 = net.biases[0][0];
  GradientTape g = GradientTape::like(net);
  g.zero();
  g.d_biases[0][0] = 1.0;
  const double lr = 0.1, mu = 0.5;
  SgdOptimizer opt(lr, mu);
  // Velocity after k steps: lr * (1 + mu + ... + mu^{k-1}) per step.
  double expected = b0;
  double velocity = 0.0;
  for (int k = 0; k < 5; ++k) {
    opt.step(net, g);
    velocity = mu * velocity + lr * 1.0;
    expected -= velocity;
    CHECK(net.biases[0][0] == Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("optimizer validates its inputs and refuses bad gradients") {
  CHECK_THROWS_AS(SgdOptimizer(0.0, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(SgdOptimizer(0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SgdOptimizer(0.1, -0.1), std::invalid_argument);

  MlpNetwork net = small_net(9);
  const std::string before = serialize_network(net);
  GradientTape g = GradientTape::like(net);
  g.zero();
  g.d_weights[0](0, 0) = std::nan("");
  SgdOptimizer opt(0.1, 0.9);
  // A non-finite gradient aborts the step and leaves the network intact.
  CHECK_THROWS_AS(opt.step(net, g), std::runtime_error);
  CHECK(serialize_network(net) == before);
}

TEST_CASE("a small MLP fits a separable toy problem") {
  // Logistic regression on a 1-d threshold task: points below 0 are
  // label 0, above 0 label 1, with a wide margin.
  RngStream rng(10);
  MlpNetwork net = MlpNetwork::create({1, 8, 1}, rng);
  SgdOptimizer opt(0.1, 0.9);
  for (int step = 0; step < 2000; ++step) {
    GradientTape g = GradientTape::like(net);
    g.zero();
    double loss = 0.0;
    for (int k = 0; k < 8; ++k) {
      const int label = k % 2;
      const double x = (label == 1 ? 1.0 : -1.0) + 0.1 * rng.normal();
      Eigen::VectorXd features(1);
      features << x;
      ForwardCache cache;
      const double logit = forward(net, features, cache);
      const auto [l, dlogit] = bce_loss(logit, label);
      loss += l / 8.0;
      backward(net, cache, dlogit / 8.0, g);
    }
    opt.step(net, g);
    if (step == 1999) CHECK(loss < 0.05);
  }
}

TEST_CASE("serialization round trip is bit exact") {
  MlpNetwork net = small_net(11);
  net.weights[0](0, 0) = 1.0 / 3.0;
  net.weights[1](0, 2) = std::sqrt(2.0);
  const std::string text = serialize_network(net);
  const MlpNetwork back = deserialize_network(text);
  CHECK(back.dims == net.dims);
  CHECK(back.hidden_activation == net.hidden_activation);
  for (int layer = 0; layer < net.layer_count(); ++layer) {
    CHECK(back.weights[static_cast<std::size_t>(layer)] ==
          net.weights[static_cast<std::size_t>(layer)]);
    CHECK(back.biases[static_cast<std::size_t>(layer)] ==
          net.biases[static_cast<std::size_t>(layer)]);
  }
  CHECK(back.feature_mean == net.feature_mean);
  CHECK(back.feature_scale == net.feature_scale);
  // Same bytes again after a second round trip.
  CHECK(serialize_network(back) == text);
  // Stream form agrees with the string form.
  std::ostringstream out;
  write_network(out, net);
  CHECK(out.str() == text);
  std::istringstream in(text);
  const MlpNetwork again = read_network(in);
  CHECK(serialize_network(again) == text);
}

TEST_CASE("deserialization rejects corrupted input") {
  const MlpNetwork net = small_net(12);
  std::string text = serialize_network(net);
  CHECK_THROWS(deserialize_network(text.substr(0, text.size() / 2)));
  CHECK_THROWS(deserialize_network("not a network"));
}
