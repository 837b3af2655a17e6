#include "cfardet/neuralnet.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cfardet {

namespace {

void check_topology(const std::vector<int>& dims) {
  if (dims.size() < 2)
    throw std::invalid_argument("MlpNetwork: need at least input and output");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("MlpNetwork: nonpositive width");
  if (dims.back() != 1)
    throw std::invalid_argument("MlpNetwork: output must be scalar");
}

double activate(double x, Activation a) {
  return a == Activation::Tanh ? std::tanh(x) : x;
}

double activate_grad_from_post(double post, Activation a) {
  return a == Activation::Tanh ? 1.0 - post * post : 1.0;
}

void format_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

MlpNetwork MlpNetwork::create(const std::vector<int>& dims, RngStream& rng,
                              Activation hidden) {
  check_topology(dims);
  MlpNetwork net;
  net.dims = dims;
  net.hidden_activation = hidden;
  const int layers = static_cast<int>(dims.size()) - 1;
  net.weights.reserve(layers);
  net.biases.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  net.feature_mean = Eigen::VectorXd::Zero(dims.front());
  net.feature_scale = Eigen::VectorXd::Ones(dims.front());
  return net;
}

double forward(const MlpNetwork& net, const Eigen::VectorXd& features,
               ForwardCache& cache) {
  if (features.size() != net.input_dim())
    throw std::invalid_argument("forward: feature dimension mismatch");
  cache.input_raw = features;
  cache.input_std =
      (features - net.feature_mean).cwiseQuotient(net.feature_scale);
  const int layers = net.layer_count();
  cache.pre.resize(layers);
  cache.act.resize(layers);
  const Eigen::VectorXd* in = &cache.input_std;
  for (int l = 0; l < layers; ++l) {
    cache.pre[l] = net.weights[l] * (*in) + net.biases[l];
    if (l + 1 < layers) {
      cache.act[l] = cache.pre[l].unaryExpr([&](double v) {
        return activate(v, net.hidden_activation);
      });
    } else {
      cache.act[l] = cache.pre[l];  // linear output head
    }
    in = &cache.act[l];
  }
  return cache.act.back()[0];
}

double forward(const MlpNetwork& net, const Eigen::VectorXd& features) {
  ForwardCache cache;
  return forward(net, features, cache);
}

GradientTape GradientTape::like(const MlpNetwork& net) {
  GradientTape t;
  t.d_weights.reserve(net.layer_count());
  t.d_biases.reserve(net.layer_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    t.d_weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                net.weights[l].cols()));
    t.d_biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return t;
}

void GradientTape::zero() {
  for (auto& w : d_weights) w.setZero();
  for (auto& b : d_biases) b.setZero();
}

void GradientTape::scale(double s) {
  for (auto& w : d_weights) w *= s;
  for (auto& b : d_biases) b *= s;
}

void GradientTape::axpy(double a, const GradientTape& other) {
  for (std::size_t l = 0; l < d_weights.size(); ++l) {
    d_weights[l] += a * other.d_weights[l];
    d_biases[l] += a * other.d_biases[l];
  }
}

bool GradientTape::all_finite() const {
  for (const auto& w : d_weights)
    if (!w.allFinite()) return false;
  for (const auto& b : d_biases)
    if (!b.allFinite()) return false;
  return true;
}

double GradientTape::squared_norm() const {
  double s = 0.0;
  for (const auto& w : d_weights) s += w.squaredNorm();
  for (const auto& b : d_biases) s += b.squaredNorm();
  return s;
}

Eigen::VectorXd backward(const MlpNetwork& net, const ForwardCache& cache,
                         double upstream, GradientTape& accum) {
  const int layers = net.layer_count();
  if (static_cast<int>(accum.d_weights.size()) != layers)
    throw std::invalid_argument("backward: tape shape mismatch");
  // delta = d loss / d pre-activation of the current layer.
  Eigen::VectorXd delta(1);
  delta[0] = upstream;  // output head is linear
  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::VectorXd& in =
        (l == 0) ? cache.input_std : cache.act[static_cast<std::size_t>(l - 1)];
    accum.d_weights[l].noalias() += delta * in.transpose();
    accum.d_biases[l] += delta;
    Eigen::VectorXd d_in = net.weights[l].transpose() * delta;
    if (l > 0) {
      const Eigen::VectorXd& post = cache.act[static_cast<std::size_t>(l - 1)];
      for (int i = 0; i < d_in.size(); ++i)
        d_in[i] *= activate_grad_from_post(post[i], net.hidden_activation);
    }
    delta = std::move(d_in);
  }
  // delta now holds d loss / d standardized input; undo the standardization.
  return delta.cwiseQuotient(net.feature_scale);
}

std::pair<double, double> bce_loss(double logit, int label) {
  if (label != 0 && label != 1)
    throw std::invalid_argument("bce_loss: label must be 0 or 1");
  const double sign = label == 1 ? 1.0 : -1.0;
  const double t = sign * logit;
  // log(1 + exp(-t)) without overflow on either tail.
  const double loss =
      t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
  // d/dt log(1+exp(-t)) = -1/(1+exp(t))
  const double dt = -1.0 / (1.0 + std::exp(t));
  return {loss, sign * dt};
}

SgdOptimizer::SgdOptimizer(double learning_rate, double momentum)
    : lr_(learning_rate), momentum_(momentum) {
  if (!(lr_ > 0.0))
    throw std::invalid_argument("SgdOptimizer: learning rate must be > 0");
  if (momentum_ < 0.0 || momentum_ >= 1.0)
    throw std::invalid_argument("SgdOptimizer: momentum must be in [0, 1)");
}

void SgdOptimizer::step(MlpNetwork& net, const GradientTape& grad) {
  if (!grad.all_finite())
    throw std::runtime_error("SgdOptimizer: non-finite gradient; step aborted");
  if (!initialized_) {
    velocity_ = GradientTape::like(net);
    initialized_ = true;
  }
  for (int l = 0; l < net.layer_count(); ++l) {
    velocity_.d_weights[l] =
        momentum_ * velocity_.d_weights[l] - lr_ * grad.d_weights[l];
    velocity_.d_biases[l] =
        momentum_ * velocity_.d_biases[l] - lr_ * grad.d_biases[l];
    net.weights[l] += velocity_.d_weights[l];
    net.biases[l] += velocity_.d_biases[l];
  }
}

// ----------------------------------------------------------------------------
// Serialization.
// ----------------------------------------------------------------------------

namespace {
constexpr const char* kFormatHeader = "cfardet-mlp 1";
}

void write_network(std::ostream& out, const MlpNetwork& net) {
  out << kFormatHeader << "\n";
  out << "dims";
  for (int d : net.dims) out << " " << d;
  out << "\n";
  out << "activation "
      << (net.hidden_activation == Activation::Tanh ? "tanh" : "identity")
      << "\n";
  auto write_vec = [&](const char* tag, const Eigen::VectorXd& v) {
    out << tag;
    for (int i = 0; i < v.size(); ++i) {
      out << " ";
      format_double(out, v[i]);
    }
    out << "\n";
  };
  write_vec("feature_mean", net.feature_mean);
  write_vec("feature_scale", net.feature_scale);
  for (int l = 0; l < net.layer_count(); ++l) {
    out << "layer " << l << "\n";
    out << "weights";
    const Eigen::MatrixXd& w = net.weights[l];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) {
        out << " ";
        format_double(out, w(r, c));
      }
    out << "\n";
    write_vec("biases", net.biases[l]);
  }
  out << "end\n";
}

MlpNetwork read_network(std::istream& in) {
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line))
      throw std::invalid_argument("read_network: truncated input");
    return line;
  };
  if (next_line() != kFormatHeader)
    throw std::invalid_argument("read_network: unknown format header");

  MlpNetwork net;
  {
    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag;
    if (tag != "dims") throw std::invalid_argument("read_network: want dims");
    int d;
    while (ls >> d) net.dims.push_back(d);
    check_topology(net.dims);
  }
  {
    std::istringstream ls(next_line());
    std::string tag, act;
    ls >> tag >> act;
    if (tag != "activation")
      throw std::invalid_argument("read_network: want activation");
    if (act == "tanh")
      net.hidden_activation = Activation::Tanh;
    else if (act == "identity")
      net.hidden_activation = Activation::Identity;
    else
      throw std::invalid_argument("read_network: unknown activation " + act);
  }
  auto read_vec = [&](const char* want, Eigen::Index n) {
    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag;
    if (tag != want)
      throw std::invalid_argument(std::string("read_network: want ") + want);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(ls >> v[i]))
        throw std::invalid_argument("read_network: short vector");
    return v;
  };
  net.feature_mean = read_vec("feature_mean", net.dims.front());
  net.feature_scale = read_vec("feature_scale", net.dims.front());
  const int layers = static_cast<int>(net.dims.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    {
      std::istringstream ls(next_line());
      std::string tag;
      int idx;
      ls >> tag >> idx;
      if (tag != "layer" || idx != l)
        throw std::invalid_argument("read_network: want layer header");
    }
    const int rows = net.dims[l + 1];
    const int cols = net.dims[l];
    {
      std::istringstream ls(next_line());
      std::string tag;
      ls >> tag;
      if (tag != "weights")
        throw std::invalid_argument("read_network: want weights");
      Eigen::MatrixXd w(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          if (!(ls >> w(r, c)))
            throw std::invalid_argument("read_network: short weights");
      net.weights.push_back(std::move(w));
    }
    net.biases.push_back(read_vec("biases", rows));
  }
  if (next_line() != "end")
    throw std::invalid_argument("read_network: missing end marker");
  return net;
}

std::string serialize_network(const MlpNetwork& net) {
  std::ostringstream os;
  write_network(os, net);
  return os.str();
}

MlpNetwork deserialize_network(const std::string& text) {
  std::istringstream is(text);
  return read_network(is);
}

}  // namespace cfardet
