#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cfardet/rng.hpp"

namespace cfardet {

// ============================================================================
// Small dense MLP with a scalar output head, trained by hand-written
// reverse-mode differentiation. Hidden layers use tanh; the output is linear.
// Inputs pass through a stored affine standardization, so the serialized
// network is self-contained.
// ============================================================================

enum class Activation { Tanh, Identity };

struct MlpNetwork {
  std::vector<int> dims;  // e.g. {4, 32, 1}; dims.back() must be 1
  std::vector<Eigen::MatrixXd> weights;  // [layer]: out x in
  std::vector<Eigen::VectorXd> biases;   // [layer]: out
  Activation hidden_activation = Activation::Tanh;
  Eigen::VectorXd feature_mean;   // input standardization offset
  Eigen::VectorXd feature_scale;  // input standardization scale (> 0)

  int input_dim() const { return dims.front(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
  std::size_t parameter_count() const;

  // Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
  // identity standardization.
  static MlpNetwork create(const std::vector<int>& dims, RngStream& rng,
                           Activation hidden = Activation::Tanh);
};

struct ForwardCache {
  Eigen::VectorXd input_raw;
  Eigen::VectorXd input_std;
  std::vector<Eigen::VectorXd> pre;  // pre-activations per layer
  std::vector<Eigen::VectorXd> act;  // post-activations per layer
};

// Scalar logit for one feature vector.
double forward(const MlpNetwork& net, const Eigen::VectorXd& features);
double forward(const MlpNetwork& net, const Eigen::VectorXd& features,
               ForwardCache& cache);

// Parameter gradients, accumulated across backward calls until zeroed.
struct GradientTape {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_biases;

  static GradientTape like(const MlpNetwork& net);
  void zero();
  void scale(double s);
  void axpy(double a, const GradientTape& other);  // this += a * other
  bool all_finite() const;
  double squared_norm() const;
};

// Backpropagate upstream = d(loss)/d(logit) through the cached forward pass,
// accumulating parameter gradients into `accum` and returning the gradient
// with respect to the raw input features (the MMD penalty differentiates
// through scores, so input gradients are part of the contract).
Eigen::VectorXd backward(const MlpNetwork& net, const ForwardCache& cache,
                         double upstream, GradientTape& accum);

// Numerically stable binary cross-entropy of a logit against label in {0,1}:
// loss = log(1 + exp(-(2y-1) * logit)). Returns (loss, d loss / d logit).
std::pair<double, double> bce_loss(double logit, int label);

// Plain SGD with classical momentum: v <- mu v - lr g; w <- w + v.
// Throws on non-finite gradients, leaving the network untouched.
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum);

  void step(MlpNetwork& net, const GradientTape& grad);

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  GradientTape velocity_;
  bool initialized_ = false;
};

// ----------------------------------------------------------------------------
// Versioned flat-text serialization. Doubles are written with 17 significant
// digits, so deserialize(serialize(net)) reproduces the network exactly and
// re-serializing yields identical bytes.
// ----------------------------------------------------------------------------

void write_network(std::ostream& out, const MlpNetwork& net);
MlpNetwork read_network(std::istream& in);

std::string serialize_network(const MlpNetwork& net);
MlpNetwork deserialize_network(const std::string& text);

}  // namespace cfardet
