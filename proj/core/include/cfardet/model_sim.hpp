#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cfardet/rng.hpp"

namespace cfardet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// A single measurement vector.
using Observation = Eigen::VectorXd;

enum class DomainTag { Z0, Z1 };

// One point in parameter space: hypothesis label plus the parameter values.
// Layout of `values` is model-specific:
//   DC model:        [A, sigma]
//   adaptive model:  [A, covariance_index, scale]
//   material model:  [material_index, amplitude]
struct ParamPoint {
  int label = 0;  // 0 under H0, 1 under H1
  VectorXd values;
  DomainTag domain_tag = DomainTag::Z0;
};

// One model draw: the primary measurement plus optional noise-only secondary
// data (one sample per column; empty for models without secondary data).
struct ModelSample {
  Observation x;
  MatrixXd secondary;
};

// A labeled batch: N parameter points, M replicate draws per point.
struct ObservationBatch {
  std::vector<ParamPoint> points;
  std::vector<std::vector<ModelSample>> replicates;  // [point][replicate]

  int point_count() const { return static_cast<int>(points.size()); }
  int replicate_count() const {
    return replicates.empty() ? 0 : static_cast<int>(replicates.front().size());
  }
};

// ----------------------------------------------------------------------------
// Primitive samplers.
// ----------------------------------------------------------------------------

enum class NoiseKind { Gaussian, Contaminated };

// Contamination: each coordinate independently draws its noise from
// N(0, var_out) with probability eps and from N(0, 1) otherwise.
struct DcNoise {
  NoiseKind kind = NoiseKind::Gaussian;
  double eps = 0.1;
  double var_out = 100.0;
};

// x = A * 1 + sigma * n with param = (A, sigma). sigma = 0 is accepted and
// yields the degenerate draw x = A * 1 exactly; sigma < 0 is rejected.
Observation sample_dc(const ParamPoint& param, int n, const DcNoise& noise,
                      RngStream& rng);

// x = H z_r + c, c ~ N(0, Sigma(z_n)). H must have full column rank and the
// covariance must be symmetric positive definite (both checked).
struct LinearGaussianSpec {
  using CovFn = std::function<MatrixXd(const VectorXd&)>;

  MatrixXd design;               // H: obs_dim x signal_dim
  CovFn noise_cov_fn;            // z_n -> Sigma(z_n)
  double signal_prior_var = 1.0; // sigma_r^2 of the Gaussian signal prior

  LinearGaussianSpec(MatrixXd H, CovFn cov_fn, double prior_var);

  int obs_dim() const { return static_cast<int>(design.rows()); }
  int signal_dim() const { return static_cast<int>(design.cols()); }
};

Observation sample_linear_gaussian(const LinearGaussianSpec& spec,
                                   const VectorXd& z_r, const VectorXd& z_n,
                                   RngStream& rng);

// Primary x = A s + c plus secondary_count i.i.d. noise-only columns, all
// noise N(0, Sigma). label = 0 forces A = 0 in the primary draw.
struct AdaptiveSpec {
  VectorXd signature;      // s
  MatrixXd covariance;     // Sigma, SPD (checked)
  int secondary_count = 0; // >= dim(s) (checked)
  double amplitude = 1.0;  // A used for label = 1 draws

  AdaptiveSpec(VectorXd s, MatrixXd sigma, int n_secondary, double a);

  int dim() const { return static_cast<int>(signature.size()); }
};

// Returns (primary, secondary); secondary has secondary_count columns.
std::pair<Observation, MatrixXd> sample_adaptive(const AdaptiveSpec& spec,
                                                 int label, RngStream& rng);

struct Material {
  std::string name;
  VectorXd mean;
  MatrixXd covariance;  // SPD (checked on model construction)
};

// v ~ N(mean_k, Sigma_k) for the selected material; x = v + amplitude * t
// when label = 1, x = v otherwise.
Observation sample_material_model(const std::vector<Material>& materials,
                                  const VectorXd& target, double amplitude,
                                  int label, int material_index,
                                  RngStream& rng);

// Cholesky factor (lower) of an SPD matrix; throws std::invalid_argument
// naming `context` if the matrix is not symmetric positive definite.
MatrixXd spd_cholesky(const MatrixXd& m, const char* context);

// ----------------------------------------------------------------------------
// Experiment models: a uniform interface over the three generative setups,
// exposing the fake-prior parameter draws used in training and a finite
// nuisance grid used in evaluation.
// ----------------------------------------------------------------------------

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual int obs_dim() const = 0;

  // Draw a parameter point from the fake prior conditioned on the label.
  virtual ParamPoint sample_param(int label, RngStream& rng) const = 0;

  // Finite grid of nuisance values for CFAR evaluation.
  virtual int nuisance_count() const = 0;
  virtual std::string nuisance_label(int k) const = 0;

  // Parameter point pinned at nuisance k; label = 1 draws the discriminative
  // part from the fake prior.
  virtual ParamPoint sample_param_at(int k, int label,
                                     RngStream& rng) const = 0;

  virtual ModelSample sample_obs(const ParamPoint& p, RngStream& rng) const = 0;
};

// DC level in noise: x = A 1 + sigma n; Z0 = {A = 0}, Z1 = {A != 0},
// sigma uniform on [sigma_min, sigma_max] under both hypotheses,
// A uniform on [-a_max, a_max] \ {0} under H1.
class DcModel final : public Model {
 public:
  DcModel(int n, DcNoise noise, double sigma_min, double sigma_max,
          double a_max, std::vector<double> sigma_grid);

  std::string name() const override { return "dc"; }
  int obs_dim() const override { return n_; }
  ParamPoint sample_param(int label, RngStream& rng) const override;
  int nuisance_count() const override {
    return static_cast<int>(sigma_grid_.size());
  }
  std::string nuisance_label(int k) const override;
  ParamPoint sample_param_at(int k, int label, RngStream& rng) const override;
  ModelSample sample_obs(const ParamPoint& p, RngStream& rng) const override;

  const DcNoise& noise() const { return noise_; }

 private:
  int n_;
  DcNoise noise_;
  double sigma_min_, sigma_max_, a_max_;
  std::vector<double> sigma_grid_;
};

// Adaptive detection: base covariances indexed by the nuisance grid, with a
// continuous uniform scale in [scale_min, scale_max] under the fake prior.
class AdaptiveModel final : public Model {
 public:
  AdaptiveModel(VectorXd signature, std::vector<MatrixXd> covariances,
                int secondary_count, double a_max, double scale_min,
                double scale_max);

  std::string name() const override { return "adaptive"; }
  int obs_dim() const override { return static_cast<int>(signature_.size()); }
  ParamPoint sample_param(int label, RngStream& rng) const override;
  int nuisance_count() const override {
    return static_cast<int>(chols_.size());
  }
  std::string nuisance_label(int k) const override;
  ParamPoint sample_param_at(int k, int label, RngStream& rng) const override;
  ModelSample sample_obs(const ParamPoint& p, RngStream& rng) const override;

  const VectorXd& signature() const { return signature_; }
  int secondary_count() const { return secondary_count_; }

 private:
  VectorXd signature_;
  std::vector<MatrixXd> chols_;  // Cholesky factors of the base covariances
  int secondary_count_;
  double a_max_, scale_min_, scale_max_;
};

// Material clutter: nuisance = material index; H1 plants amplitude * target.
class MaterialModel final : public Model {
 public:
  MaterialModel(std::vector<Material> materials, VectorXd target,
                double amplitude);

  std::string name() const override { return "material"; }
  int obs_dim() const override { return static_cast<int>(target_.size()); }
  ParamPoint sample_param(int label, RngStream& rng) const override;
  int nuisance_count() const override {
    return static_cast<int>(materials_.size());
  }
  std::string nuisance_label(int k) const override;
  ParamPoint sample_param_at(int k, int label, RngStream& rng) const override;
  ModelSample sample_obs(const ParamPoint& p, RngStream& rng) const override;

  const std::vector<Material>& materials() const { return materials_; }
  const VectorXd& target() const { return target_; }
  double amplitude() const { return amplitude_; }

 private:
  std::vector<Material> materials_;
  std::vector<MatrixXd> chols_;
  VectorXd target_;
  double amplitude_;
};

// ----------------------------------------------------------------------------
// Batch CSV round trip. Columns: point_id, replicate_id, label, z components,
// x components (primary measurement only). Doubles are written with 17
// significant digits so values round-trip exactly.
// ----------------------------------------------------------------------------

void write_batch_csv(std::ostream& out, const ObservationBatch& batch);
ObservationBatch read_batch_csv(std::istream& in);

}  // namespace cfardet
