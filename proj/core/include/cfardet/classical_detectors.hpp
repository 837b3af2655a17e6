#pragma once

#include <functional>

#include "cfardet/model_sim.hpp"

namespace cfardet {

// Detector statistics are plain doubles; every function below returns a
// finite value for valid inputs or throws.
using DetectorStatistic = double;

using Density = std::function<double(const Observation&)>;

// Likelihood ratio test statistic 2 * log(p1(x) / p0(x)). Both densities
// must be strictly positive at x.
DetectorStatistic lrt(const Observation& x, const Density& density0,
                      const Density& density1);

// GLRT for a DC level in white noise of unknown scale: (x' 1)^2 / (x' x).
// Scale-invariant; throws on the all-zero input.
DetectorStatistic glrt_dc(const Observation& x);

// ----------------------------------------------------------------------------
// Linear-Gaussian detectors. All quadratic forms and log-determinants go
// through Cholesky factorizations; an explicit matrix inverse never appears.
// The evaluator caches the factorizations of one (spec, z_n) so Monte Carlo
// loops pay only triangular solves per observation.
// ----------------------------------------------------------------------------

class LinearGaussianEvaluator {
 public:
  LinearGaussianEvaluator(const LinearGaussianSpec& spec, const VectorXd& z_n);

  // GLRT with known nuisance: x' S^-1 H (H' S^-1 H)^-1 H' S^-1 x,
  // equivalently the reduced likelihood ratio at the weighted least squares
  // signal estimate. Under H0 this is exactly chi-square with signal_dim dof.
  double glrt(const Observation& x) const;

  // Prior-based likelihood ratio with Gaussian signal prior N(0, sr2 I):
  //   x' S^-1 H (H' S^-1 H + I/sr2)^-1 H' S^-1 x + c_term
  double pbl(const Observation& x) const;

  // c = log det(Sigma) - log det(Sigma + sr2 H H') = -log det(I + sr2 G),
  // G = H' S^-1 H (the two forms agree exactly by the determinant lemma).
  double c_term() const { return c_term_; }

  // Lower Cholesky factor of Sigma(z_n); exposed for samplers and oracles.
  const MatrixXd& chol() const { return chol_; }

  // Weighted least squares signal estimate (H' S^-1 H)^-1 H' S^-1 x.
  VectorXd wls_estimate(const Observation& x) const;

 private:
  MatrixXd chol_;        // L with Sigma = L L'
  MatrixXd whitened_h_;  // B = L^-1 H
  MatrixXd q1_;          // thin Q factor of B
  MatrixXd gram_;        // G = B' B = H' S^-1 H
  Eigen::LLT<MatrixXd> gram_llt_;       // of G
  Eigen::LLT<MatrixXd> posterior_llt_;  // of G + I / sr2
  double prior_var_;
  double c_term_;
};

// One-shot wrappers over the evaluator.
DetectorStatistic glrt_linear(const Observation& x,
                              const LinearGaussianSpec& spec,
                              const VectorXd& z_n);
DetectorStatistic pbl(const Observation& x, const LinearGaussianSpec& spec,
                      const VectorXd& z_n);
double c_term(const LinearGaussianSpec& spec, const VectorXd& z_n);

// ----------------------------------------------------------------------------
// Adaptive detectors. secondary holds one noise-only sample per column;
// the sample covariance is (1/m) W W' with m = number of columns.
// ----------------------------------------------------------------------------

MatrixXd sample_covariance(const MatrixXd& secondary);

// Sample covariance plus diagonal loading, as used by the loaded AMF.
struct ShrinkageEstimate {
  MatrixXd sample_cov;
  double loading = 0.0;

  MatrixXd regularized() const {
    return sample_cov +
           loading * MatrixXd::Identity(sample_cov.rows(), sample_cov.cols());
  }
};

// AMF: (s' C^-1 x)^2 / (s' C^-1 s) with C the sample covariance.
DetectorStatistic amf(const Observation& x, const MatrixXd& secondary,
                      const VectorXd& s);

// Kelly's GLRT: AMF numerator / ((s' C^-1 s) (1 + x' C^-1 x)).
// The sample covariance is used in every quadratic form, including the
// (1 + x' C^-1 x) factor.
DetectorStatistic kelly(const Observation& x, const MatrixXd& secondary,
                        const VectorXd& s);

// Loaded AMF: AMF with C replaced by C + loading * I.
DetectorStatistic lamf(const Observation& x, const MatrixXd& secondary,
                       const VectorXd& s, double loading);

// Feature stack for learned adaptive detectors: for each loading value l,
// the triple (s' C_l^-1 x, s' C_l^-1 s, x' C_l^-1 x) with C_l = C + l I.
// Output length is 3 * lambda_grid.size(), grouped by loading value.
VectorXd lamf_features(const Observation& x, const MatrixXd& secondary,
                       const VectorXd& s, const VectorXd& lambda_grid);

// Default loading grid: 10 equally spaced values spanning [0, 0.3].
VectorXd default_lambda_grid();

// Feature stack for the DC model: (mean, variance, median, median absolute
// deviation). Variance divides by n; the median uses the midpoint-average
// convention; the MAD is unscaled.
VectorXd dc_features(const Observation& x);

}  // namespace cfardet
