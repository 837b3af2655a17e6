#include "cfardet/classical_detectors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

#include "cfardet/stats.hpp"

namespace cfardet {

namespace {

// Solve C y = b through an LLT factorization, throwing if C was singular.
VectorXd llt_solve(const Eigen::LLT<MatrixXd>& llt, const VectorXd& b,
                   const char* context) {
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(context) +
                                ": matrix is not positive definite");
  return llt.solve(b);
}

}  // namespace

DetectorStatistic lrt(const Observation& x, const Density& density0,
                      const Density& density1) {
  if (!density0 || !density1)
    throw std::invalid_argument("lrt: missing density");
  const double p0 = density0(x);
  const double p1 = density1(x);
  if (!(p0 > 0.0))
    throw std::invalid_argument("lrt: H0 density must be strictly positive");
  if (!(p1 > 0.0))
    throw std::invalid_argument("lrt: H1 density must be strictly positive");
  return 2.0 * (std::log(p1) - std::log(p0));
}

DetectorStatistic glrt_dc(const Observation& x) {
  if (x.size() == 0) throw std::invalid_argument("glrt_dc: empty observation");
  const double energy = x.squaredNorm();
  if (energy == 0.0)
    throw std::invalid_argument("glrt_dc: all-zero observation");
  const double s = x.sum();
  return s * s / energy;
}

// ----------------------------------------------------------------------------
// Linear-Gaussian evaluator.
// ----------------------------------------------------------------------------

LinearGaussianEvaluator::LinearGaussianEvaluator(const LinearGaussianSpec& spec,
                                                 const VectorXd& z_n)
    : prior_var_(spec.signal_prior_var) {
  const MatrixXd sigma = spec.noise_cov_fn(z_n);
  if (sigma.rows() != spec.obs_dim() || sigma.cols() != spec.obs_dim())
    throw std::invalid_argument(
        "LinearGaussianEvaluator: covariance dimension mismatch");
  chol_ = spd_cholesky(sigma, "LinearGaussianEvaluator");

  // B = L^-1 H by triangular solve; G = B'B = H' Sigma^-1 H.
  whitened_h_ = chol_.triangularView<Eigen::Lower>().solve(spec.design);
  gram_ = whitened_h_.transpose() * whitened_h_;

  Eigen::HouseholderQR<MatrixXd> qr(whitened_h_);
  const MatrixXd r = qr.matrixQR()
                         .topRows(spec.signal_dim())
                         .triangularView<Eigen::Upper>();
  for (int i = 0; i < spec.signal_dim(); ++i) {
    if (std::abs(r(i, i)) < 1.0e-12)
      throw std::invalid_argument(
          "LinearGaussianEvaluator: whitened design is rank deficient");
  }
  q1_ = qr.householderQ() * MatrixXd::Identity(spec.obs_dim(), spec.signal_dim());

  gram_llt_.compute(gram_);
  if (gram_llt_.info() != Eigen::Success)
    throw std::invalid_argument(
        "LinearGaussianEvaluator: H' Sigma^-1 H is not positive definite");

  const int d = spec.signal_dim();
  if (prior_var_ > 0.0) {
    const MatrixXd posterior =
        gram_ + MatrixXd::Identity(d, d) / prior_var_;
    posterior_llt_.compute(posterior);
    if (posterior_llt_.info() != Eigen::Success)
      throw std::invalid_argument(
          "LinearGaussianEvaluator: posterior matrix is not positive definite");
  }

  // c = -log det(I + sr2 G) via the Cholesky factor of the d x d matrix;
  // exact by the determinant lemma and far better conditioned than forming
  // Sigma + sr2 H H' at large sr2.
  const MatrixXd capacitance =
      MatrixXd::Identity(d, d) + prior_var_ * gram_;
  const MatrixXd lc = spd_cholesky(capacitance, "LinearGaussianEvaluator");
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) logdet += std::log(lc(i, i));
  c_term_ = -2.0 * logdet;
}

double LinearGaussianEvaluator::glrt(const Observation& x) const {
  const VectorXd w = chol_.triangularView<Eigen::Lower>().solve(x);
  return (q1_.transpose() * w).squaredNorm();
}

VectorXd LinearGaussianEvaluator::wls_estimate(const Observation& x) const {
  const VectorXd w = chol_.triangularView<Eigen::Lower>().solve(x);
  return llt_solve(gram_llt_, whitened_h_.transpose() * w,
                   "LinearGaussianEvaluator::wls_estimate");
}

double LinearGaussianEvaluator::pbl(const Observation& x) const {
  if (!(prior_var_ > 0.0))
    throw std::invalid_argument("pbl: signal prior variance must be positive");
  const VectorXd w = chol_.triangularView<Eigen::Lower>().solve(x);
  const VectorXd u = whitened_h_.transpose() * w;  // H' Sigma^-1 x
  const VectorXd v = llt_solve(posterior_llt_, u, "pbl");
  return u.dot(v) + c_term_;
}

DetectorStatistic glrt_linear(const Observation& x,
                              const LinearGaussianSpec& spec,
                              const VectorXd& z_n) {
  return LinearGaussianEvaluator(spec, z_n).glrt(x);
}

DetectorStatistic pbl(const Observation& x, const LinearGaussianSpec& spec,
                      const VectorXd& z_n) {
  return LinearGaussianEvaluator(spec, z_n).pbl(x);
}

double c_term(const LinearGaussianSpec& spec, const VectorXd& z_n) {
  return LinearGaussianEvaluator(spec, z_n).c_term();
}

// ----------------------------------------------------------------------------
// Adaptive detectors.
// ----------------------------------------------------------------------------

MatrixXd sample_covariance(const MatrixXd& secondary) {
  if (secondary.cols() == 0)
    throw std::invalid_argument("sample_covariance: no secondary samples");
  return secondary * secondary.transpose() /
         static_cast<double>(secondary.cols());
}

namespace {

struct AdaptiveForms {
  double sx = 0.0;  // s' C^-1 x
  double ss = 0.0;  // s' C^-1 s
  double xx = 0.0;  // x' C^-1 x
};

AdaptiveForms adaptive_forms(const Observation& x, const MatrixXd& cov,
                             const VectorXd& s, const char* context) {
  if (x.size() != s.size() || cov.rows() != x.size())
    throw std::invalid_argument(std::string(context) +
                                ": dimension mismatch");
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(context) +
                                ": singular sample covariance");
  const VectorXd cis = llt.solve(s);
  const VectorXd cix = llt.solve(x);
  AdaptiveForms f;
  f.sx = s.dot(cix);
  f.ss = s.dot(cis);
  f.xx = x.dot(cix);
  return f;
}

}  // namespace

DetectorStatistic amf(const Observation& x, const MatrixXd& secondary,
                      const VectorXd& s) {
  const AdaptiveForms f =
      adaptive_forms(x, sample_covariance(secondary), s, "amf");
  if (!(f.ss > 0.0)) throw std::invalid_argument("amf: degenerate signature");
  return f.sx * f.sx / f.ss;
}

DetectorStatistic kelly(const Observation& x, const MatrixXd& secondary,
                        const VectorXd& s) {
  const AdaptiveForms f =
      adaptive_forms(x, sample_covariance(secondary), s, "kelly");
  if (!(f.ss > 0.0))
    throw std::invalid_argument("kelly: degenerate signature");
  return f.sx * f.sx / (f.ss * (1.0 + f.xx));
}

DetectorStatistic lamf(const Observation& x, const MatrixXd& secondary,
                       const VectorXd& s, double loading) {
  if (loading < 0.0)
    throw std::invalid_argument("lamf: loading must be nonnegative");
  const ShrinkageEstimate est{sample_covariance(secondary), loading};
  const AdaptiveForms f = adaptive_forms(x, est.regularized(), s, "lamf");
  if (!(f.ss > 0.0)) throw std::invalid_argument("lamf: degenerate signature");
  return f.sx * f.sx / f.ss;
}

VectorXd lamf_features(const Observation& x, const MatrixXd& secondary,
                       const VectorXd& s, const VectorXd& lambda_grid) {
  if (lambda_grid.size() == 0)
    throw std::invalid_argument("lamf_features: empty loading grid");
  const MatrixXd cov = sample_covariance(secondary);
  VectorXd out(3 * lambda_grid.size());
  for (int k = 0; k < lambda_grid.size(); ++k) {
    const double loading = lambda_grid[k];
    if (loading < 0.0)
      throw std::invalid_argument("lamf_features: negative loading");
    const ShrinkageEstimate est{cov, loading};
    const AdaptiveForms f =
        adaptive_forms(x, est.regularized(), s, "lamf_features");
    out[3 * k + 0] = f.sx;
    out[3 * k + 1] = f.ss;
    out[3 * k + 2] = f.xx;
  }
  return out;
}

VectorXd default_lambda_grid() {
  VectorXd grid(10);
  for (int i = 0; i < 10; ++i) grid[i] = 0.3 * static_cast<double>(i) / 9.0;
  return grid;
}

VectorXd dc_features(const Observation& x) {
  if (x.size() == 0)
    throw std::invalid_argument("dc_features: empty observation");
  const std::vector<double> v(x.data(), x.data() + x.size());
  const double med = stats::median(v);
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  VectorXd f(4);
  f[0] = stats::mean(v);
  f[1] = stats::variance(v);
  f[2] = med;
  f[3] = stats::median(dev);
  return f;
}

}  // namespace cfardet
