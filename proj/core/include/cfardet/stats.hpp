#pragma once

#include <functional>
#include <span>
#include <vector>

namespace cfardet::stats {

// ============================================================================
// Scalar special functions and distribution tests used by eval/ and theory/.
// All chi-square machinery is built on the regularized incomplete gamma
// function (series expansion and Lentz continued fraction).
// ============================================================================

// Regularized lower incomplete gamma P(a, x) and upper Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Central chi-square with k degrees of freedom.
double chi2_pdf(double x, double k);
double chi2_cdf(double x, double k);
double chi2_sf(double x, double k);
// Inverse survival: smallest x with P(X >= x) = sf. sf in (0, 1).
double chi2_isf(double sf, double k);

// Noncentral chi-square CDF via the Poisson-weighted series of central CDFs,
// truncated once the accumulated Poisson mass reaches 1 - 1e-10 (relative
// tail 1e-10). lambda >= 0.
double noncentral_chi2_cdf(double x, double k, double lambda);
// Quantile (inverse CDF) by bisection on the series CDF.
double noncentral_chi2_quantile(double p, double k, double lambda);

// ----------------------------------------------------------------------------
// Kolmogorov-Smirnov.
// ----------------------------------------------------------------------------

// Two-sample KS statistic; both inputs must be sorted ascending.
double ks_statistic(std::span<const double> a_sorted,
                    std::span<const double> b_sorted);

// One-sample KS statistic of a sorted sample against a CDF.
double ks_statistic_vs_cdf(std::span<const double> sorted,
                           const std::function<double(double)>& cdf);

// Asymptotic KS p-value. n_eff is the sample size for one-sample tests and
// n1*n2/(n1+n2) for two-sample tests.
double ks_pvalue(double d, double n_eff);

struct KsResult {
  double statistic = 0.0;
  double pvalue = 1.0;
};

KsResult ks_two_sample(std::span<const double> a_sorted,
                       std::span<const double> b_sorted);
KsResult ks_one_sample(std::span<const double> sorted,
                       const std::function<double(double)>& cdf);

// ----------------------------------------------------------------------------
// Small sample-statistics helpers shared across modules.
// ----------------------------------------------------------------------------

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // population (divide by n)

// Midpoint-average median (even length: mean of the two middle values).
double median(std::vector<double> v);
// Lower median: sorted value at index (m - 1) / 2.
double lower_median(std::vector<double> v);

}  // namespace cfardet::stats
