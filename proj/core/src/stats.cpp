#include "cfardet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfardet::stats {

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 1.0e-15;
constexpr double kTiny = 1.0e-300;

// Series expansion of P(a, x); converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x); converges fast for x >= a + 1.
double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_p: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_q: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_pdf(double x, double k) {
  if (x < 0.0) return 0.0;
  const double a = 0.5 * k;
  if (x == 0.0) return (k < 2.0) ? std::numeric_limits<double>::infinity()
                                 : (k == 2.0 ? 0.5 : 0.0);
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) -
                  std::lgamma(a));
}

double chi2_cdf(double x, double k) {
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi2_sf(double x, double k) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * k, 0.5 * x);
}

double chi2_isf(double sf, double k) {
  if (!(sf > 0.0 && sf < 1.0))
    throw std::invalid_argument("chi2_isf: survival target must be in (0,1)");
  // Bracket the root of sf(x) = target, then bisect. sf is strictly
  // decreasing in x, so bisection is unconditionally safe.
  double lo = 0.0;
  double hi = std::max(k, 1.0);
  while (chi2_sf(hi, k) > sf) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_sf(mid, k) > sf)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1.0e-13 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

double noncentral_chi2_cdf(double x, double k, double lambda) {
  if (lambda < 0.0)
    throw std::invalid_argument("noncentral_chi2_cdf: lambda must be >= 0");
  if (x <= 0.0) return 0.0;
  if (lambda == 0.0) return chi2_cdf(x, k);
  const double half = 0.5 * lambda;
  // Poisson(half)-weighted mixture of central chi-square CDFs with k + 2j dof.
  double w = std::exp(-half);  // weight at j = 0
  double cum_w = w;
  double cdf = w * chi2_cdf(x, k);
  for (int j = 1; j < 100000; ++j) {
    w *= half / static_cast<double>(j);
    cdf += w * chi2_cdf(x, k + 2.0 * j);
    cum_w += w;
    if (1.0 - cum_w < 1.0e-10) break;  // relative Poisson tail below 1e-10
  }
  return std::min(cdf, 1.0);
}

double noncentral_chi2_quantile(double p, double k, double lambda) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("noncentral_chi2_quantile: p must be in (0,1)");
  double lo = 0.0;
  double hi = k + lambda + 10.0;
  while (noncentral_chi2_cdf(hi, k, lambda) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (noncentral_chi2_cdf(mid, k, lambda) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1.0e-12 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_statistic: empty sample");
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < n1 && j < n2) {
    const double x1 = a[i];
    const double x2 = b[j];
    if (x1 <= x2) ++i;
    if (x2 <= x1) ++j;
    const double f1 = static_cast<double>(i) / static_cast<double>(n1);
    const double f2 = static_cast<double>(j) / static_cast<double>(n2);
    d = std::max(d, std::abs(f1 - f2));
  }
  return d;
}

double ks_statistic_vs_cdf(std::span<const double> sorted,
                           const std::function<double(double)>& cdf) {
  if (sorted.empty())
    throw std::invalid_argument("ks_statistic_vs_cdf: empty sample");
  const std::size_t n = sorted.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(sorted[i]);
    const double lo = static_cast<double>(i) / static_cast<double>(n);
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
    d = std::max(d, std::max(std::abs(f - lo), std::abs(hi - f)));
  }
  return d;
}

double ks_pvalue(double d, double n_eff) {
  const double sn = std::sqrt(n_eff);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 1.0e-6) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int kk = 1; kk <= 101; ++kk) {
    const double term = std::exp(-2.0 * lambda * lambda * kk * kk);
    sum += sign * term;
    sign = -sign;
    if (term < 1.0e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  const double d = ks_statistic(a, b);
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  return {d, ks_pvalue(d, n1 * n2 / (n1 + n2))};
}

KsResult ks_one_sample(std::span<const double> sorted,
                       const std::function<double(double)>& cdf) {
  const double d = ks_statistic_vs_cdf(sorted, cdf);
  return {d, ks_pvalue(d, static_cast<double>(sorted.size()))};
}

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return (m % 2 == 1) ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

double lower_median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("lower_median: empty input");
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k),
                   v.end());
  return v[k];
}

}  // namespace cfardet::stats
