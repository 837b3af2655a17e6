#include "cfardet/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfardet/stats.hpp"

namespace cfardet {

double rbf_kernel(double a, double b, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("rbf_kernel: bandwidth <= 0");
  const double d = a - b;
  return std::exp(-d * d / (2.0 * h * h));
}

double median_bandwidth(std::span<const double> pooled) {
  const std::size_t m = pooled.size();
  if (m < 2) return 1.0;
  std::vector<double> diffs;
  diffs.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      diffs.push_back(std::abs(pooled[i] - pooled[j]));
  const double med = stats::lower_median(std::move(diffs));
  return med > 0.0 ? med : 1.0;  // all values equal -> fallback
}

KernelSpec resolve_kernel(const KernelSpec& kernel,
                          std::span<const double> pooled) {
  if (!kernel.use_median_heuristic) {
    if (!(kernel.bandwidth > 0.0))
      throw std::invalid_argument("resolve_kernel: bandwidth must be > 0");
    return kernel;
  }
  return KernelSpec::fixed(median_bandwidth(pooled));
}

namespace {

KernelSpec resolve_pair(const KernelSpec& kernel, std::span<const double> xs,
                        std::span<const double> ys) {
  if (!kernel.use_median_heuristic) {
    if (!(kernel.bandwidth > 0.0))
      throw std::invalid_argument("mmd: bandwidth must be > 0");
    return kernel;
  }
  std::vector<double> pooled;
  pooled.reserve(xs.size() + ys.size());
  pooled.insert(pooled.end(), xs.begin(), xs.end());
  pooled.insert(pooled.end(), ys.begin(), ys.end());
  return KernelSpec::fixed(median_bandwidth(pooled));
}

}  // namespace

double mmd_biased(std::span<const double> xs, std::span<const double> ys,
                  const KernelSpec& kernel) {
  if (xs.empty() || ys.empty())
    throw std::invalid_argument("mmd_biased: empty sample");
  const double h = resolve_pair(kernel, xs, ys).bandwidth;
  const double m = static_cast<double>(xs.size());
  const double n = static_cast<double>(ys.size());
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (double a : xs)
    for (double b : xs) kxx += rbf_kernel(a, b, h);
  for (double a : ys)
    for (double b : ys) kyy += rbf_kernel(a, b, h);
  for (double a : xs)
    for (double b : ys) kxy += rbf_kernel(a, b, h);
  const double v = kxx / (m * m) + kyy / (n * n) - 2.0 * kxy / (m * n);
  // The V-statistic is a squared RKHS norm; clamp tiny negative rounding.
  return std::max(v, 0.0);
}

double mmd_unbiased(std::span<const double> xs, std::span<const double> ys,
                    const KernelSpec& kernel) {
  if (xs.size() < 2 || ys.size() < 2)
    throw std::invalid_argument("mmd_unbiased: need >= 2 points per sample");
  const double h = resolve_pair(kernel, xs, ys).bandwidth;
  const double m = static_cast<double>(xs.size());
  const double n = static_cast<double>(ys.size());
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < xs.size(); ++j)
      if (i != j) kxx += rbf_kernel(xs[i], xs[j], h);
  for (std::size_t i = 0; i < ys.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j)
      if (i != j) kyy += rbf_kernel(ys[i], ys[j], h);
  for (double a : xs)
    for (double b : ys) kxy += rbf_kernel(a, b, h);
  return kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

void mmd_biased_grad(std::span<const double> xs, std::span<const double> ys,
                     double h, std::span<double> grad_x,
                     std::span<double> grad_y) {
  if (!(h > 0.0))
    throw std::invalid_argument("mmd_biased_grad: bandwidth must be > 0");
  if (grad_x.size() != xs.size() || grad_y.size() != ys.size())
    throw std::invalid_argument("mmd_biased_grad: gradient size mismatch");
  const double m = static_cast<double>(xs.size());
  const double n = static_cast<double>(ys.size());
  const double inv_h2 = 1.0 / (h * h);
  // d/da k(a,b) = -(a-b)/h^2 * k(a,b); within-sample terms appear twice.
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double g = 0.0;
    for (double b : xs)
      g += -(xs[i] - b) * inv_h2 * rbf_kernel(xs[i], b, h) * 2.0 / (m * m);
    for (double b : ys)
      g -= -(xs[i] - b) * inv_h2 * rbf_kernel(xs[i], b, h) * 2.0 / (m * n);
    grad_x[i] += g;
  }
  for (std::size_t j = 0; j < ys.size(); ++j) {
    double g = 0.0;
    for (double b : ys)
      g += -(ys[j] - b) * inv_h2 * rbf_kernel(ys[j], b, h) * 2.0 / (n * n);
    for (double a : xs)
      g -= -(ys[j] - a) * inv_h2 * rbf_kernel(ys[j], a, h) * 2.0 / (m * n);
    grad_y[j] += g;
  }
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> make_pairs(std::size_t k,
                                                            Pairing pairing) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (pairing == Pairing::AllPairs) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
  } else {
    if (k == 2) {
      pairs.emplace_back(0, 1);
    } else {
      for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(i, (i + 1) % k);
    }
  }
  return pairs;
}

KernelSpec resolve_lists(const KernelSpec& kernel,
                         const std::vector<std::vector<double>>& lists) {
  if (!kernel.use_median_heuristic) {
    if (!(kernel.bandwidth > 0.0))
      throw std::invalid_argument("cfar_penalty: bandwidth must be > 0");
    return kernel;
  }
  std::vector<double> pooled;
  for (const auto& l : lists) pooled.insert(pooled.end(), l.begin(), l.end());
  return KernelSpec::fixed(median_bandwidth(pooled));
}

}  // namespace

double cfar_penalty(const std::vector<std::vector<double>>& score_lists,
                    const KernelSpec& kernel, Pairing pairing) {
  return cfar_penalty_with_grad(score_lists, kernel, pairing, nullptr);
}

double cfar_penalty_with_grad(
    const std::vector<std::vector<double>>& score_lists,
    const KernelSpec& kernel, Pairing pairing,
    std::vector<std::vector<double>>* grads) {
  if (score_lists.size() < 2)
    throw std::invalid_argument("cfar_penalty: need >= 2 score lists");
  for (const auto& l : score_lists)
    if (l.empty()) throw std::invalid_argument("cfar_penalty: empty list");

  const KernelSpec resolved = resolve_lists(kernel, score_lists);
  if (grads) {
    grads->assign(score_lists.size(), {});
    for (std::size_t i = 0; i < score_lists.size(); ++i)
      (*grads)[i].assign(score_lists[i].size(), 0.0);
  }

  double penalty = 0.0;
  for (const auto& [i, j] : make_pairs(score_lists.size(), pairing)) {
    penalty += mmd_biased(score_lists[i], score_lists[j], resolved);
    if (grads)
      mmd_biased_grad(score_lists[i], score_lists[j], resolved.bandwidth,
                      (*grads)[i], (*grads)[j]);
  }
  return penalty;
}

}  // namespace cfardet
