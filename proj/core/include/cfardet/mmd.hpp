#pragma once

#include <span>
#include <vector>

namespace cfardet {

// ============================================================================
// Scalar maximum mean discrepancy with a Gaussian RBF kernel
//   k(a, b) = exp(-(a - b)^2 / (2 h^2)),
// plus the CFAR training penalty: the sum of biased MMD estimates between the
// per-point H0 score lists.
// ============================================================================

struct KernelSpec {
  // Explicit bandwidth h > 0, or the median-heuristic sentinel (bandwidth
  // resolved from the data the estimator sees, once per call).
  double bandwidth = 1.0;
  bool use_median_heuristic = false;

  static KernelSpec median_heuristic() { return {0.0, true}; }
  static KernelSpec fixed(double h) { return {h, false}; }
};

double rbf_kernel(double a, double b, double h);

// Median-heuristic bandwidth: the lower median (sorted index (m-1)/2) of all
// pairwise absolute differences. Returns 1.0 when fewer than two distinct
// values exist, so degenerate inputs never error.
double median_bandwidth(std::span<const double> pooled);

// Biased (V-statistic) MMD estimate; nonnegative for any inputs.
double mmd_biased(std::span<const double> xs, std::span<const double> ys,
                  const KernelSpec& kernel);

// Unbiased (U-statistic) estimate; may be negative. Needs >= 2 points/side.
double mmd_unbiased(std::span<const double> xs, std::span<const double> ys,
                    const KernelSpec& kernel);

// Gradient of mmd_biased with respect to every input score, with the
// bandwidth held fixed (resolve a median-heuristic kernel first).
void mmd_biased_grad(std::span<const double> xs, std::span<const double> ys,
                     double bandwidth, std::span<double> grad_x,
                     std::span<double> grad_y);

enum class Pairing { AllPairs, Ring };

struct PenaltyConfig {
  double weight = 1.0;  // alpha
  Pairing pairing = Pairing::AllPairs;
  KernelSpec kernel = KernelSpec::median_heuristic();
};

// Resolve a kernel against pooled data: median-heuristic kernels get a
// concrete bandwidth, explicit kernels pass through (bandwidth must be > 0).
KernelSpec resolve_kernel(const KernelSpec& kernel,
                          std::span<const double> pooled);

// CFAR penalty over per-point H0 score lists: the sum of mmd_biased over the
// selected unordered pairs of lists. AllPairs uses every i < j; Ring pairs i
// with i+1 cyclically (deduplicated, so two lists form a single pair).
// A median-heuristic kernel is resolved once from all scores pooled.
double cfar_penalty(const std::vector<std::vector<double>>& score_lists,
                    const KernelSpec& kernel, Pairing pairing);

// Same value, plus the gradient with respect to every score (bandwidth held
// fixed at its resolved value).
double cfar_penalty_with_grad(
    const std::vector<std::vector<double>>& score_lists,
    const KernelSpec& kernel, Pairing pairing,
    std::vector<std::vector<double>>* grads);

}  // namespace cfardet
