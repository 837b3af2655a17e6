#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cfardet/mmd.hpp"
#include "cfardet/rng.hpp"
#include "cfardet/stats.hpp"

using namespace cfardet;
using doctest::Approx;

TEST_CASE("rbf kernel basics") {
  CHECK(rbf_kernel(1.0, 1.0, 2.0) == 1.0);
  CHECK(rbf_kernel(0.0, 1.0, 1.0) == Approx(std::exp(-0.5)).epsilon(1e-15));
  // Symmetric and shrinking with distance.
  CHECK(rbf_kernel(0.0, 2.0, 1.5) == rbf_kernel(2.0, 0.0, 1.5));
  CHECK(rbf_kernel(0.0, 2.0, 1.0) < rbf_kernel(0.0, 1.0, 1.0));
}

TEST_CASE("biased MMD of two singletons has a closed form") {
  // X = {0}, Y = {t}: MMD^2 = k(0,0) + k(t,t) - 2 k(0,t)
  //                        = 2 (1 - exp(-t^2 / (2 h^2))).
  const KernelSpec kernel = KernelSpec::fixed(1.0);
  for (double t : {0.0, 0.5, 1.0, 3.0}) {
    const std::vector<double> xs = {0.0};
    const std::vector<double> ys = {t};
    const double expect = 2.0 * (1.0 - std::exp(-0.5 * t * t));
    CHECK(mmd_biased(xs, ys, kernel) == Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("biased MMD is nonnegative and zero on identical samples") {
  RngStream rng(1);
  std::vector<double> xs(12);
  for (double& v : xs) v = rng.normal();
  const KernelSpec kernel = KernelSpec::fixed(0.7);
  CHECK(mmd_biased(xs, xs, kernel) == Approx(0.0).epsilon(1e-12));
  std::vector<double> ys(12);
  for (double& v : ys) v = rng.normal() + 1.0;
  CHECK(mmd_biased(xs, ys, kernel) > 0.0);
  // Permutation invariance within each sample.
  std::vector<double> xs_shuffled = xs;
  std::reverse(xs_shuffled.begin(), xs_shuffled.end());
  CHECK(mmd_biased(xs_shuffled, ys, kernel) ==
        Approx(mmd_biased(xs, ys, kernel)).epsilon(1e-14));
}

TEST_CASE("unbiased MMD has mean zero under the null") {
  // U-statistic: average over many independent same-law pairs is ~ 0,
  // while the biased V-statistic sits above zero by its noise floor.
  RngStream rng(2);
  const KernelSpec kernel = KernelSpec::fixed(1.0);
  const int reps = 2000, m = 8;
  double sum_u = 0.0, sum_v = 0.0;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> xs(m), ys(m);
    for (double& v : xs) v = rng.normal();
    for (double& v : ys) v = rng.normal();
    sum_u += mmd_unbiased(xs, ys, kernel);
    sum_v += mmd_biased(xs, ys, kernel);
  }
  CHECK(std::abs(sum_u / reps) < 0.01);
  CHECK(sum_v / reps > 0.02);
}

TEST_CASE("median bandwidth conventions") {
  // Pairwise |xi - xj| distances of (0, 1, 2, 3): six values
  // (1, 1, 1, 2, 2, 3); the lower median is 1.
  const std::vector<double> pooled = {0.0, 1.0, 2.0, 3.0};
  CHECK(median_bandwidth(pooled) == Approx(1.0));
  // Degenerate pooled sample falls back to a unit bandwidth.
  const std::vector<double> flat = {2.0, 2.0, 2.0};
  CHECK(median_bandwidth(flat) == Approx(1.0));
}

TEST_CASE("resolve_kernel freezes the median heuristic") {
  const std::vector<double> pooled = {0.0, 1.0, 2.0, 3.0};
  const KernelSpec resolved =
      resolve_kernel(KernelSpec::median_heuristic(), pooled);
  CHECK_FALSE(resolved.use_median_heuristic);
  CHECK(resolved.bandwidth == Approx(1.0));
  // Fixed kernels pass through untouched.
  const KernelSpec fixed = resolve_kernel(KernelSpec::fixed(0.3), pooled);
  CHECK(fixed.bandwidth == Approx(0.3));
}

TEST_CASE("penalty on two singleton lists matches the closed form") {
  const std::vector<std::vector<double>> lists = {{0.0}, {1.0}};
  const double p =
      cfar_penalty(lists, KernelSpec::fixed(1.0), Pairing::AllPairs);
  CHECK(p == Approx(0.786938680574733).epsilon(1e-12));
  // Identical lists carry no penalty.
  const std::vector<std::vector<double>> same = {{0.5}, {0.5}};
  CHECK(cfar_penalty(same, KernelSpec::fixed(1.0), Pairing::AllPairs) ==
        Approx(0.0));
}

TEST_CASE("all-pairs penalty sums every unordered pair, ring is a cycle") {
  RngStream rng(3);
  std::vector<std::vector<double>> lists(4);
  for (auto& list : lists) {
    list.resize(5);
    for (double& v : list) v = rng.normal();
  }
  const KernelSpec kernel = KernelSpec::fixed(1.0);
  double all = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i)
    for (std::size_t j = i + 1; j < lists.size(); ++j)
      all += mmd_biased(lists[i], lists[j], kernel);
  CHECK(cfar_penalty(lists, kernel, Pairing::AllPairs) ==
        Approx(all).epsilon(1e-13));

  double ring = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i)
    ring += mmd_biased(lists[i], lists[(i + 1) % lists.size()], kernel);
  CHECK(cfar_penalty(lists, kernel, Pairing::Ring) ==
        Approx(ring).epsilon(1e-13));
}

TEST_CASE("mmd_biased_grad matches central finite differences") {
  RngStream rng(4);
  const double h = 0.8;
  std::vector<double> xs(6), ys(7);
  for (double& v : xs) v = rng.normal();
  for (double& v : ys) v = 0.5 + rng.normal();
  std::vector<double> gx(xs.size(), 0.0), gy(ys.size(), 0.0);
  mmd_biased_grad(xs, ys, h, gx, gy);

  const double eps = 1e-6;
  const KernelSpec kernel = KernelSpec::fixed(h);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> plus = xs, minus = xs;
    plus[i] += eps;
    minus[i] -= eps;
    const double fd = (mmd_biased(plus, ys, kernel) -
                       mmd_biased(minus, ys, kernel)) /
                      (2.0 * eps);
    CHECK(gx[i] == Approx(fd).epsilon(1e-5).scale(1.0));
  }
  for (std::size_t j = 0; j < ys.size(); ++j) {
    std::vector<double> plus = ys, minus = ys;
    plus[j] += eps;
    minus[j] -= eps;
    const double fd = (mmd_biased(xs, plus, kernel) -
                       mmd_biased(xs, minus, kernel)) /
                      (2.0 * eps);
    CHECK(gy[j] == Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("penalty gradient accumulates over pairs") {
  RngStream rng(5);
  std::vector<std::vector<double>> lists(3);
  for (auto& list : lists) {
    list.resize(4);
    for (double& v : list) v = rng.normal();
  }
  const KernelSpec kernel = KernelSpec::fixed(1.1);
  std::vector<std::vector<double>> grads;
  const double value =
      cfar_penalty_with_grad(lists, kernel, Pairing::AllPairs, &grads);
  CHECK(value == Approx(cfar_penalty(lists, kernel, Pairing::AllPairs))
                     .epsilon(1e-14));
  REQUIRE(grads.size() == lists.size());

  const double eps = 1e-6;
  for (std::size_t l = 0; l < lists.size(); ++l) {
    REQUIRE(grads[l].size() == lists[l].size());
    for (std::size_t i = 0; i < lists[l].size(); ++i) {
      auto plus = lists, minus = lists;
      plus[l][i] += eps;
      minus[l][i] -= eps;
      const double fd = (cfar_penalty(plus, kernel, Pairing::AllPairs) -
                         cfar_penalty(minus, kernel, Pairing::AllPairs)) /
                        (2.0 * eps);
      CHECK(grads[l][i] == Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("H0-only penalty ignores where the H1 scores sit") {
  // The penalty is a function of the per-nuisance H0 score lists alone;
  // calling it twice with the same lists must agree regardless of any
  // other state. (Guards against accidental global state.)
  const std::vector<std::vector<double>> lists = {{0.1, -0.4}, {0.3, 0.2}};
  const KernelSpec kernel = KernelSpec::fixed(0.9);
  const double a = cfar_penalty(lists, kernel, Pairing::AllPairs);
  const double b = cfar_penalty(lists, kernel, Pairing::AllPairs);
  CHECK(a == b);
  CHECK(a > 0.0);
}
