#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cfardet/classical_detectors.hpp"
#include "cfardet/eval.hpp"
#include "cfardet/model_sim.hpp"
#include "cfardet/rng.hpp"
#include "cfardet/stats.hpp"

using namespace cfardet;
using doctest::Approx;

namespace {

ScoreSurfaceEntry make_entry(std::vector<double> h0, std::vector<double> h1,
                             std::string label = "z") {
  ScoreSurfaceEntry e;
  e.nuisance_label = std::move(label);
  std::sort(h0.begin(), h0.end());
  std::sort(h1.begin(), h1.end());
  e.h0 = std::move(h0);
  e.h1 = std::move(h1);
  return e;
}

// Integer score ladders lo..hi inclusive.
std::vector<double> ladder(int lo, int hi) {
  std::vector<double> v;
  for (int i = lo; i <= hi; ++i) v.push_back(static_cast<double>(i));
  return v;
}

double mann_whitney(const std::vector<double>& h0,
                    const std::vector<double>& h1) {
  double wins = 0.0;
  for (double a : h1)
    for (double b : h0) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return wins / (static_cast<double>(h0.size()) * h1.size());
}

}  // namespace

TEST_CASE("empirical rates count scores at or above the threshold") {
  const ScoreSurfaceEntry e = make_entry({1, 2, 3, 4}, {2.5, 3.5, 4.5, 5.5});
  CHECK(empirical_fpr(e, 2.0) == Approx(0.75));
  CHECK(empirical_fpr(e, 2.5) == Approx(0.5));
  CHECK(empirical_fpr(e, 100.0) == 0.0);
  CHECK(empirical_fpr(e, kAcceptAllThreshold) == 1.0);
  CHECK(empirical_tpr(e, 3.5) == Approx(0.75));
}

TEST_CASE("ROC starts rejecting everything and is monotone") {
  RngStream rng(1);
  std::vector<double> h0(200), h1(200);
  for (double& v : h0) v = rng.normal();
  for (double& v : h1) v = rng.normal() + 1.0;
  const ScoreSurfaceEntry e = make_entry(h0, h1);
  const auto curve = roc_curve(e);
  REQUIRE(curve.size() >= 2);
  CHECK(curve.front().fpr == 0.0);
  CHECK(curve.front().tpr == 0.0);
  CHECK(curve.back().fpr == 1.0);
  CHECK(curve.back().tpr == 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].fpr >= curve[i - 1].fpr);
    CHECK(curve[i].tpr >= curve[i - 1].tpr);
    CHECK(curve[i].gamma < curve[i - 1].gamma);
  }
}

TEST_CASE("AUC equals the Mann-Whitney statistic, ties included") {
  const std::vector<double> h0 = {1, 2, 2, 3, 5};
  const std::vector<double> h1 = {2, 3, 4, 6};
  const ScoreSurfaceEntry e = make_entry(h0, h1);
  CHECK(auc(roc_curve(e)) == Approx(mann_whitney(h0, h1)).epsilon(1e-13));

  RngStream rng(2);
  std::vector<double> a(80), b(60);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = 0.4 + rng.normal();
  const ScoreSurfaceEntry r = make_entry(a, b);
  CHECK(auc(roc_curve(r)) == Approx(mann_whitney(a, b)).epsilon(1e-12));
}

TEST_CASE("negating the statistic flips the AUC") {
  RngStream rng(3);
  std::vector<double> h0(100), h1(100);
  for (double& v : h0) v = rng.normal();
  for (double& v : h1) v = rng.normal() + 0.8;
  std::vector<double> n0 = h0, n1 = h1;
  for (double& v : n0) v = -v;
  for (double& v : n1) v = -v;
  const double a = auc(roc_curve(make_entry(h0, h1)));
  const double b = auc(roc_curve(make_entry(n0, n1)));
  CHECK(a + b == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("threshold calibration picks the smallest qualifying gamma") {
  PerformanceSurface surface;
  surface.entries.push_back(make_entry(ladder(1, 100), ladder(50, 149), "a"));
  surface.entries.push_back(make_entry(ladder(11, 110), ladder(60, 159), "b"));

  // Entry a alone: fraction of {1..100} at or above 96 is exactly 0.05.
  const double ga = calibrate_threshold(surface, 0, 0.05);
  CHECK(ga == Approx(96.0));
  CHECK(empirical_fpr(surface.entries[0], ga) <= 0.05);

  // Worst case must also control entry b, whose scores sit 10 higher.
  const double gw = calibrate_threshold_worst_case(surface, 0.05);
  CHECK(gw == Approx(106.0));
  for (const auto& e : surface.entries)
    CHECK(empirical_fpr(e, gw) <= 0.05);

  // Target 1 accepts everything. Here the H1 scores extend past every H0
  // score, so even FPR 0 is reachable: the smallest pooled candidate above
  // entry a's H0 maximum of 100 is 101.
  CHECK(calibrate_threshold(surface, 0, 1.0) == kAcceptAllThreshold);
  CHECK(calibrate_threshold(surface, 0, 0.0) == Approx(101.0));
  CHECK_THROWS_AS(calibrate_threshold(surface, 5, 0.1), std::invalid_argument);

  // When the pooled maximum is an H0 score, no candidate gets the FPR below
  // 1/n and a target of 0 is unreachable.
  PerformanceSurface capped;
  capped.entries.push_back(make_entry(ladder(1, 100), ladder(1, 50), "a"));
  CHECK_THROWS_AS(calibrate_threshold(capped, 0, 0.0), std::runtime_error);
}

TEST_CASE("chi2_threshold is the chi-squared inverse survival function") {
  CHECK(chi2_threshold(1, 0.05) == Approx(stats::chi2_isf(0.05, 1.0)));
  CHECK(chi2_threshold(3, 0.01) == Approx(stats::chi2_isf(0.01, 3.0)));
  CHECK_THROWS_AS(chi2_threshold(0, 0.05), std::invalid_argument);
}

TEST_CASE("cfar_deviation flags shifted H0 laws and clears identical ones") {
  PerformanceSurface same;
  same.entries.push_back(make_entry(ladder(1, 100), ladder(50, 149), "a"));
  same.entries.push_back(make_entry(ladder(1, 100), ladder(50, 149), "b"));
  const CfarReport ok = cfar_deviation(same);
  REQUIRE(ok.pairs.size() == 1);
  CHECK_FALSE(ok.cfar_rejected);
  CHECK(ok.max_fpr_gap == 0.0);

  PerformanceSurface shifted;
  shifted.entries.push_back(make_entry(ladder(1, 100), ladder(50, 149), "a"));
  shifted.entries.push_back(make_entry(ladder(51, 150), ladder(50, 149), "b"));
  shifted.entries.push_back(make_entry(ladder(1, 100), ladder(50, 149), "c"));
  const CfarReport bad = cfar_deviation(shifted);
  REQUIRE(bad.pairs.size() == 3);
  CHECK(bad.cfar_rejected);
  // Half the mass of entry b sits above everything in entry a.
  CHECK(bad.max_fpr_gap == Approx(0.5));
  CHECK(bad.pairs[0].nuisance_a == 0);
  CHECK(bad.pairs[0].nuisance_b == 1);
  CHECK(bad.pairs[0].reject_at_1pct);
  CHECK_FALSE(bad.pairs[1].reject_at_1pct);  // a vs c identical
  CHECK(bad.pairs[2].reject_at_1pct);        // b vs c shifted again

  PerformanceSurface single;
  single.entries.push_back(make_entry(ladder(1, 10), ladder(1, 10)));
  CHECK_THROWS_AS(cfar_deviation(single), std::invalid_argument);
}

TEST_CASE("worst-case partial AUC on chance and perfect detectors") {
  // Chance: H1 scores equal H0 scores, so TPR(gamma) = FPR(gamma); with 100
  // distinct scores the achievable FPRs are multiples of 0.01 and the
  // 50-point midpoint grid under cap 0.05 averages to exactly 0.02.
  PerformanceSurface chance;
  chance.entries.push_back(make_entry(ladder(1, 100), ladder(1, 100)));
  const PartialAucResult pc = partial_auc_worst_case(chance, 0.05);
  REQUIRE(pc.per_nuisance.size() == 1);
  CHECK(pc.per_nuisance[0] == Approx(0.02).epsilon(1e-12));
  CHECK(pc.fpr_cap == 0.05);

  // Perfect separation: full TPR at every budget.
  PerformanceSurface perfect;
  perfect.entries.push_back(make_entry(ladder(1, 100), ladder(500, 599)));
  const PartialAucResult pp = partial_auc_worst_case(perfect, 0.05);
  CHECK(pp.per_nuisance[0] == Approx(1.0));

  CHECK_THROWS_AS(partial_auc_worst_case(chance, 0.0),
                  std::invalid_argument);
}

TEST_CASE("estimate_surface is deterministic across thread counts") {
  const DcModel model(4, DcNoise{}, 0.5, 1.0, 1.0, {0.5, 1.0});
  const DetectorFn det = [](const ModelSample& s) { return glrt_dc(s.x); };
  const PerformanceSurface s1 = estimate_surface(det, model, 300, 9, 1);
  const PerformanceSurface s4 = estimate_surface(det, model, 300, 9, 4);
  REQUIRE(s1.nuisance_count() == 2);
  REQUIRE(s4.nuisance_count() == 2);
  CHECK(s1.entries[0].nuisance_label == "sigma=0.5");
  for (int k = 0; k < 2; ++k) {
    CHECK(s1.entries[k].h0 == s4.entries[k].h0);
    CHECK(s1.entries[k].h1 == s4.entries[k].h1);
    CHECK(s1.entries[k].h0.size() == 300);
    CHECK(std::is_sorted(s1.entries[k].h0.begin(), s1.entries[k].h0.end()));
    CHECK(std::is_sorted(s1.entries[k].h1.begin(), s1.entries[k].h1.end()));
  }
  // A different seed produces different scores.
  const PerformanceSurface other = estimate_surface(det, model, 300, 10, 1);
  CHECK(other.entries[0].h0 != s1.entries[0].h0);
}

TEST_CASE("CSV writers emit versioned headers") {
  PerformanceSurface surface;
  surface.entries.push_back(make_entry(ladder(1, 20), ladder(10, 29), "a"));
  surface.entries.push_back(make_entry(ladder(1, 20), ladder(10, 29), "b"));

  std::ostringstream roc;
  write_roc_csv(roc, surface);
  CHECK(roc.str().rfind("# cfardet-csv roc 1\nnuisance_id,fpr,tpr\n", 0) == 0);

  std::ostringstream fpr;
  write_fpr_vs_threshold_csv(fpr, surface);
  CHECK(fpr.str().rfind(
            "# cfardet-csv fpr_vs_threshold 1\nnuisance_id,gamma,fpr\n", 0) ==
        0);

  std::ostringstream rep;
  write_cfar_report_csv(rep, cfar_deviation(surface), surface);
  CHECK(rep.str().find("nuisance_a,nuisance_b,ks_stat,ks_pvalue") !=
        std::string::npos);

  std::ostringstream pauc;
  write_pauc_csv(pauc, partial_auc_worst_case(surface, 0.1), surface);
  CHECK(pauc.str().rfind("# cfardet-csv pauc 1", 0) == 0);
}
