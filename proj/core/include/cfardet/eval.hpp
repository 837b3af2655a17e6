#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "cfardet/model_sim.hpp"
#include "cfardet/stats.hpp"

namespace cfardet {

// A detector maps one model draw to a scalar statistic; larger means
// "accept H1". The acceptance convention everywhere is T >= gamma.
using DetectorFn = std::function<double(const ModelSample&)>;

// Sorted H0/H1 score samples for one nuisance value.
struct ScoreSurfaceEntry {
  std::string nuisance_label;
  std::vector<double> h0;  // sorted ascending
  std::vector<double> h1;  // sorted ascending
};

struct PerformanceSurface {
  std::vector<ScoreSurfaceEntry> entries;

  int nuisance_count() const { return static_cast<int>(entries.size()); }
};

// Monte Carlo score surface: `trials` H0 and H1 draws per nuisance value.
// Draws are keyed by (seed, nuisance, hypothesis, trial), so results are
// bit-identical for any `jobs` and detectors evaluated at the same seed see
// the same observations (paired comparisons).
PerformanceSurface estimate_surface(const DetectorFn& detector,
                                    const Model& model, int trials,
                                    std::uint64_t seed, int jobs = 1);

// ----------------------------------------------------------------------------
// ROC / AUC.
// ----------------------------------------------------------------------------

struct RocPoint {
  double gamma = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Empirical ROC of one nuisance entry: one point per unique score plus the
// (0,0) endpoint, sweeping the threshold downward with acceptance T >= gamma.
std::vector<RocPoint> roc_curve(const ScoreSurfaceEntry& entry);

// Trapezoidal area under the ROC. Equals the Mann-Whitney statistic
// (ties counted 1/2) exactly.
double auc(const std::vector<RocPoint>& curve);

// ----------------------------------------------------------------------------
// Threshold calibration. Candidate thresholds are the pooled observed scores
// (all nuisances, both hypotheses) plus the accept-everything sentinel
// -infinity. The calibrated threshold is the smallest candidate whose
// empirical FPR is <= target; a target of 1.0 returns -infinity. Throws if
// no candidate reaches the target (e.g. all scores equal and target < 1).
// ----------------------------------------------------------------------------

inline constexpr double kAcceptAllThreshold =
    -std::numeric_limits<double>::infinity();

double calibrate_threshold(const PerformanceSurface& surface, int nuisance,
                           double target_fpr);
double calibrate_threshold_worst_case(const PerformanceSurface& surface,
                                      double target_fpr);

// Right-continuous empirical rates at threshold gamma (acceptance T >= gamma).
double empirical_fpr(const ScoreSurfaceEntry& entry, double gamma);
double empirical_tpr(const ScoreSurfaceEntry& entry, double gamma);

// Chi-square inverse survival function: the threshold gamma with
// P(chi2_d >= gamma) = target. Thin wrapper over stats::chi2_isf, exposed
// here because analytic detector thresholds are an evaluation concern.
double chi2_threshold(int dof, double target_fpr);

// ----------------------------------------------------------------------------
// CFAR deviation: how far the H0 score distribution drifts across nuisances.
// ----------------------------------------------------------------------------

struct CfarPairReport {
  int nuisance_a = 0;
  int nuisance_b = 0;
  double ks_stat = 0.0;
  double ks_pvalue = 1.0;
  bool reject_at_1pct = false;
  double max_fpr_gap = 0.0;  // sup over the threshold grid of |FPR_a - FPR_b|
};

struct CfarReport {
  std::vector<CfarPairReport> pairs;
  double max_fpr_gap = 0.0;   // max over pairs
  bool cfar_rejected = false; // any pairwise KS rejection at 1%
};

// Threshold grid = pooled H0 scores; FPR gaps are evaluated on both sides of
// every grid point, so the reported sup is exact for the step functions.
CfarReport cfar_deviation(const PerformanceSurface& surface);

// ----------------------------------------------------------------------------
// Worst-case partial AUC: mean TPR over a 50-point midpoint grid of FPR
// budgets in (0, cap], with the threshold calibrated to the worst-case FPR
// at each budget. Normalized by the cap: a perfect detector scores 1, a
// score-independent detector about cap/2.
// ----------------------------------------------------------------------------

struct PartialAucResult {
  double fpr_cap = 0.0;
  std::vector<double> per_nuisance;  // one value per nuisance entry
};

PartialAucResult partial_auc_worst_case(const PerformanceSurface& surface,
                                        double fpr_cap);

// ----------------------------------------------------------------------------
// CSV writers (fixed, versioned headers; deterministic bytes).
// ----------------------------------------------------------------------------

void write_roc_csv(std::ostream& out, const PerformanceSurface& surface);
void write_fpr_vs_threshold_csv(std::ostream& out,
                                const PerformanceSurface& surface,
                                int max_points_per_nuisance = 512);
void write_cfar_report_csv(std::ostream& out, const CfarReport& report,
                           const PerformanceSurface& surface);
void write_pauc_csv(std::ostream& out, const PartialAucResult& result,
                    const PerformanceSurface& surface);

}  // namespace cfardet
