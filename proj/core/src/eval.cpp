#include "cfardet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace cfardet {

namespace {

void format_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

// Fraction of `sorted` at or above gamma.
double tail_fraction(const std::vector<double>& sorted, double gamma) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), gamma);
  return static_cast<double>(sorted.end() - it) /
         static_cast<double>(sorted.size());
}

// Fraction of `sorted` strictly above gamma.
double strict_tail_fraction(const std::vector<double>& sorted, double gamma) {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), gamma);
  return static_cast<double>(sorted.end() - it) /
         static_cast<double>(sorted.size());
}

}  // namespace

PerformanceSurface estimate_surface(const DetectorFn& detector,
                                    const Model& model, int trials,
                                    std::uint64_t seed, int jobs) {
  if (!detector) throw std::invalid_argument("estimate_surface: no detector");
  if (trials <= 0)
    throw std::invalid_argument("estimate_surface: trials must be positive");
  if (jobs <= 0) jobs = 1;

  const RngKey root = RngKey::from_seed(seed);
  PerformanceSurface surface;
  surface.entries.resize(static_cast<std::size_t>(model.nuisance_count()));

  for (int k = 0; k < model.nuisance_count(); ++k) {
    ScoreSurfaceEntry& entry = surface.entries[static_cast<std::size_t>(k)];
    entry.nuisance_label = model.nuisance_label(k);
    const RngKey nuisance_key = root.child(static_cast<std::uint64_t>(k));
    for (int hyp = 0; hyp < 2; ++hyp) {
      std::vector<double>& scores = hyp == 0 ? entry.h0 : entry.h1;
      scores.resize(static_cast<std::size_t>(trials));
      const RngKey hyp_key = nuisance_key.child(static_cast<std::uint64_t>(hyp));

      auto run_range = [&](int lo, int hi, std::exception_ptr& err) noexcept {
        try {
          for (int t = lo; t < hi; ++t) {
            const RngKey trial_key =
                hyp_key.child(static_cast<std::uint64_t>(t));
            RngStream param_rng(trial_key.child(0));
            RngStream obs_rng(trial_key.child(1));
            const ParamPoint p = model.sample_param_at(k, hyp, param_rng);
            const ModelSample s = model.sample_obs(p, obs_rng);
            scores[static_cast<std::size_t>(t)] = detector(s);
          }
        } catch (...) {
          err = std::current_exception();
        }
      };

      if (jobs == 1) {
        std::exception_ptr err;
        run_range(0, trials, err);
        if (err) std::rethrow_exception(err);
      } else {
        const int workers = std::min(jobs, trials);
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errs(
            static_cast<std::size_t>(workers));
        const int chunk = (trials + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
          const int lo = w * chunk;
          const int hi = std::min(trials, lo + chunk);
          pool.emplace_back(run_range, lo, hi,
                            std::ref(errs[static_cast<std::size_t>(w)]));
        }
        for (auto& th : pool) th.join();
        for (const auto& err : errs)
          if (err) std::rethrow_exception(err);
      }
      std::sort(scores.begin(), scores.end());
    }
  }
  return surface;
}

std::vector<RocPoint> roc_curve(const ScoreSurfaceEntry& entry) {
  if (entry.h0.empty() || entry.h1.empty())
    throw std::invalid_argument("roc_curve: empty score sample");
  std::vector<double> thresholds;
  thresholds.reserve(entry.h0.size() + entry.h1.size());
  thresholds.insert(thresholds.end(), entry.h0.begin(), entry.h0.end());
  thresholds.insert(thresholds.end(), entry.h1.begin(), entry.h1.end());
  std::sort(thresholds.begin(), thresholds.end(),
            std::greater<double>());  // sweep gamma downward
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  std::vector<RocPoint> curve;
  curve.reserve(thresholds.size() + 1);
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double g : thresholds)
    curve.push_back({g, tail_fraction(entry.h0, g), tail_fraction(entry.h1, g)});
  return curve;
}

double auc(const std::vector<RocPoint>& curve) {
  if (curve.size() < 2) throw std::invalid_argument("auc: degenerate curve");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double dx = curve[i].fpr - curve[i - 1].fpr;
    area += dx * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  }
  return area;
}

double empirical_fpr(const ScoreSurfaceEntry& entry, double gamma) {
  return tail_fraction(entry.h0, gamma);
}

double empirical_tpr(const ScoreSurfaceEntry& entry, double gamma) {
  return tail_fraction(entry.h1, gamma);
}

namespace {

std::vector<double> pooled_candidates(const PerformanceSurface& surface) {
  std::vector<double> pooled;
  for (const auto& e : surface.entries) {
    pooled.insert(pooled.end(), e.h0.begin(), e.h0.end());
    pooled.insert(pooled.end(), e.h1.begin(), e.h1.end());
  }
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
  return pooled;
}

// Smallest candidate gamma with rate(gamma) <= target, where `rate` must be
// non-increasing in gamma. Falls back to -inf when target >= 1; throws when
// no candidate qualifies.
template <typename RateFn>
double calibrate_over(const std::vector<double>& candidates, double target,
                      RateFn rate, const char* context) {
  if (!(target >= 0.0 && target <= 1.0))
    throw std::invalid_argument(std::string(context) +
                                ": target FPR must be in [0, 1]");
  if (target >= 1.0) return kAcceptAllThreshold;
  // Predicate "rate > target" holds on a prefix of the ascending candidates.
  const auto it = std::partition_point(
      candidates.begin(), candidates.end(),
      [&](double g) { return rate(g) > target; });
  if (it == candidates.end())
    throw std::runtime_error(std::string(context) +
                             ": target FPR unreachable on observed scores");
  return *it;
}

}  // namespace

double calibrate_threshold(const PerformanceSurface& surface, int nuisance,
                           double target_fpr) {
  if (nuisance < 0 || nuisance >= surface.nuisance_count())
    throw std::invalid_argument("calibrate_threshold: bad nuisance index");
  const auto candidates = pooled_candidates(surface);
  const auto& entry = surface.entries[static_cast<std::size_t>(nuisance)];
  return calibrate_over(
      candidates, target_fpr,
      [&](double g) { return empirical_fpr(entry, g); },
      "calibrate_threshold");
}

double calibrate_threshold_worst_case(const PerformanceSurface& surface,
                                      double target_fpr) {
  if (surface.entries.empty())
    throw std::invalid_argument("calibrate_threshold_worst_case: empty");
  const auto candidates = pooled_candidates(surface);
  return calibrate_over(
      candidates, target_fpr,
      [&](double g) {
        double worst = 0.0;
        for (const auto& e : surface.entries)
          worst = std::max(worst, empirical_fpr(e, g));
        return worst;
      },
      "calibrate_threshold_worst_case");
}

double chi2_threshold(int dof, double target_fpr) {
  if (dof <= 0) throw std::invalid_argument("chi2_threshold: dof must be > 0");
  return stats::chi2_isf(target_fpr, static_cast<double>(dof));
}

CfarReport cfar_deviation(const PerformanceSurface& surface) {
  const int z = surface.nuisance_count();
  if (z < 2)
    throw std::invalid_argument("cfar_deviation: need >= 2 nuisance values");

  // Threshold grid: pooled H0 scores across nuisances.
  std::vector<double> grid;
  for (const auto& e : surface.entries)
    grid.insert(grid.end(), e.h0.begin(), e.h0.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  CfarReport report;
  for (int a = 0; a < z; ++a) {
    for (int b = a + 1; b < z; ++b) {
      const auto& ea = surface.entries[static_cast<std::size_t>(a)];
      const auto& eb = surface.entries[static_cast<std::size_t>(b)];
      CfarPairReport pair;
      pair.nuisance_a = a;
      pair.nuisance_b = b;
      const stats::KsResult ks = stats::ks_two_sample(ea.h0, eb.h0);
      pair.ks_stat = ks.statistic;
      pair.ks_pvalue = ks.pvalue;
      pair.reject_at_1pct = ks.pvalue < 0.01;
      // The FPR step functions only change at grid values; checking each
      // value on both sides makes the supremum exact.
      double gap = 0.0;
      for (double g : grid) {
        gap = std::max(gap, std::abs(tail_fraction(ea.h0, g) -
                                     tail_fraction(eb.h0, g)));
        gap = std::max(gap, std::abs(strict_tail_fraction(ea.h0, g) -
                                     strict_tail_fraction(eb.h0, g)));
      }
      pair.max_fpr_gap = gap;
      report.max_fpr_gap = std::max(report.max_fpr_gap, gap);
      report.cfar_rejected = report.cfar_rejected || pair.reject_at_1pct;
      report.pairs.push_back(pair);
    }
  }
  return report;
}

PartialAucResult partial_auc_worst_case(const PerformanceSurface& surface,
                                        double fpr_cap) {
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0))
    throw std::invalid_argument("partial_auc_worst_case: cap must be in (0,1]");
  if (surface.entries.empty())
    throw std::invalid_argument("partial_auc_worst_case: empty surface");

  const auto candidates = pooled_candidates(surface);
  constexpr int kGridPoints = 50;

  PartialAucResult result;
  result.fpr_cap = fpr_cap;
  result.per_nuisance.assign(surface.entries.size(), 0.0);

  for (int g = 0; g < kGridPoints; ++g) {
    const double budget =
        fpr_cap * (static_cast<double>(g) + 0.5) / kGridPoints;
    // Smallest candidate meeting the worst-case budget; if none exists the
    // detector cannot guarantee this FPR on the observed support and its
    // TPR contribution is zero.
    double gamma = std::numeric_limits<double>::infinity();
    const auto it = std::partition_point(
        candidates.begin(), candidates.end(), [&](double c) {
          double worst = 0.0;
          for (const auto& e : surface.entries)
            worst = std::max(worst, empirical_fpr(e, c));
          return worst > budget;
        });
    if (it != candidates.end()) gamma = *it;
    for (std::size_t k = 0; k < surface.entries.size(); ++k) {
      const double tpr = std::isinf(gamma)
                             ? 0.0
                             : empirical_tpr(surface.entries[k], gamma);
      result.per_nuisance[k] += tpr / kGridPoints;
    }
  }
  return result;
}

// ----------------------------------------------------------------------------
// CSV writers.
// ----------------------------------------------------------------------------

void write_roc_csv(std::ostream& out, const PerformanceSurface& surface) {
  out << "# cfardet-csv roc 1\n";
  out << "nuisance_id,fpr,tpr\n";
  constexpr std::size_t kMaxPoints = 2048;
  for (std::size_t k = 0; k < surface.entries.size(); ++k) {
    const auto curve = roc_curve(surface.entries[k]);
    const std::size_t n = curve.size();
    const std::size_t stride = n <= kMaxPoints ? 1 : (n + kMaxPoints - 1) / kMaxPoints;
    for (std::size_t i = 0; i < n; i += stride) {
      out << k << ",";
      format_double(out, curve[i].fpr);
      out << ",";
      format_double(out, curve[i].tpr);
      out << "\n";
    }
    // Always keep the (1,1) end of the sweep.
    if ((n - 1) % stride != 0) {
      out << k << ",";
      format_double(out, curve[n - 1].fpr);
      out << ",";
      format_double(out, curve[n - 1].tpr);
      out << "\n";
    }
  }
}

void write_fpr_vs_threshold_csv(std::ostream& out,
                                const PerformanceSurface& surface,
                                int max_points_per_nuisance) {
  out << "# cfardet-csv fpr_vs_threshold 1\n";
  out << "nuisance_id,gamma,fpr\n";
  for (std::size_t k = 0; k < surface.entries.size(); ++k) {
    const auto& h0 = surface.entries[k].h0;
    if (h0.empty()) continue;
    const std::size_t n = h0.size();
    const std::size_t points =
        std::min<std::size_t>(static_cast<std::size_t>(max_points_per_nuisance), n);
    for (std::size_t i = 0; i < points; ++i) {
      // Evenly spaced quantile indices, endpoints included.
      const std::size_t idx =
          points == 1 ? 0 : i * (n - 1) / (points - 1);
      const double gamma = h0[idx];
      out << k << ",";
      format_double(out, gamma);
      out << ",";
      format_double(out, empirical_fpr(surface.entries[k], gamma));
      out << "\n";
    }
  }
}

void write_cfar_report_csv(std::ostream& out, const CfarReport& report,
                           const PerformanceSurface& surface) {
  out << "# cfardet-csv cfar_report 1\n";
  out << "nuisance_a,nuisance_b,ks_stat,ks_pvalue,reject_at_1pct,max_fpr_gap\n";
  for (const auto& p : report.pairs) {
    out << surface.entries[static_cast<std::size_t>(p.nuisance_a)].nuisance_label
        << ","
        << surface.entries[static_cast<std::size_t>(p.nuisance_b)].nuisance_label
        << ",";
    format_double(out, p.ks_stat);
    out << ",";
    format_double(out, p.ks_pvalue);
    out << "," << (p.reject_at_1pct ? 1 : 0) << ",";
    format_double(out, p.max_fpr_gap);
    out << "\n";
  }
}

void write_pauc_csv(std::ostream& out, const PartialAucResult& result,
                    const PerformanceSurface& surface) {
  out << "# cfardet-csv pauc 1\n";
  out << "nuisance_id,partial_auc,fpr_cap\n";
  for (std::size_t k = 0; k < result.per_nuisance.size(); ++k) {
    out << surface.entries[k].nuisance_label << ",";
    format_double(out, result.per_nuisance[k]);
    out << ",";
    format_double(out, result.fpr_cap);
    out << "\n";
  }
}

}  // namespace cfardet
