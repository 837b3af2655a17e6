#include "cfardet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "cfardet/classical_detectors.hpp"
#include "cfardet/theory.hpp"
#include "cfardet/version.hpp"

namespace cfardet {

namespace fs = std::filesystem;

namespace {

// Model geometry (rotations, profiles) derives from this fixed stream so the
// experiment definitions are identical across run seeds; the run seed only
// drives Monte Carlo draws.
constexpr std::uint64_t kModelGeometrySeed = 0x6d6f64656c67656fULL;

std::string trim_copy(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string format_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  // %g must re-parse to the same double for the resolved config to be a
  // faithful document; fall back to full precision when it does not.
  if (std::stod(buf) != v) std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i != 0) out += ",";
    out += format_short(values[i]);
  }
  return out;
}

// Reads keys with defaults while recording the allowed-key set and the
// effective value of every key, so a single pass yields both validation and
// the resolved config document.
class ConfigReader {
 public:
  explicit ConfigReader(const Config& user) : user_(user) {}

  std::string text(const std::string& key, const std::string& fallback) {
    allowed_.push_back(key);
    const std::string v = user_.get_string(key, fallback);
    resolved_.set(key, v);
    return v;
  }

  double number(const std::string& key, double fallback) {
    allowed_.push_back(key);
    const double v = user_.get_double(key, fallback);
    resolved_.set(key,
                  user_.has(key) ? user_.get_string(key, "") : format_short(v));
    return v;
  }

  int integer(const std::string& key, int fallback) {
    allowed_.push_back(key);
    const int v = user_.get_int(key, fallback);
    resolved_.set(key, std::to_string(v));
    return v;
  }

  bool boolean(const std::string& key, bool fallback) {
    allowed_.push_back(key);
    const bool v = user_.get_bool(key, fallback);
    resolved_.set(key, v ? "true" : "false");
    return v;
  }

  std::vector<double> numbers(const std::string& key,
                              std::vector<double> fallback) {
    allowed_.push_back(key);
    std::vector<double> v = user_.get_double_list(key, std::move(fallback));
    resolved_.set(key, user_.has(key) ? user_.get_string(key, "")
                                      : join_doubles(v));
    return v;
  }

  std::vector<std::string> texts(const std::string& key,
                                 std::vector<std::string> fallback) {
    allowed_.push_back(key);
    std::vector<std::string> v =
        user_.get_string_list(key, std::move(fallback));
    std::string joined;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i != 0) joined += ",";
      joined += v[i];
    }
    resolved_.set(key, joined);
    return v;
  }

  void record(const std::string& key, const std::string& value) {
    allowed_.push_back(key);
    resolved_.set(key, value);
  }

  // Validates that the user supplied no keys outside the recorded set and
  // hands back the resolved document.
  Config finish() {
    user_.require_known(allowed_);
    return resolved_;
  }

 private:
  const Config& user_;
  Config resolved_;
  std::vector<std::string> allowed_;
};

TrainConfig read_train_config(ConfigReader& reader, std::uint64_t seed,
                              const std::vector<double>& default_hidden) {
  TrainConfig train;
  train.seed = seed;
  train.alpha = reader.number("train.alpha", 0.0);
  train.steps = reader.integer("train.steps", 1500);
  train.lr = reader.number("train.lr", 0.05);
  train.momentum = reader.number("train.momentum", 0.9);
  train.points = reader.integer("train.points", 16);
  train.replicates = reader.integer("train.replicates", 16);
  train.prior_y1 = reader.number("train.prior_y1", 0.5);
  train.calibration_points = reader.integer("train.calibration_points", 256);
  train.fixed_dataset = reader.boolean("train.fixed_dataset", false);

  const std::vector<double> hidden =
      reader.numbers("train.hidden", default_hidden);
  train.hidden.clear();
  for (double h : hidden) {
    if (h < 1.0 || h != std::floor(h))
      throw std::invalid_argument(
          "config: train.hidden entries must be positive integers");
    train.hidden.push_back(static_cast<int>(h));
  }

  const std::string scope = reader.text("train.bce_scope", "all");
  if (scope == "all") {
    train.bce_scope = BceScope::AllReplicates;
  } else if (scope == "first") {
    train.bce_scope = BceScope::FirstReplicate;
  } else {
    throw std::invalid_argument(
        "config: train.bce_scope must be 'all' or 'first'");
  }

  const std::string nuisance = reader.text("train.nuisance_mode", "per_point");
  if (nuisance == "per_point") {
    train.nuisance_mode = BatchNuisanceMode::PerPoint;
  } else if (nuisance == "per_batch") {
    train.nuisance_mode = BatchNuisanceMode::PerBatch;
  } else {
    throw std::invalid_argument(
        "config: train.nuisance_mode must be 'per_point' or 'per_batch'");
  }

  const std::string pairing = reader.text("train.pairing", "all_pairs");
  if (pairing == "all_pairs") {
    train.pairing = Pairing::AllPairs;
  } else if (pairing == "ring") {
    train.pairing = Pairing::Ring;
  } else {
    throw std::invalid_argument(
        "config: train.pairing must be 'all_pairs' or 'ring'");
  }

  const std::string kernel = reader.text("train.kernel", "median");
  const double bandwidth = reader.number("train.kernel_bandwidth", 1.0);
  if (kernel == "median") {
    train.kernel = KernelSpec::median_heuristic();
  } else if (kernel == "fixed") {
    train.kernel = KernelSpec::fixed(bandwidth);
  } else {
    throw std::invalid_argument(
        "config: train.kernel must be 'median' or 'fixed'");
  }
  return train;
}

// Three synthetic clutter classes on n channels: short-, medium-, and
// long-correlation AR(1)-style covariances with increasing power and
// distinct mean fields.
std::vector<Material> builtin_materials(int n) {
  struct Profile {
    const char* name;
    double rho;
    double power;
    double mean_amp;
    double mean_cycles;
  };
  const Profile profiles[] = {
      {"quartz", 0.20, 0.5, 0.0, 1.0},
      {"gravel", 0.55, 1.5, 0.4, 2.0},
      {"loam", 0.85, 4.0, -0.6, 3.0},
  };
  std::vector<Material> out;
  for (const auto& p : profiles) {
    Material m;
    m.name = p.name;
    m.mean.resize(n);
    for (int i = 0; i < n; ++i)
      m.mean[i] = p.mean_amp *
                  std::cos(2.0 * std::numbers::pi * p.mean_cycles * i / n);
    m.covariance.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        m.covariance(i, j) = p.power * std::pow(p.rho, std::abs(i - j));
    out.push_back(std::move(m));
  }
  return out;
}

// Unit-norm localized bump, deliberately unaligned with the clutter means.
VectorXd material_target(int n) {
  VectorXd t(n);
  const double center = 0.35 * n;
  const double width = n / 8.0;
  for (int i = 0; i < n; ++i) {
    const double d = (i - center) / width;
    t[i] = std::exp(-0.5 * d * d);
  }
  t.normalize();
  return t;
}

// SPD matrix with the requested condition number: a fixed Householder
// rotation of a geometric eigenvalue ladder from 0.2 to 0.2 * cond.
MatrixXd conditioned_covariance(int n, double cond) {
  VectorXd v(n);
  RngStream rng(RngKey::from_seed(kModelGeometrySeed).child(0));
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();
  const MatrixXd q =
      MatrixXd::Identity(n, n) - 2.0 * v * v.transpose();
  VectorXd d(n);
  for (int i = 0; i < n; ++i)
    d[i] = 0.2 * std::pow(cond, static_cast<double>(i) / (n - 1));
  return q * d.asDiagonal() * q.transpose();
}

void write_provenance(const fs::path& dir, const Config& resolved,
                      std::uint64_t seed, int jobs) {
  {
    std::ofstream out(dir / "config.resolved");
    if (!out)
      throw std::runtime_error("cannot write " +
                               (dir / "config.resolved").string());
    out << resolved.resolved();
  }
  {
    std::ofstream out(dir / "run_info.txt");
    if (!out)
      throw std::runtime_error("cannot write " +
                               (dir / "run_info.txt").string());
    char hash_buf[32];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(resolved.hash()));
    out << kVersionString << "\n";
    out << "seed " << seed << "\n";
    out << "jobs " << jobs << "\n";
    out << "config_hash " << hash_buf << "\n";
  }
}

template <typename WriteFn>
void write_file(const fs::path& path, const WriteFn& write) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

Experiment make_experiment(const Config& config, std::uint64_t seed) {
  ConfigReader reader(config);
  Experiment e;
  e.name = reader.text("experiment", "");
  reader.record("seed", std::to_string(seed));

  std::vector<double> default_hidden{32.0};
  if (e.name == "adaptive") default_hidden = {64.0};
  if (e.name == "material") default_hidden = {64.0, 64.0};
  e.train = read_train_config(reader, seed, default_hidden);
  e.eval_trials = reader.integer("eval.trials", 10000);
  e.pauc_cap = reader.number("eval.pauc_cap", 0.05);
  e.lamf_lambda = reader.number("eval.lamf_lambda", 0.03);

  if (e.name == "dc-noise") {
    const int n = reader.integer("model.n", 16);
    const std::string noise_name = reader.text("model.noise", "gaussian");
    DcNoise noise;
    noise.eps = reader.number("model.eps", 0.1);
    noise.var_out = reader.number("model.var_out", 100.0);
    if (noise_name == "gaussian") {
      noise.kind = NoiseKind::Gaussian;
    } else if (noise_name == "contaminated") {
      noise.kind = NoiseKind::Contaminated;
    } else {
      throw std::invalid_argument(
          "config: model.noise must be 'gaussian' or 'contaminated'");
    }
    const double sigma_min = reader.number("model.sigma_min", 0.5);
    const double sigma_max = reader.number("model.sigma_max", 1.0);
    const double a_max = reader.number("model.a_max", 1.0);
    const std::vector<double> grid =
        reader.numbers("model.sigma_grid", {0.5, 0.75, 1.0});
    e.detectors = reader.texts("detectors", {"glrt_dc"});
    e.model = std::make_unique<DcModel>(n, noise, sigma_min, sigma_max, a_max,
                                        grid);
    e.feature_map = FeatureMap::dc();
  } else if (e.name == "adaptive") {
    const int n = reader.integer("model.n", 8);
    const int secondary = reader.integer("model.secondary", 32);
    const double a_max = reader.number("model.a_max", 1.5);
    const double scale_min = reader.number("model.scale_min", 0.5);
    const double scale_max = reader.number("model.scale_max", 2.0);
    const double cond = reader.number("model.cond", 50.0);
    e.detectors = reader.texts("detectors", {"amf", "kelly", "lamf"});
    e.signature = VectorXd::Ones(n);
    std::vector<MatrixXd> covariances;
    covariances.push_back(MatrixXd::Identity(n, n));
    covariances.push_back(conditioned_covariance(n, cond));
    e.model = std::make_unique<AdaptiveModel>(e.signature, covariances,
                                              secondary, a_max, scale_min,
                                              scale_max);
    e.feature_map = FeatureMap::adaptive(e.signature, default_lambda_grid());
  } else if (e.name == "material") {
    const int n = reader.integer("model.n", 24);
    const double amplitude = reader.number("model.amplitude", 2.5);
    e.detectors = reader.texts("detectors", {});
    e.model = std::make_unique<MaterialModel>(builtin_materials(n),
                                              material_target(n), amplitude);
    e.feature_map = FeatureMap::identity(n);
  } else {
    throw std::invalid_argument(
        "config: experiment must be 'dc-noise', 'adaptive', or 'material' "
        "(got '" +
        e.name + "')");
  }

  e.resolved = reader.finish();
  return e;
}

std::string detector_display_name(const std::string& name) {
  const std::string trimmed = trim_copy(name);
  const std::size_t eq = trimmed.find('=');
  return trim_copy(eq == std::string::npos ? trimmed : trimmed.substr(0, eq));
}

DetectorFn make_detector(const std::string& name,
                         const Experiment& experiment) {
  const std::string trimmed = trim_copy(name);
  if (trimmed == "glrt_dc") {
    if (experiment.name != "dc-noise")
      throw std::invalid_argument(
          "detector glrt_dc applies to the dc-noise experiment");
    return [](const ModelSample& s) { return glrt_dc(s.x); };
  }
  if (trimmed == "amf" || trimmed == "kelly" || trimmed == "lamf") {
    if (experiment.signature.size() == 0)
      throw std::invalid_argument("detector " + trimmed +
                                  " applies to the adaptive experiment");
    const VectorXd s = experiment.signature;
    if (trimmed == "amf")
      return [s](const ModelSample& m) { return amf(m.x, m.secondary, s); };
    if (trimmed == "kelly")
      return [s](const ModelSample& m) { return kelly(m.x, m.secondary, s); };
    const double loading = experiment.lamf_lambda;
    return [s, loading](const ModelSample& m) {
      return lamf(m.x, m.secondary, s, loading);
    };
  }
  const std::size_t eq = trimmed.find('=');
  if (eq != std::string::npos) {
    const std::string kind = trim_copy(trimmed.substr(0, eq));
    const std::string path = trim_copy(trimmed.substr(eq + 1));
    if (kind != "net" && kind != "cfarnet")
      throw std::invalid_argument("unknown detector '" + trimmed + "'");
    std::ifstream in(path);
    if (!in)
      throw std::runtime_error("cannot open detector file '" + path + "'");
    auto detector = std::make_shared<TrainedDetector>(read_detector(in));
    const FeatureMap& want = experiment.feature_map;
    const FeatureMap& got = detector->feature_map;
    if (got.kind != want.kind || got.dim() != want.dim())
      throw std::runtime_error("detector file '" + path +
                               "' does not match the experiment's feature "
                               "layout");
    return [detector](const ModelSample& m) { return detector->statistic(m); };
  }
  throw std::invalid_argument("unknown detector '" + trimmed + "'");
}

int cmd_train(const Config& config, const std::string& out_dir,
              const std::optional<std::uint64_t>& flag_seed, int jobs) {
  const std::uint64_t seed = resolve_seed(flag_seed, config);
  Experiment e = make_experiment(config, seed);
  e.train.config_hash = e.resolved.hash();

  const TrainResult result = train_detector(e.train, *e.model, e.feature_map);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const std::string& tag = result.detector.tag;
  write_file(dir / (tag + ".detector"),
             [&](std::ostream& out) { write_detector(out, result.detector); });
  write_file(dir / (tag + "_train_log.csv"), [&](std::ostream& out) {
    write_train_log_csv(out, result.log);
  });
  write_provenance(dir, e.resolved, seed, jobs);
  return 0;
}

int cmd_evaluate(const Config& config, const std::string& out_dir,
                 const std::optional<std::uint64_t>& flag_seed, int jobs) {
  const std::uint64_t seed = resolve_seed(flag_seed, config);
  const Experiment e = make_experiment(config, seed);
  if (e.detectors.empty())
    throw std::invalid_argument("evaluate: no detectors configured");

  std::vector<std::string> names;
  for (const auto& d : e.detectors) {
    const std::string name = detector_display_name(d);
    if (std::find(names.begin(), names.end(), name) != names.end())
      throw std::invalid_argument("evaluate: duplicate detector name '" +
                                  name + "'");
    names.push_back(name);
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < e.detectors.size(); ++i) {
    const DetectorFn fn = make_detector(e.detectors[i], e);
    const PerformanceSurface surface =
        estimate_surface(fn, *e.model, e.eval_trials, seed, jobs);
    const fs::path sub = dir / names[i];
    fs::create_directories(sub);
    write_file(sub / "roc.csv",
               [&](std::ostream& out) { write_roc_csv(out, surface); });
    write_file(sub / "fpr_vs_threshold.csv", [&](std::ostream& out) {
      write_fpr_vs_threshold_csv(out, surface);
    });
    const CfarReport report = cfar_deviation(surface);
    write_file(sub / "cfar_report.csv", [&](std::ostream& out) {
      write_cfar_report_csv(out, report, surface);
    });
    const PartialAucResult pauc = partial_auc_worst_case(surface, e.pauc_cap);
    write_file(sub / "pauc.csv", [&](std::ostream& out) {
      write_pauc_csv(out, pauc, surface);
    });
  }
  write_provenance(dir, e.resolved, seed, jobs);
  return 0;
}

int cmd_theory(const Config& config, const std::string& out_dir,
               const std::optional<std::uint64_t>& flag_seed, int jobs) {
  const std::uint64_t seed = resolve_seed(flag_seed, config);
  ConfigReader reader(config);
  const std::string name = reader.text("experiment", "theory");
  if (name != "theory")
    throw std::invalid_argument("cmd_theory: experiment must be 'theory'");
  reader.record("seed", std::to_string(seed));
  const int n = reader.integer("theory.n", 12);
  const int d_r = reader.integer("theory.d_r", 2);
  const bool duplicate_column = reader.boolean("theory.duplicate_column", false);
  const int trials = reader.integer("theory.trials", 100);
  const Config resolved = reader.finish();

  // Probe spec: construction itself validates the configuration (a
  // duplicated design column fails the full-rank check).
  RngStream geometry(RngKey::from_seed(kModelGeometrySeed).child(1));
  MatrixXd h(n, d_r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d_r; ++j) h(i, j) = geometry.normal();
  if (duplicate_column) {
    if (d_r < 2)
      throw std::invalid_argument(
          "cmd_theory: theory.duplicate_column needs theory.d_r >= 2");
    h.col(d_r - 1) = h.col(0);
  }
  MatrixXd w(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) w(i, j) = geometry.normal();
  const MatrixXd base =
      (0.5 * MatrixXd::Identity(n, n) + w * w.transpose() / n).eval();
  const LinearGaussianSpec probe(
      h, [base](const VectorXd& zn) { return (zn[0] * base).eval(); }, 1.0);

  std::vector<TheoryCheck> checks;
  const PblIdentityReport rep = check_pbl_glrt_identity(
      probe, VectorXd::Ones(1), {1.0, 1.0e2, 1.0e4, 1.0e6, 1.0e8}, trials,
      seed);
  double worst_increase = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < rep.reduced_residuals.size(); ++i)
    worst_increase = std::max(
        worst_increase, rep.reduced_residuals[i + 1] - rep.reduced_residuals[i]);
  checks.push_back({"probe_pbl_reduced_residual_at_prior_1e8",
                    rep.reduced_residuals.back(), 1.0e-5,
                    rep.reduced_residuals.back() < 1.0e-5});
  checks.push_back({"probe_pbl_residual_monotone_max_increase", worst_increase,
                    0.0, worst_increase <= 0.0});
  checks.push_back({"probe_pbl_unreduced_identity_residual",
                    rep.unreduced_residual, 1.0e-9,
                    rep.unreduced_residual < 1.0e-9});

  for (auto& check : run_theory_checks(seed, jobs))
    checks.push_back(std::move(check));

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_file(dir / "theory_report.csv", [&](std::ostream& out) {
    write_theory_report_csv(out, checks);
  });
  write_provenance(dir, resolved, seed, jobs);
  return all_pass(checks) ? 0 : 2;
}

int cmd_generate(const Config& config, const std::string& out_dir,
                 const std::optional<std::uint64_t>& flag_seed, int jobs) {
  const std::uint64_t seed = resolve_seed(flag_seed, config);
  const Experiment e = make_experiment(config, seed);
  const ObservationBatch batch =
      build_batch(e.train, *e.model, RngKey::from_seed(seed));

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_file(dir / "batch.csv",
             [&](std::ostream& out) { write_batch_csv(out, batch); });
  write_provenance(dir, e.resolved, seed, jobs);
  (void)jobs;
  return 0;
}

}  // namespace cfardet
