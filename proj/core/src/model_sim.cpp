#include "cfardet/model_sim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cfardet {

namespace {

VectorXd standard_normal_vector(int n, RngStream& rng) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

void format_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

MatrixXd spd_cholesky(const MatrixXd& m, const char* context) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(context) +
                                ": covariance must be square");
  if (!m.isApprox(m.transpose(), 1.0e-12))
    throw std::invalid_argument(std::string(context) +
                                ": covariance must be symmetric");
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(context) +
                                ": covariance is not positive definite");
  return llt.matrixL();
}

// ----------------------------------------------------------------------------
// Primitive samplers.
// ----------------------------------------------------------------------------

Observation sample_dc(const ParamPoint& param, int n, const DcNoise& noise,
                      RngStream& rng) {
  if (n <= 0) throw std::invalid_argument("sample_dc: n must be positive");
  if (param.values.size() < 2)
    throw std::invalid_argument("sample_dc: param must hold (A, sigma)");
  const double a = param.values[0];
  const double sigma = param.values[1];
  if (sigma < 0.0)
    throw std::invalid_argument("sample_dc: sigma must be nonnegative");
  if (noise.kind == NoiseKind::Contaminated &&
      (noise.eps < 0.0 || noise.eps > 1.0))
    throw std::invalid_argument("sample_dc: eps must be in [0, 1]");
  if (noise.kind == NoiseKind::Contaminated && noise.var_out <= 0.0)
    throw std::invalid_argument("sample_dc: var_out must be positive");

  Observation x(n);
  const double sd_out = std::sqrt(noise.var_out);
  for (int i = 0; i < n; ++i) {
    double nk = rng.normal();
    if (noise.kind == NoiseKind::Contaminated && rng.bernoulli(noise.eps))
      nk *= sd_out;
    x[i] = a + sigma * nk;
  }
  return x;
}

LinearGaussianSpec::LinearGaussianSpec(MatrixXd H, CovFn cov_fn,
                                       double prior_var)
    : design(std::move(H)),
      noise_cov_fn(std::move(cov_fn)),
      signal_prior_var(prior_var) {
  if (design.rows() <= 0 || design.cols() <= 0)
    throw std::invalid_argument("LinearGaussianSpec: empty design matrix");
  if (design.cols() > design.rows())
    throw std::invalid_argument(
        "LinearGaussianSpec: more signal dimensions than observations");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  if (qr.rank() < design.cols())
    throw std::invalid_argument(
        "LinearGaussianSpec: design matrix is rank deficient");
  if (!noise_cov_fn)
    throw std::invalid_argument("LinearGaussianSpec: missing covariance fn");
  if (!(signal_prior_var >= 0.0))
    throw std::invalid_argument(
        "LinearGaussianSpec: signal prior variance must be nonnegative");
}

Observation sample_linear_gaussian(const LinearGaussianSpec& spec,
                                   const VectorXd& z_r, const VectorXd& z_n,
                                   RngStream& rng) {
  if (z_r.size() != spec.signal_dim())
    throw std::invalid_argument("sample_linear_gaussian: z_r dimension");
  const MatrixXd sigma = spec.noise_cov_fn(z_n);
  if (sigma.rows() != spec.obs_dim())
    throw std::invalid_argument(
        "sample_linear_gaussian: covariance dimension mismatch");
  const MatrixXd l = spd_cholesky(sigma, "sample_linear_gaussian");
  return spec.design * z_r + l * standard_normal_vector(spec.obs_dim(), rng);
}

AdaptiveSpec::AdaptiveSpec(VectorXd s, MatrixXd sigma, int n_secondary,
                           double a)
    : signature(std::move(s)),
      covariance(std::move(sigma)),
      secondary_count(n_secondary),
      amplitude(a) {
  if (signature.size() == 0)
    throw std::invalid_argument("AdaptiveSpec: empty signature");
  if (covariance.rows() != signature.size() ||
      covariance.cols() != signature.size())
    throw std::invalid_argument("AdaptiveSpec: covariance dimension mismatch");
  if (secondary_count < signature.size())
    throw std::invalid_argument(
        "AdaptiveSpec: secondary_count must be >= observation dimension");
  spd_cholesky(covariance, "AdaptiveSpec");  // SPD check
}

std::pair<Observation, MatrixXd> sample_adaptive(const AdaptiveSpec& spec,
                                                 int label, RngStream& rng) {
  const int n = spec.dim();
  const MatrixXd l = spd_cholesky(spec.covariance, "sample_adaptive");
  Observation primary = l * standard_normal_vector(n, rng);
  if (label != 0) primary += spec.amplitude * spec.signature;
  MatrixXd secondary(n, spec.secondary_count);
  for (int j = 0; j < spec.secondary_count; ++j)
    secondary.col(j) = l * standard_normal_vector(n, rng);
  return {std::move(primary), std::move(secondary)};
}

Observation sample_material_model(const std::vector<Material>& materials,
                                  const VectorXd& target, double amplitude,
                                  int label, int material_index,
                                  RngStream& rng) {
  if (material_index < 0 ||
      material_index >= static_cast<int>(materials.size()))
    throw std::invalid_argument("sample_material_model: bad material index");
  const Material& mat = materials[static_cast<std::size_t>(material_index)];
  if (mat.mean.size() != target.size())
    throw std::invalid_argument(
        "sample_material_model: target/material dimension mismatch");
  const MatrixXd l = spd_cholesky(mat.covariance, "sample_material_model");
  Observation x =
      mat.mean + l * standard_normal_vector(static_cast<int>(target.size()), rng);
  if (label != 0) x += amplitude * target;
  return x;
}

// ----------------------------------------------------------------------------
// DcModel
// ----------------------------------------------------------------------------

DcModel::DcModel(int n, DcNoise noise, double sigma_min, double sigma_max,
                 double a_max, std::vector<double> sigma_grid)
    : n_(n),
      noise_(noise),
      sigma_min_(sigma_min),
      sigma_max_(sigma_max),
      a_max_(a_max),
      sigma_grid_(std::move(sigma_grid)) {
  if (n_ <= 0) throw std::invalid_argument("DcModel: n must be positive");
  if (!(sigma_min_ > 0.0) || !(sigma_max_ >= sigma_min_))
    throw std::invalid_argument("DcModel: bad sigma range");
  if (!(a_max_ > 0.0)) throw std::invalid_argument("DcModel: bad a_max");
  if (sigma_grid_.empty())
    throw std::invalid_argument("DcModel: empty sigma grid");
}

ParamPoint DcModel::sample_param(int label, RngStream& rng) const {
  ParamPoint p;
  p.label = label;
  p.domain_tag = label == 0 ? DomainTag::Z0 : DomainTag::Z1;
  p.values.resize(2);
  double a = 0.0;
  if (label != 0) {
    do {
      a = rng.uniform(-a_max_, a_max_);
    } while (a == 0.0);  // Z1 requires A != 0
  }
  p.values[0] = a;
  p.values[1] = rng.uniform(sigma_min_, sigma_max_);
  return p;
}

std::string DcModel::nuisance_label(int k) const {
  std::ostringstream os;
  os << "sigma=" << sigma_grid_.at(static_cast<std::size_t>(k));
  return os.str();
}

ParamPoint DcModel::sample_param_at(int k, int label, RngStream& rng) const {
  ParamPoint p = sample_param(label, rng);
  p.values[1] = sigma_grid_.at(static_cast<std::size_t>(k));
  return p;
}

ModelSample DcModel::sample_obs(const ParamPoint& p, RngStream& rng) const {
  return {sample_dc(p, n_, noise_, rng), MatrixXd()};
}

// ----------------------------------------------------------------------------
// AdaptiveModel
// ----------------------------------------------------------------------------

AdaptiveModel::AdaptiveModel(VectorXd signature,
                             std::vector<MatrixXd> covariances,
                             int secondary_count, double a_max,
                             double scale_min, double scale_max)
    : signature_(std::move(signature)),
      secondary_count_(secondary_count),
      a_max_(a_max),
      scale_min_(scale_min),
      scale_max_(scale_max) {
  if (signature_.size() == 0)
    throw std::invalid_argument("AdaptiveModel: empty signature");
  if (covariances.empty())
    throw std::invalid_argument("AdaptiveModel: no covariances");
  if (secondary_count_ < signature_.size())
    throw std::invalid_argument(
        "AdaptiveModel: secondary_count must be >= observation dimension");
  if (!(scale_min_ > 0.0) || !(scale_max_ >= scale_min_))
    throw std::invalid_argument("AdaptiveModel: bad scale range");
  chols_.reserve(covariances.size());
  for (const MatrixXd& c : covariances) {
    if (c.rows() != signature_.size())
      throw std::invalid_argument("AdaptiveModel: covariance dimension");
    chols_.push_back(spd_cholesky(c, "AdaptiveModel"));
  }
}

ParamPoint AdaptiveModel::sample_param(int label, RngStream& rng) const {
  ParamPoint p;
  p.label = label;
  p.domain_tag = label == 0 ? DomainTag::Z0 : DomainTag::Z1;
  p.values.resize(3);
  double a = 0.0;
  if (label != 0) {
    do {
      a = rng.uniform(-a_max_, a_max_);
    } while (a == 0.0);
  }
  p.values[0] = a;
  p.values[1] = static_cast<double>(rng.uniform_index(chols_.size()));
  p.values[2] = rng.uniform(scale_min_, scale_max_);
  return p;
}

std::string AdaptiveModel::nuisance_label(int k) const {
  std::ostringstream os;
  os << "cov" << k;
  return os.str();
}

ParamPoint AdaptiveModel::sample_param_at(int k, int label,
                                          RngStream& rng) const {
  if (k < 0 || k >= nuisance_count())
    throw std::invalid_argument("AdaptiveModel: bad nuisance index");
  ParamPoint p = sample_param(label, rng);
  p.values[1] = static_cast<double>(k);
  p.values[2] = 1.0;
  return p;
}

ModelSample AdaptiveModel::sample_obs(const ParamPoint& p,
                                      RngStream& rng) const {
  const int n = static_cast<int>(signature_.size());
  const auto idx = static_cast<std::size_t>(p.values[1]);
  if (idx >= chols_.size())
    throw std::invalid_argument("AdaptiveModel: bad covariance index");
  const double scale = p.values[2];
  const MatrixXd l = std::sqrt(scale) * chols_[idx];
  ModelSample s;
  s.x = l * standard_normal_vector(n, rng);
  if (p.label != 0) s.x += p.values[0] * signature_;
  s.secondary.resize(n, secondary_count_);
  for (int j = 0; j < secondary_count_; ++j)
    s.secondary.col(j) = l * standard_normal_vector(n, rng);
  return s;
}

// ----------------------------------------------------------------------------
// MaterialModel
// ----------------------------------------------------------------------------

MaterialModel::MaterialModel(std::vector<Material> materials, VectorXd target,
                             double amplitude)
    : materials_(std::move(materials)),
      target_(std::move(target)),
      amplitude_(amplitude) {
  if (materials_.empty())
    throw std::invalid_argument("MaterialModel: no materials");
  if (target_.size() == 0)
    throw std::invalid_argument("MaterialModel: empty target");
  chols_.reserve(materials_.size());
  for (const Material& m : materials_) {
    if (m.mean.size() != target_.size())
      throw std::invalid_argument("MaterialModel: dimension mismatch");
    chols_.push_back(spd_cholesky(m.covariance, "MaterialModel"));
  }
}

ParamPoint MaterialModel::sample_param(int label, RngStream& rng) const {
  ParamPoint p;
  p.label = label;
  p.domain_tag = label == 0 ? DomainTag::Z0 : DomainTag::Z1;
  p.values.resize(2);
  p.values[0] = static_cast<double>(rng.uniform_index(materials_.size()));
  p.values[1] = label == 0 ? 0.0 : amplitude_;
  return p;
}

std::string MaterialModel::nuisance_label(int k) const {
  return materials_.at(static_cast<std::size_t>(k)).name;
}

ParamPoint MaterialModel::sample_param_at(int k, int label,
                                          RngStream& rng) const {
  if (k < 0 || k >= nuisance_count())
    throw std::invalid_argument("MaterialModel: bad nuisance index");
  ParamPoint p = sample_param(label, rng);
  p.values[0] = static_cast<double>(k);
  return p;
}

ModelSample MaterialModel::sample_obs(const ParamPoint& p,
                                      RngStream& rng) const {
  const auto idx = static_cast<std::size_t>(p.values[0]);
  if (idx >= materials_.size())
    throw std::invalid_argument("MaterialModel: bad material index");
  const int n = static_cast<int>(target_.size());
  ModelSample s;
  s.x = materials_[idx].mean + chols_[idx] * standard_normal_vector(n, rng);
  if (p.label != 0) s.x += p.values[1] * target_;
  return s;
}

// ----------------------------------------------------------------------------
// Batch CSV round trip.
// ----------------------------------------------------------------------------

void write_batch_csv(std::ostream& out, const ObservationBatch& batch) {
  if (batch.points.empty())
    throw std::invalid_argument("write_batch_csv: empty batch");
  const int dz = static_cast<int>(batch.points.front().values.size());
  const int dx = static_cast<int>(batch.replicates.front().front().x.size());
  out << "point_id,replicate_id,label";
  for (int i = 0; i < dz; ++i) out << ",z" << i;
  for (int i = 0; i < dx; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t i = 0; i < batch.points.size(); ++i) {
    const ParamPoint& p = batch.points[i];
    for (std::size_t j = 0; j < batch.replicates[i].size(); ++j) {
      out << i << "," << j << "," << p.label;
      for (int k = 0; k < dz; ++k) {
        out << ",";
        format_double(out, p.values[k]);
      }
      const Observation& x = batch.replicates[i][j].x;
      for (int k = 0; k < dx; ++k) {
        out << ",";
        format_double(out, x[k]);
      }
      out << "\n";
    }
  }
}

ObservationBatch read_batch_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("read_batch_csv: missing header");
  // Count z/x columns from the header.
  int dz = 0;
  int dx = 0;
  {
    std::istringstream hs(line);
    std::string col;
    int idx = 0;
    while (std::getline(hs, col, ',')) {
      if (idx <= 2) {
        const char* expect[] = {"point_id", "replicate_id", "label"};
        if (col != expect[idx])
          throw std::invalid_argument("read_batch_csv: bad header column '" +
                                      col + "'");
      } else if (col.size() >= 2 && col[0] == 'z') {
        ++dz;
      } else if (col.size() >= 2 && col[0] == 'x') {
        ++dx;
      } else {
        throw std::invalid_argument("read_batch_csv: bad header column '" +
                                    col + "'");
      }
      ++idx;
    }
  }
  if (dx == 0) throw std::invalid_argument("read_batch_csv: no x columns");

  ObservationBatch batch;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    auto next_cell = [&]() {
      if (!std::getline(ls, cell, ','))
        throw std::invalid_argument("read_batch_csv: short row");
      return cell;
    };
    const auto point_id = static_cast<std::size_t>(std::stoul(next_cell()));
    next_cell();  // replicate_id: implicit in row order
    const int label = std::stoi(next_cell());
    VectorXd z(dz);
    for (int k = 0; k < dz; ++k) z[k] = std::stod(next_cell());
    Observation x(dx);
    for (int k = 0; k < dx; ++k) x[k] = std::stod(next_cell());

    if (point_id == batch.points.size()) {
      ParamPoint p;
      p.label = label;
      p.values = z;
      p.domain_tag = label == 0 ? DomainTag::Z0 : DomainTag::Z1;
      batch.points.push_back(std::move(p));
      batch.replicates.emplace_back();
    } else if (point_id > batch.points.size()) {
      throw std::invalid_argument("read_batch_csv: point ids out of order");
    }
    batch.replicates[point_id].push_back({std::move(x), MatrixXd()});
  }
  if (batch.points.empty())
    throw std::invalid_argument("read_batch_csv: no data rows");
  return batch;
}

}  // namespace cfardet
