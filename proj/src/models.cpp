#include "fusion/models.hpp"

#include <cmath>
#include <limits>

#include "fusion/errors.hpp"

namespace fusion {

const char* family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::fusion: return "fusion";
    case ModelFamily::stations_only: return "stations_only";
    case ModelFamily::regression_calibration: return "regression_calibration";
  }
  return "unknown";
}

ModelFamily family_from_name(const std::string& name) {
  if (name == "fusion") return ModelFamily::fusion;
  if (name == "stations_only") return ModelFamily::stations_only;
  if (name == "regression_calibration") return ModelFamily::regression_calibration;
  throw validation_error("unknown model family: " + name);
}

void HyperPoint::validate(ModelFamily family) const {
  require(noise_sd_stations > 0.0, "station noise sd must be positive");
  require(latent_sd > 0.0 && latent_range > 0.0, "latent field sd/range must be positive");
  require(std::abs(latent_ar) < 1.0, "latent field AR coefficient must lie in (-1, 1)");
  if (family != ModelFamily::stations_only) {
    require(bias_sd > 0.0 && bias_range > 0.0, "second field sd/range must be positive");
    require(std::abs(bias_ar) < 1.0, "second field AR coefficient must lie in (-1, 1)");
  }
  if (family == ModelFamily::fusion)
    require(noise_sd_grid > 0.0, "grid noise sd must be positive");
}

void GaussianSystem::validate() const {
  require(prior_precision.rows() == prior_precision.cols() &&
              prior_precision.rows() == layout.dim,
          "prior precision dimension mismatch");
  require(obs_matrix.rows() == n_rows() && noise_precision.size() == n_rows() &&
              static_cast<int>(row_keys.size()) == n_rows(),
          "observation system shape mismatch");
  require(obs_matrix.cols() == layout.dim, "observation matrix width mismatch");
  for (int i = 0; i < noise_precision.size(); ++i)
    require(noise_precision[i] > 0.0, "noise precision must be positive");
  // no all-zero rows
  Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(n_rows());
  for (int k = 0; k < obs_matrix.outerSize(); ++k)
    for (SparseMat::InnerIterator it(obs_matrix, k); it; ++it)
      row_norm[it.row()] += std::abs(it.value());
  for (int i = 0; i < n_rows(); ++i)
    require(row_norm[i] > 0.0, "observation row " + std::to_string(i) + " is all zero");
}

SystemAssembler::SystemAssembler(ModelFamily family, const ObservationSet& data,
                                 const Mesh& mesh, double fixed_effect_precision,
                                 double mult_bias)
    : family_(family),
      data_(data),
      mesh_(mesh),
      fe_precision_(fixed_effect_precision),
      mult_bias_(mult_bias) {
  data_.validate();
  require(fe_precision_ > 0.0, "fixed-effect precision must be positive");
  fem_ = std::make_shared<FemOperators>(mesh_);

  layout_.n_vertices = mesh_.n_vertices();
  layout_.n_times = data_.n_times;
  const int nt = layout_.n_vertices * layout_.n_times;
  switch (family_) {
    case ModelFamily::fusion:
      layout_.n_fixed = data_.n_covariates();
      layout_.field1_offset = layout_.n_fixed;
      layout_.field2_offset = layout_.n_fixed + nt;
      layout_.dim = layout_.n_fixed + 2 * nt;
      break;
    case ModelFamily::stations_only:
      layout_.n_fixed = data_.n_covariates();
      layout_.field1_offset = layout_.n_fixed;
      layout_.field2_offset = -1;
      layout_.dim = layout_.n_fixed + nt;
      break;
    case ModelFamily::regression_calibration:
      // fixed effects: mean additive coefficient, mean multiplicative coefficient
      layout_.n_fixed = 2;
      layout_.field1_offset = 2;
      layout_.field2_offset = 2 + nt;
      layout_.dim = 2 + 2 * nt;
      break;
  }
  require(data_.n_covariates() > 0 || family_ == ModelFamily::regression_calibration,
          "model needs at least one design column (include an intercept)");

  if (data_.stations.n_locations() > 0)
    station_proj_ = project(mesh_, data_.stations.points);
  if (data_.grid.n_locations() > 0 && family_ != ModelFamily::stations_only)
    grid_proj_ = project(mesh_, data_.grid.points);

  if (family_ == ModelFamily::regression_calibration) {
    require(data_.grid.n_locations() > 0,
            "regression calibration needs gridded predictor values");
    matched_cells_.resize(data_.stations.n_locations());
    for (int i = 0; i < data_.stations.n_locations(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = -1;
      const Point& s = data_.stations.points[i];
      for (int j = 0; j < data_.grid.n_locations(); ++j) {
        const Point& g = data_.grid.points[j];
        const double d2 = (s.x - g.x) * (s.x - g.x) + (s.y - g.y) * (s.y - g.y);
        if (d2 < best) {
          best = d2;
          arg = j;
        }
      }
      matched_cells_[i] = arg;
    }
  }

  build_rows();
}

int SystemAssembler::matched_cell(int station) const {
  require(family_ == ModelFamily::regression_calibration,
          "matched cells exist only for regression calibration");
  return matched_cells_.at(station);
}

double SystemAssembler::predictor_value(int station, int t) const {
  const int cell = matched_cells_.at(station);
  if (!data_.grid.observed(cell, t))
    throw validation_error("regression calibration: station " +
                           data_.stations.ids[station] + " matches grid cell " +
                           data_.grid.ids[cell] + " with missing value at t=" +
                           std::to_string(t));
  return data_.grid.value(cell, t);
}

void SystemAssembler::build_rows() {
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> yvals;
  row_keys_.clear();
  row_source_.clear();

  auto add_field_row = [&](int row, const ProjectionMatrix& proj, int loc, int offset, int t,
                           double scale) {
    for (ProjectionMatrix::InnerIterator it(proj, loc); it; ++it)
      trips.emplace_back(row, offset + (t - 1) * layout_.n_vertices + static_cast<int>(it.col()),
                         scale * it.value());
  };

  int row = 0;
  const bool use_stations = true;
  const bool use_grid = family_ == ModelFamily::fusion;

  if (use_stations) {
    for (int i = 0; i < data_.stations.n_locations(); ++i)
      for (int t = 1; t <= data_.n_times; ++t) {
        if (!data_.stations.observed(i, t)) continue;  // missing rows are dropped
        if (family_ == ModelFamily::regression_calibration) {
          const double w2 = predictor_value(i, t);
          trips.emplace_back(row, 0, 1.0);
          if (w2 != 0.0) trips.emplace_back(row, 1, w2);
          add_field_row(row, station_proj_, i, layout_.field1_offset, t, 1.0);
          if (w2 != 0.0) add_field_row(row, station_proj_, i, layout_.field2_offset, t, w2);
        } else {
          for (int k = 0; k < data_.n_covariates(); ++k) {
            const double z = data_.stations.covariates[k](i, t - 1);
            require(std::isfinite(z), "non-finite covariate at station " +
                                          data_.stations.ids[i] + ", t=" + std::to_string(t));
            if (z != 0.0) trips.emplace_back(row, k, z);
          }
          add_field_row(row, station_proj_, i, layout_.field1_offset, t, 1.0);
        }
        yvals.push_back(data_.stations.value(i, t));
        row_keys_.push_back({ObsSource::station, i, t});
        row_source_.push_back(ObsSource::station);
        ++row;
      }
  }

  if (use_grid) {
    for (int j = 0; j < data_.grid.n_locations(); ++j)
      for (int t = 1; t <= data_.n_times; ++t) {
        if (!data_.grid.observed(j, t)) continue;
        for (int k = 0; k < data_.n_covariates(); ++k) {
          const double z = data_.grid.covariates[k](j, t - 1);
          require(std::isfinite(z), "non-finite covariate at grid cell " + data_.grid.ids[j] +
                                        ", t=" + std::to_string(t));
          if (z != 0.0) trips.emplace_back(row, k, mult_bias_ * z);
        }
        add_field_row(row, grid_proj_, j, layout_.field1_offset, t, mult_bias_);
        add_field_row(row, grid_proj_, j, layout_.field2_offset, t, 1.0);
        yvals.push_back(data_.grid.value(j, t));
        row_keys_.push_back({ObsSource::grid, j, t});
        row_source_.push_back(ObsSource::grid);
        ++row;
      }
  }

  // a fusion system may legitimately carry zero rows (prior recovery);
  // the station-likelihood families cannot
  if (family_ == ModelFamily::stations_only || family_ == ModelFamily::regression_calibration)
    require(row > 0, "empty observation set: no non-missing station values");

  obs_matrix_.resize(row, layout_.dim);
  obs_matrix_.setFromTriplets(trips.begin(), trips.end());
  response_ = Eigen::Map<Eigen::VectorXd>(yvals.data(), row);
}

GaussianSystem SystemAssembler::assemble(const HyperPoint& theta) const {
  theta.validate(family_);

  const SparseMat q1 = st_precision(
      fem_->precision({theta.latent_range, theta.latent_sd, 1.0}), theta.latent_ar,
      layout_.n_times);
  SparseMat q2;
  if (layout_.field2_offset >= 0)
    q2 = st_precision(fem_->precision({theta.bias_range, theta.bias_sd, 1.0}), theta.bias_ar,
                      layout_.n_times);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(layout_.n_fixed) + q1.nonZeros() +
                (q2.size() > 0 ? q2.nonZeros() : 0));
  for (int k = 0; k < layout_.n_fixed; ++k) trips.emplace_back(k, k, fe_precision_);
  for (int k = 0; k < q1.outerSize(); ++k)
    for (SparseMat::InnerIterator it(q1, k); it; ++it)
      trips.emplace_back(layout_.field1_offset + static_cast<int>(it.row()),
                         layout_.field1_offset + static_cast<int>(it.col()), it.value());
  if (q2.size() > 0)
    for (int k = 0; k < q2.outerSize(); ++k)
      for (SparseMat::InnerIterator it(q2, k); it; ++it)
        trips.emplace_back(layout_.field2_offset + static_cast<int>(it.row()),
                           layout_.field2_offset + static_cast<int>(it.col()), it.value());

  GaussianSystem sys;
  sys.prior_precision.resize(layout_.dim, layout_.dim);
  sys.prior_precision.setFromTriplets(trips.begin(), trips.end());
  sys.obs_matrix = obs_matrix_;
  sys.response = response_;
  sys.layout = layout_;
  sys.row_keys = row_keys_;
  sys.noise_precision.resize(sys.n_rows());
  const double prec_station = 1.0 / (theta.noise_sd_stations * theta.noise_sd_stations);
  const double prec_grid = family_ == ModelFamily::fusion
                               ? 1.0 / (theta.noise_sd_grid * theta.noise_sd_grid)
                               : 0.0;
  for (int i = 0; i < sys.n_rows(); ++i)
    sys.noise_precision[i] =
        row_source_[i] == ObsSource::station ? prec_station : prec_grid;
  return sys;
}

Eigen::SparseVector<double> SystemAssembler::target_functional(
    const PredictionTarget& target) const {
  require(target.t >= 1 && target.t <= layout_.n_times,
          "prediction target time index out of range");
  const ProjectionMatrix proj = project(mesh_, {target.location});
  Eigen::SparseVector<double> c(layout_.dim);

  if (family_ == ModelFamily::regression_calibration) {
    // multiplier: value of the grid cell nearest the target
    double best = std::numeric_limits<double>::infinity();
    int cell = -1;
    for (int j = 0; j < data_.grid.n_locations(); ++j) {
      const Point& g = data_.grid.points[j];
      const double d2 = (target.location.x - g.x) * (target.location.x - g.x) +
                        (target.location.y - g.y) * (target.location.y - g.y);
      if (d2 < best) {
        best = d2;
        cell = j;
      }
    }
    if (cell < 0 || !data_.grid.observed(cell, target.t))
      throw validation_error("regression calibration: no gridded predictor value at target");
    const double w2 = data_.grid.value(cell, target.t);
    c.insert(0) = 1.0;
    if (w2 != 0.0) c.insert(1) = w2;
    for (ProjectionMatrix::InnerIterator it(proj, 0); it; ++it) {
      c.insert(layout_.field1_index(static_cast<int>(it.col()), target.t)) = it.value();
      if (w2 != 0.0)
        c.insert(layout_.field2_index(static_cast<int>(it.col()), target.t)) = w2 * it.value();
    }
    return c;
  }

  require(target.covariates.size() == layout_.n_fixed,
          "prediction target covariate count mismatch");
  for (int k = 0; k < layout_.n_fixed; ++k)
    if (target.covariates[k] != 0.0) c.insert(k) = target.covariates[k];
  for (ProjectionMatrix::InnerIterator it(proj, 0); it; ++it)
    c.insert(layout_.field1_index(static_cast<int>(it.col()), target.t)) = it.value();
  return c;
}

Eigen::SparseVector<double> SystemAssembler::bias_functional(int cell, int t) const {
  require(family_ == ModelFamily::fusion, "error-field functional exists only for fusion");
  require(cell >= 0 && cell < data_.grid.n_locations(), "grid cell index out of range");
  require(t >= 1 && t <= layout_.n_times, "time index out of range");
  Eigen::SparseVector<double> c(layout_.dim);
  for (ProjectionMatrix::InnerIterator it(grid_proj_, cell); it; ++it)
    c.insert(layout_.field2_index(static_cast<int>(it.col()), t)) = it.value();
  return c;
}

GaussianSystem assemble_fusion(const ObservationSet& data, const Mesh& mesh,
                               const HyperPoint& theta, double mult_bias,
                               double fixed_effect_precision) {
  return SystemAssembler(ModelFamily::fusion, data, mesh, fixed_effect_precision, mult_bias)
      .assemble(theta);
}

GaussianSystem assemble_stations_only(const ObservationSet& data, const Mesh& mesh,
                                      const HyperPoint& theta,
                                      double fixed_effect_precision) {
  return SystemAssembler(ModelFamily::stations_only, data, mesh, fixed_effect_precision)
      .assemble(theta);
}

GaussianSystem assemble_regcalib(const ObservationSet& data, const Mesh& mesh,
                                 const HyperPoint& theta, double fixed_effect_precision) {
  return SystemAssembler(ModelFamily::regression_calibration, data, mesh,
                         fixed_effect_precision)
      .assemble(theta);
}

}  // namespace fusion
