#pragma once

// Test-only oracles: dense-matrix reference computations kept independent of
// the sparse implementation path they check.

#include <Eigen/Dense>
#include <cmath>

#include "fusion/inference.hpp"
#include "fusion/rng.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DensePosterior {
  VectorXd mean;
  VectorXd marginal_var;
  double log_ml = 0.0;
};

// Reference conditioning in covariance space: y ~ N(0, A Qp^-1 A^T + N^-1).
inline DensePosterior dense_condition(const fusion::GaussianSystem& sys) {
  const MatrixXd qp = MatrixXd(sys.prior_precision);
  const MatrixXd a = MatrixXd(sys.obs_matrix);
  const VectorXd n = sys.noise_precision;
  const VectorXd y = sys.response;
  const int m = static_cast<int>(y.size());

  const MatrixXd qpost = qp + a.transpose() * n.asDiagonal() * a;
  const MatrixXd cov = qpost.inverse();
  const VectorXd b = a.transpose() * (n.array() * y.array()).matrix();

  DensePosterior out;
  out.mean = cov * b;
  out.marginal_var = cov.diagonal();
  if (m == 0) {
    out.log_ml = 0.0;
    return out;
  }
  MatrixXd s = a * qp.inverse() * a.transpose();
  for (int i = 0; i < m; ++i) s(i, i) += 1.0 / n[i];
  const Eigen::LLT<MatrixXd> llt(s);
  const MatrixXd l = llt.matrixL();
  double logdet = 0.0;
  for (int i = 0; i < m; ++i) logdet += 2.0 * std::log(l(i, i));
  const VectorXd alpha = llt.solve(y);
  out.log_ml = -0.5 * (m * std::log(2.0 * M_PI) + logdet + y.dot(alpha));
  return out;
}

// Stationary AR(1)-in-time covariance block: phi^|t-u| / (1 - phi^2) * S.
inline MatrixXd st_covariance(const MatrixXd& spatial_cov, double phi, int n_times) {
  const int n = static_cast<int>(spatial_cov.rows());
  MatrixXd out(n * n_times, n * n_times);
  for (int t = 0; t < n_times; ++t)
    for (int u = 0; u < n_times; ++u)
      out.block(t * n, u * n, n, n) =
          std::pow(phi, std::abs(t - u)) / (1.0 - phi * phi) * spatial_cov;
  return out;
}

// composite Simpson quadrature
inline double simpson(const std::function<double(double)>& f, double lo, double hi,
                      int intervals) {
  if (intervals % 2 == 1) ++intervals;
  const double h = (hi - lo) / intervals;
  double s = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) s += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// small observation set on a handful of locations, optionally with gaps
inline fusion::ObservationSet tiny_observations(fusion::Rng& rng, int n_station, int n_cell,
                                                int n_times, bool with_missing = false) {
  fusion::ObservationSet data;
  data.n_times = n_times;
  data.covariate_names = {"intercept", "z"};

  data.stations.ids.resize(n_station);
  data.stations.points.resize(n_station);
  data.stations.values.resize(n_station, n_times);
  data.stations.covariates = {Eigen::MatrixXd::Ones(n_station, n_times),
                              Eigen::MatrixXd::Zero(n_station, n_times)};
  for (int i = 0; i < n_station; ++i) {
    data.stations.ids[i] = "s" + std::to_string(i);
    data.stations.points[i] = {0.1 + 0.8 * rng.uniform(), 0.1 + 0.8 * rng.uniform()};
    for (int t = 0; t < n_times; ++t) {
      data.stations.values(i, t) = rng.normal();
      data.stations.covariates[1](i, t) = rng.normal();
      if (with_missing && rng.uniform() < 0.15)
        data.stations.values(i, t) = std::numeric_limits<double>::quiet_NaN();
    }
  }

  data.grid.ids.resize(n_cell);
  data.grid.points.resize(n_cell);
  data.grid.values.resize(n_cell, n_times);
  data.grid.covariates = {Eigen::MatrixXd::Ones(n_cell, n_times),
                          Eigen::MatrixXd::Zero(n_cell, n_times)};
  for (int j = 0; j < n_cell; ++j) {
    data.grid.ids[j] = "g" + std::to_string(j);
    data.grid.points[j] = {0.05 + 0.9 * rng.uniform(), 0.05 + 0.9 * rng.uniform()};
    for (int t = 0; t < n_times; ++t) {
      data.grid.values(j, t) = rng.normal();
      data.grid.covariates[1](j, t) = rng.normal();
      if (with_missing && rng.uniform() < 0.1)
        data.grid.values(j, t) = std::numeric_limits<double>::quiet_NaN();
    }
  }
  data.validate();
  return data;
}

// coarse triangulation of the unit square (few vertices, tests stay dense)
inline fusion::Mesh tiny_mesh(double max_edge = 0.8, double extension = 0.4) {
  return fusion::build_mesh(fusion::Domain::rectangle(0.0, 0.0, 1.0, 1.0), max_edge,
                            extension);
}

}  // namespace oracle
