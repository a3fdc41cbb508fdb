#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fusion/geometry.hpp"

namespace fusion {

// Observations from one source on a fixed set of locations and a shared
// contiguous time axis 1..n_times. NaN marks a missing value.
struct SourceData {
  std::vector<std::string> ids;  // unique location ids
  std::vector<Point> points;     // aligned with ids
  Eigen::MatrixXd values;        // n_loc x n_times
  // one n_loc x n_times matrix per design column
  std::vector<Eigen::MatrixXd> covariates;

  int n_locations() const { return static_cast<int>(ids.size()); }
  bool observed(int loc, int t) const { return std::isfinite(values(loc, t - 1)); }
  double value(int loc, int t) const { return values(loc, t - 1); }
  int n_observed() const;
};

// Station records plus gridded-source records with a shared design-column set.
struct ObservationSet {
  SourceData stations;
  SourceData grid;
  std::vector<std::string> covariate_names;
  int n_times = 1;
  std::string value_unit;  // label only

  int n_covariates() const { return static_cast<int>(covariate_names.size()); }
  void validate() const;
};

}  // namespace fusion
