#include "fusion/data.hpp"

#include <cmath>
#include <set>

#include "fusion/errors.hpp"

namespace fusion {

int SourceData::n_observed() const {
  int n = 0;
  for (int i = 0; i < values.rows(); ++i)
    for (int j = 0; j < values.cols(); ++j)
      if (std::isfinite(values(i, j))) ++n;
  return n;
}

namespace {

void validate_source(const SourceData& s, int n_times, int n_cov, const char* which) {
  require(s.ids.size() == s.points.size(), std::string(which) + ": ids/points misaligned");
  if (s.ids.empty()) return;
  require(s.values.rows() == s.n_locations() && s.values.cols() == n_times,
          std::string(which) + ": value table shape mismatch");
  require(static_cast<int>(s.covariates.size()) == n_cov,
          std::string(which) + ": covariate table count mismatch");
  for (const auto& c : s.covariates)
    require(c.rows() == s.n_locations() && c.cols() == n_times,
            std::string(which) + ": covariate table shape mismatch");
  std::set<std::pair<double, double>> seen;
  for (const Point& p : s.points) {
    require(std::isfinite(p.x) && std::isfinite(p.y),
            std::string(which) + ": non-finite location");
    require(seen.insert({p.x, p.y}).second,
            std::string(which) + ": duplicate location coordinates");
  }
  std::set<std::string> seen_ids(s.ids.begin(), s.ids.end());
  require(seen_ids.size() == s.ids.size(), std::string(which) + ": duplicate location ids");
}

}  // namespace

void ObservationSet::validate() const {
  require(n_times >= 1, "observation set needs at least one time point");
  validate_source(stations, n_times, n_covariates(), "stations");
  validate_source(grid, n_times, n_covariates(), "grid");
  require(stations.n_locations() + grid.n_locations() > 0, "empty observation set");
}

}  // namespace fusion
