#pragma once

#include "fusion/inference.hpp"
#include "fusion/metrics.hpp"

namespace fusion {

// Radius-based leave-out groups over the station set. Each group contains the
// testing station itself plus every station within the radius; membership is
// symmetric in distance. All time points of member stations are removed.
struct LeaveOutPlan {
  double radius = 0.0;
  std::vector<std::vector<int>> groups;  // per station, sorted indices

  void validate(int n_stations) const;
};

LeaveOutPlan build_plan(const std::vector<Point>& stations, double radius);

// One held-out prediction record. Predictive moments are on the latent-surface
// scale; the observation-density score adds the noise variance separately.
struct CvPrediction {
  int station = 0;
  int t = 1;
  double radius = 0.0;
  double y = 0.0;
  double pred_mean = 0.0;
  double pred_sd = 0.0;
  double full_mean = 0.0;
  double full_sd = 0.0;
  bool missing = false;  // leave-out emptied the likelihood entirely
};

struct LgocvResult {
  std::vector<CvPrediction> predictions;
  double obs_noise_var = 0.0;  // weight-averaged station noise variance
  int flagged = 0;             // stations whose reduced system had no rows

  ScoreReport scores() const;
};

// Exact re-conditioning at fixed hyperparameters and model-averaging weights:
// the ensemble is fitted on the full data once, then rows of each leave-out
// group are removed and the Gaussian system re-solved. Gridded observations
// are never removed.
LgocvResult run_lgocv(const PosteriorEnsemble& ensemble, const ObservationSet& data,
                      const LeaveOutPlan& plan, int threads = 1);

// Convenience form that performs the full-data fit first.
LgocvResult run_lgocv(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                      const HyperPriorSet& priors, const LeaveOutPlan& plan,
                      const OptimOptions& optim = {},
                      const std::vector<double>& alpha_grid = default_alpha_grid(),
                      int threads = 1);

}  // namespace fusion
