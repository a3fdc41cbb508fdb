#pragma once

#include <functional>

#include "fusion/inference.hpp"
#include "fusion/metrics.hpp"

namespace fusion {

enum class StationScenario { n10, n25, n40 };
enum class PriorScenario { matching, nonmatching };

const char* scenario_name(StationScenario s);
const char* prior_scenario_name(PriorScenario s);
StationScenario scenario_from_name(const std::string& name);
PriorScenario prior_scenario_from_name(const std::string& name);

// Fixed station layouts over the default study rectangle. Shipped as constant
// fixtures; the `dfuse fixtures` tool writes them out as CSV.
std::vector<Point> station_layouts(StationScenario scenario);

// Data-generating configuration for the replicate study (purely spatial).
struct SimConfig {
  Domain domain = Domain::rectangle(0.0, 0.0, 3.0, 2.6);
  MaternParams covariate_field{3.0, 1.0, 1.0};
  MaternParams latent_field{2.0, 3.16, 1.0};
  MaternParams bias_field{1.0, 1.0, 1.0};
  double fe_intercept = 10.0;
  double fe_slope = 3.0;
  double noise_var_stations = 0.25;
  double noise_var_grid = 0.01;
  double mult_bias = 1.1;
  StationScenario stations = StationScenario::n10;
  std::vector<Point> custom_stations;  // non-empty overrides the scenario layout
  int sim_grid_nx = 30;
  int sim_grid_ny = 30;
  int coarse_nx = 10;
  int coarse_ny = 10;
  double mesh_max_edge = 0.4;  // latent range / 5
  double mesh_extension = 2.0;
  long base_seed = 20240101;

  void validate() const;
  std::vector<Point> station_points() const;
};

struct SimReplicate {
  long seed = 0;
  ObservationSet data;             // station and coarse-grid observations
  std::vector<Point> eval_points;  // dense simulation grid
  Eigen::VectorXd truth;           // latent surface at eval_points
  Eigen::VectorXd covariate;       // known covariate at eval_points
  Eigen::VectorXd bias_truth;      // error field at the coarse cells
};

// Precomputed geometry and factorized field precisions shared by replicates.
class StudyContext {
 public:
  explicit StudyContext(const SimConfig& cfg);

  SimReplicate simulate_seed(long seed) const;
  SimReplicate simulate(long replicate) const;  // seed = base_seed + replicate

  const Mesh& mesh() const { return mesh_; }
  const SimConfig& config() const { return cfg_; }
  std::vector<PredictionTarget> eval_targets(const SimReplicate& rep) const;

 private:
  SimConfig cfg_;
  Mesh mesh_;
  SparseLLT covariate_chol_, latent_chol_, bias_chol_;
  std::vector<Point> stations_, sim_grid_, coarse_grid_;
  ProjectionMatrix station_proj_, sim_grid_proj_, coarse_proj_;
};

SimReplicate simulate_replicate(const SimConfig& cfg, long seed);

// PC priors for the two §-style scenarios: thresholds from the generating
// values (matching) or the fixed alternative set (nonmatching), probability
// one half everywhere.
HyperPriorSet study_priors(PriorScenario scenario, const SimConfig& cfg);

struct StudyOptions {
  std::vector<ModelFamily> families = {ModelFamily::fusion, ModelFamily::stations_only,
                                       ModelFamily::regression_calibration};
  std::vector<PriorScenario> prior_scenarios = {PriorScenario::matching,
                                                PriorScenario::nonmatching};
  int replicates = 50;
  int threads = 1;
  OptimOptions optim;
  std::vector<double> alpha_grid = default_alpha_grid();
};

struct ReplicateOutcome {
  long replicate = 0;
  std::string prior_scenario;
  std::string family;
  bool failed = false;
  std::string error;
  ScoreReport scores;
  std::vector<std::pair<double, double>> weights;  // (bias grid value, BMA weight)
};

struct StudyResult {
  std::vector<ReplicateOutcome> outcomes;
  int failures = 0;
};

// Fits and scores every (replicate, prior scenario, family) cell. Individual
// replicate failures are recorded, not fatal. on_result (optional) streams
// outcomes in deterministic order.
StudyResult run_study(const SimConfig& cfg, const StudyOptions& opts,
                      const std::function<void(const ReplicateOutcome&)>& on_result = {});

}  // namespace fusion
