#include "fusion/simulation.hpp"

#include <cmath>

#include "fusion/errors.hpp"
#include "fusion/parallel.hpp"
#include "fusion/rng.hpp"

namespace fusion {

const char* scenario_name(StationScenario s) {
  switch (s) {
    case StationScenario::n10: return "n10";
    case StationScenario::n25: return "n25";
    case StationScenario::n40: return "n40";
  }
  return "unknown";
}

const char* prior_scenario_name(PriorScenario s) {
  return s == PriorScenario::matching ? "matching" : "nonmatching";
}

StationScenario scenario_from_name(const std::string& name) {
  if (name == "n10") return StationScenario::n10;
  if (name == "n25") return StationScenario::n25;
  if (name == "n40") return StationScenario::n40;
  throw validation_error("unknown station scenario: " + name);
}

PriorScenario prior_scenario_from_name(const std::string& name) {
  if (name == "matching") return PriorScenario::matching;
  if (name == "nonmatching") return PriorScenario::nonmatching;
  throw validation_error("unknown prior scenario: " + name);
}

std::vector<Point> station_layouts(StationScenario scenario) {
  // fixed fixtures over the default 3 x 2.6 rectangle
  switch (scenario) {
    case StationScenario::n10:
      // sparse, clustered; the north and east stay severely undersampled
      return {{0.30, 0.40}, {0.42, 0.52}, {1.10, 0.30}, {1.25, 0.42}, {0.25, 1.15},
              {0.95, 0.95}, {1.70, 0.70}, {2.20, 0.35}, {0.60, 1.55}, {1.45, 1.35}};
    case StationScenario::n25:
      // broad coverage with one undersampled corner in the northeast
      return {{0.20, 0.20}, {0.80, 0.25}, {1.40, 0.20}, {2.00, 0.30}, {2.60, 0.20},
              {0.30, 0.70}, {0.90, 0.75}, {1.50, 0.70}, {2.10, 0.80}, {2.75, 0.70},
              {0.20, 1.25}, {0.85, 1.30}, {1.45, 1.25}, {2.05, 1.20}, {2.70, 1.30},
              {0.30, 1.80}, {0.90, 1.85}, {1.50, 1.80}, {0.25, 2.30}, {0.90, 2.35},
              {1.50, 2.40}, {2.60, 2.45}, {0.55, 1.55}, {2.85, 1.05}, {1.15, 2.10}};
    case StationScenario::n40:
      // jittered regular grid, near-uniform coverage
      return {{0.2275, 0.23}, {0.5125, 0.28}, {0.9675, 0.31}, {1.2925, 0.22},
              {1.7375, 0.27}, {2.0225, 0.29}, {2.4575, 0.21}, {2.7825, 0.30},
              {0.1675, 0.74}, {0.6125, 0.79}, {0.8975, 0.81}, {1.3325, 0.73},
              {1.6575, 0.82}, {2.1025, 0.75}, {2.3875, 0.80}, {2.8425, 0.83},
              {0.2075, 1.25}, {0.5325, 1.34}, {0.9775, 1.27}, {1.2625, 1.32},
              {1.7175, 1.35}, {2.0425, 1.26}, {2.4875, 1.31}, {2.7725, 1.33},
              {0.1375, 1.84}, {0.5925, 1.87}, {0.9175, 1.78}, {1.3625, 1.83},
              {1.6475, 1.85}, {2.0825, 1.77}, {2.4075, 1.86}, {2.8525, 1.79},
              {0.2375, 2.35}, {0.5225, 2.37}, {0.9575, 2.29}, {1.2825, 2.38},
              {1.7275, 2.31}, {2.0125, 2.36}, {2.4675, 2.39}, {2.7925, 2.30}};
  }
  throw validation_error("unknown station scenario");
}

void SimConfig::validate() const {
  domain.validate();
  covariate_field.validate();
  latent_field.validate();
  bias_field.validate();
  require(noise_var_stations > 0.0 && noise_var_grid > 0.0,
          "noise variances must be positive");
  require(sim_grid_nx >= 2 && sim_grid_ny >= 2, "simulation grid too small");
  require(coarse_nx >= 1 && coarse_ny >= 1, "coarse grid too small");
  require(sim_grid_nx % coarse_nx == 0 && sim_grid_ny % coarse_ny == 0,
          "coarse grid must subdivide the simulation grid");
  require(mesh_max_edge > 0.0 && mesh_extension >= 0.0, "bad mesh settings");
}

std::vector<Point> SimConfig::station_points() const {
  return custom_stations.empty() ? station_layouts(stations) : custom_stations;
}

namespace {

void factor_field(SparseLLT& chol, const FemOperators& fem, const MaternParams& params) {
  chol.compute(fem.precision(params));
  require(chol.info() == Eigen::Success, "field precision factorization failed");
}

// zero-mean GMRF draw: solve L^T u = std-normal vector, undo the ordering
Eigen::VectorXd sample_field(const SparseLLT& chol, Rng& rng) {
  const int n = static_cast<int>(chol.matrixL().rows());
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  const Eigen::VectorXd u = chol.matrixU().solve(z);
  return chol.permutationPinv() * u;
}

}  // namespace

StudyContext::StudyContext(const SimConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  mesh_ = build_mesh(cfg_.domain, cfg_.mesh_max_edge, cfg_.mesh_extension);
  const FemOperators fem(mesh_);
  factor_field(covariate_chol_, fem, cfg_.covariate_field);
  factor_field(latent_chol_, fem, cfg_.latent_field);
  factor_field(bias_chol_, fem, cfg_.bias_field);

  stations_ = cfg_.station_points();
  for (const Point& p : stations_)
    require(cfg_.domain.contains(p), "station outside the study domain");

  const Point lo = cfg_.domain.bbox_min();
  const Point hi = cfg_.domain.bbox_max();
  const double wx = (hi.x - lo.x) / cfg_.sim_grid_nx;
  const double wy = (hi.y - lo.y) / cfg_.sim_grid_ny;
  sim_grid_.reserve(static_cast<std::size_t>(cfg_.sim_grid_nx) * cfg_.sim_grid_ny);
  for (int j = 0; j < cfg_.sim_grid_ny; ++j)
    for (int i = 0; i < cfg_.sim_grid_nx; ++i)
      sim_grid_.push_back({lo.x + (i + 0.5) * wx, lo.y + (j + 0.5) * wy});
  // coarse centroids are an exact subset of the simulation grid
  const int rx = cfg_.sim_grid_nx / cfg_.coarse_nx;
  const int ry = cfg_.sim_grid_ny / cfg_.coarse_ny;
  for (int j = 0; j < cfg_.coarse_ny; ++j)
    for (int i = 0; i < cfg_.coarse_nx; ++i) {
      const int si = i * rx + rx / 2;
      const int sj = j * ry + ry / 2;
      coarse_grid_.push_back(sim_grid_[static_cast<std::size_t>(sj) * cfg_.sim_grid_nx + si]);
    }

  station_proj_ = project(mesh_, stations_);
  sim_grid_proj_ = project(mesh_, sim_grid_);
  coarse_proj_ = project(mesh_, coarse_grid_);
}

SimReplicate StudyContext::simulate(long replicate) const {
  return simulate_seed(cfg_.base_seed + replicate);
}

SimReplicate StudyContext::simulate_seed(long seed) const {
  Rng rng(static_cast<std::uint64_t>(seed));
  const Eigen::VectorXd cov_mesh = sample_field(covariate_chol_, rng);
  const Eigen::VectorXd latent_mesh = sample_field(latent_chol_, rng);
  const Eigen::VectorXd bias_mesh = sample_field(bias_chol_, rng);

  SimReplicate rep;
  rep.seed = seed;
  rep.eval_points = sim_grid_;
  rep.covariate = sim_grid_proj_ * cov_mesh;
  rep.truth = cfg_.fe_intercept + cfg_.fe_slope * rep.covariate.array() +
              (sim_grid_proj_ * latent_mesh).array();
  rep.bias_truth = coarse_proj_ * bias_mesh;

  const int n_station = static_cast<int>(stations_.size());
  const int n_cell = static_cast<int>(coarse_grid_.size());
  const double sd_station = std::sqrt(cfg_.noise_var_stations);
  const double sd_grid = std::sqrt(cfg_.noise_var_grid);

  ObservationSet& data = rep.data;
  data.n_times = 1;
  data.covariate_names = {"intercept", "z"};
  data.value_unit = "simulated";

  data.stations.points = stations_;
  data.stations.ids.resize(n_station);
  data.stations.values.resize(n_station, 1);
  data.stations.covariates = {Eigen::MatrixXd::Ones(n_station, 1),
                              Eigen::MatrixXd::Zero(n_station, 1)};
  const Eigen::VectorXd cov_station = station_proj_ * cov_mesh;
  const Eigen::VectorXd latent_station = station_proj_ * latent_mesh;
  for (int i = 0; i < n_station; ++i) {
    data.stations.ids[i] = "s" + std::to_string(i + 1);
    const double x = cfg_.fe_intercept + cfg_.fe_slope * cov_station[i] + latent_station[i];
    data.stations.values(i, 0) = x + sd_station * rng.normal();
    data.stations.covariates[1](i, 0) = cov_station[i];
  }

  data.grid.points = coarse_grid_;
  data.grid.ids.resize(n_cell);
  data.grid.values.resize(n_cell, 1);
  data.grid.covariates = {Eigen::MatrixXd::Ones(n_cell, 1),
                          Eigen::MatrixXd::Zero(n_cell, 1)};
  const Eigen::VectorXd cov_cell = coarse_proj_ * cov_mesh;
  const Eigen::VectorXd latent_cell = coarse_proj_ * latent_mesh;
  for (int j = 0; j < n_cell; ++j) {
    data.grid.ids[j] = "g" + std::to_string(j + 1);
    const double x = cfg_.fe_intercept + cfg_.fe_slope * cov_cell[j] + latent_cell[j];
    data.grid.values(j, 0) =
        rep.bias_truth[j] + cfg_.mult_bias * x + sd_grid * rng.normal();
    data.grid.covariates[1](j, 0) = cov_cell[j];
  }

  data.validate();
  return rep;
}

std::vector<PredictionTarget> StudyContext::eval_targets(const SimReplicate& rep) const {
  std::vector<PredictionTarget> targets;
  targets.reserve(rep.eval_points.size());
  for (std::size_t i = 0; i < rep.eval_points.size(); ++i) {
    PredictionTarget t;
    t.location = rep.eval_points[i];
    t.t = 1;
    t.covariates.resize(2);
    t.covariates << 1.0, rep.covariate[static_cast<int>(i)];
    targets.push_back(std::move(t));
  }
  return targets;
}

SimReplicate simulate_replicate(const SimConfig& cfg, long seed) {
  return StudyContext(cfg).simulate_seed(seed);
}

HyperPriorSet study_priors(PriorScenario scenario, const SimConfig& cfg) {
  HyperPriorSet p;
  if (scenario == PriorScenario::matching) {
    p.noise_stations = {PCKind::sd_upper, cfg.noise_var_stations, 0.5};
    p.noise_grid = {PCKind::sd_upper, cfg.noise_var_grid, 0.5};
    p.latent_sd = {PCKind::sd_upper, cfg.latent_field.sd, 0.5};
    p.latent_range = {PCKind::range_lower, cfg.latent_field.range, 0.5};
    p.bias_sd = {PCKind::sd_upper, cfg.bias_field.sd, 0.5};
    p.bias_range = {PCKind::range_lower, cfg.bias_field.range, 0.5};
  } else {
    p.noise_stations = {PCKind::sd_upper, 1.5, 0.5};
    p.noise_grid = {PCKind::sd_upper, 0.5, 0.5};
    p.latent_sd = {PCKind::sd_upper, 1.0, 0.5};
    p.latent_range = {PCKind::range_lower, 0.5, 0.5};
    p.bias_sd = {PCKind::sd_upper, 0.5, 0.5};
    p.bias_range = {PCKind::range_lower, 0.5, 0.5};
  }
  p.validate();
  return p;
}

namespace {

ScoreReport score_replicate(const SimConfig& cfg, const StudyContext& ctx,
                            const SimReplicate& rep, ModelFamily family,
                            const PosteriorEnsemble& ens) {
  const PredictionSummary pred = ens.predict(ctx.eval_targets(rep));
  FieldEstimate est{rep.truth, pred.mean, pred.sd};

  ScoreReport rep_scores;
  rep_scores.add("ase", avg_squared_error(est));
  rep_scores.add("apsd", avg_posterior_sd(est));
  double ds = 0.0;
  for (int i = 0; i < est.mean.size(); ++i)
    ds += ds_score(est.truth[i], est.mean[i], est.sd[i] * est.sd[i]);
  rep_scores.add("ds", ds / est.mean.size());

  const double true_noise_sd = std::sqrt(cfg.noise_var_stations);
  const double est_noise_sd =
      ens.average([](const EnsembleMember& m) { return m.theta.noise_sd_stations; });
  rep_scores.add("rel_err_noise_sd", relative_error(est_noise_sd, true_noise_sd));

  if (family != ModelFamily::regression_calibration) {
    const int dim = ens.members.front().posterior.post_precision.rows();
    Eigen::SparseVector<double> e0(dim), e1(dim);
    e0.insert(0) = 1.0;
    e1.insert(1) = 1.0;
    double m0, s0, m1, s1;
    ens.mixture_of(e0, m0, s0);
    ens.mixture_of(e1, m1, s1);
    rep_scores.add("rel_err_intercept", relative_error(m0, cfg.fe_intercept));
    rep_scores.add("rel_err_slope", relative_error(m1, cfg.fe_slope));
    rep_scores.add("sd_intercept", s0);
    rep_scores.add("sd_slope", s1);
    rep_scores.add("rel_err_latent_sd",
                   relative_error(ens.average([](const EnsembleMember& m) {
                                    return m.theta.latent_sd;
                                  }),
                                  cfg.latent_field.sd));
    rep_scores.add("rel_err_latent_range",
                   relative_error(ens.average([](const EnsembleMember& m) {
                                    return m.theta.latent_range;
                                  }),
                                  cfg.latent_field.range));
  }
  if (family == ModelFamily::fusion)
    rep_scores.add("mult_bias_mean",
                   ens.average([](const EnsembleMember& m) { return m.mult_bias; }));
  return rep_scores;
}

}  // namespace

StudyResult run_study(const SimConfig& cfg, const StudyOptions& opts,
                      const std::function<void(const ReplicateOutcome&)>& on_result) {
  require(opts.replicates >= 1, "run_study: need at least one replicate");
  require(!opts.families.empty() && !opts.prior_scenarios.empty(),
          "run_study: nothing to run");
  const StudyContext ctx(cfg);

  // simulate serially so draws are independent of the thread count
  std::vector<SimReplicate> reps;
  reps.reserve(opts.replicates);
  for (int r = 0; r < opts.replicates; ++r) reps.push_back(ctx.simulate(r));

  std::vector<std::vector<ReplicateOutcome>> buckets(opts.replicates);
  parallel_for(opts.replicates, opts.threads, [&](int r) {
    for (PriorScenario ps : opts.prior_scenarios) {
      const HyperPriorSet priors = study_priors(ps, cfg);
      for (ModelFamily family : opts.families) {
        ReplicateOutcome out;
        out.replicate = r;
        out.prior_scenario = prior_scenario_name(ps);
        out.family = family_name(family);
        try {
          const PosteriorEnsemble ens = fit_ensemble(family, reps[r].data, ctx.mesh(),
                                                     priors, opts.optim, opts.alpha_grid);
          out.scores = score_replicate(cfg, ctx, reps[r], family, ens);
          out.scores.model = out.family;
          out.scores.scenario = out.prior_scenario + "/" +
                                scenario_name(cfg.stations);
          out.scores.replicate = r;
          if (family == ModelFamily::fusion)
            for (const auto& mem : ens.members)
              out.weights.emplace_back(mem.mult_bias, mem.weight);
        } catch (const std::exception& e) {
          out.failed = true;
          out.error = e.what();
        }
        buckets[r].push_back(std::move(out));
      }
    }
  });

  StudyResult result;
  for (auto& bucket : buckets)
    for (auto& out : bucket) {
      if (out.failed) ++result.failures;
      if (on_result) on_result(out);
      result.outcomes.push_back(std::move(out));
    }
  return result;
}

}  // namespace fusion
