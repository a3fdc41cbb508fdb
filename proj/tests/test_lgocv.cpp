#include <Eigen/Dense>

#include "doctest.h"
#include "fusion/errors.hpp"
#include "fusion/lgocv.hpp"
#include "support/test_support.hpp"

using namespace fusion;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PosteriorEnsemble fixed_theta_ensemble(ModelFamily family, const ObservationSet& data,
                                       const Mesh& mesh, const HyperPoint& th,
                                       double mult_bias = 1.0, double fe_prec = 1e-6) {
  PosteriorEnsemble ens;
  ens.family = family;
  EnsembleMember mem;
  mem.mult_bias = mult_bias;
  mem.theta = th;
  mem.weight = 1.0;
  mem.assembler = std::make_shared<SystemAssembler>(family, data, mesh, fe_prec, mult_bias);
  mem.posterior = condition(mem.assembler->assemble(th));
  mem.log_ml = mem.posterior.log_marginal;
  ens.members.push_back(std::move(mem));
  return ens;
}

HyperPoint demo_theta() {
  HyperPoint th;
  th.noise_sd_stations = 0.4;
  th.noise_sd_grid = 0.15;
  th.latent_sd = 1.2;
  th.latent_range = 0.8;
  th.bias_sd = 0.5;
  th.bias_range = 0.6;
  return th;
}

}  // namespace

TEST_CASE("leave-out plan construction") {
  // radius below the minimum pairwise distance: singleton sets
  const std::vector<Point> spread = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const LeaveOutPlan singles = build_plan(spread, 0.5);
  for (std::size_t i = 0; i < spread.size(); ++i) {
    REQUIRE(singles.groups[i].size() == 1);
    CHECK(singles.groups[i][0] == static_cast<int>(i));
  }

  // radius beyond the diameter: everything leaves together
  const LeaveOutPlan all = build_plan(spread, 5.0);
  for (const auto& g : all.groups) CHECK(g.size() == spread.size());

  // three stations on a line at 0, 50, 120 with radius 60
  const std::vector<Point> line = {{0, 0}, {50, 0}, {120, 0}};
  const LeaveOutPlan plan = build_plan(line, 60.0);
  CHECK(plan.groups[0] == std::vector<int>{0, 1});
  CHECK(plan.groups[1] == std::vector<int>{0, 1});
  CHECK(plan.groups[2] == std::vector<int>{2});

  CHECK_THROWS_AS(build_plan(line, 0.0), validation_error);

  // membership symmetric in distance
  Rng rng(3);
  std::vector<Point> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({rng.uniform(), rng.uniform()});
  const LeaveOutPlan sym = build_plan(pts, 0.3);
  for (int i = 0; i < 12; ++i)
    for (int j : sym.groups[i])
      CHECK(std::binary_search(sym.groups[j].begin(), sym.groups[j].end(), i));
}

TEST_CASE("re-conditioning equals deleting rows and re-solving") {
  Rng rng(21);
  const Mesh mesh = oracle::tiny_mesh(0.9, 0.4);
  const ObservationSet data = oracle::tiny_observations(rng, 5, 3, 2);
  const HyperPoint th = demo_theta();

  SystemAssembler assembler(ModelFamily::fusion, data, mesh, 1e-6, 1.1);
  const GaussianSystem sys = assembler.assemble(th);

  // drop all rows of stations 1 and 3
  std::vector<bool> keep(sys.n_rows(), true);
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> yk, nk;
  std::vector<RowKey> keys;
  int kept = 0;
  for (int r = 0; r < sys.n_rows(); ++r) {
    const RowKey& key = sys.row_keys[r];
    if (key.source == ObsSource::station && (key.loc == 1 || key.loc == 3)) {
      keep[r] = false;
      continue;
    }
    keys.push_back(key);
    yk.push_back(sys.response[r]);
    nk.push_back(sys.noise_precision[r]);
    ++kept;
  }
  // physically reduced system
  GaussianSystem reduced = sys;
  MatrixXd dense_a = MatrixXd(sys.obs_matrix);
  MatrixXd a_kept(kept, sys.layout.dim);
  int rr = 0;
  for (int r = 0; r < sys.n_rows(); ++r)
    if (keep[r]) a_kept.row(rr++) = dense_a.row(r);
  reduced.obs_matrix = a_kept.sparseView();
  reduced.response = Eigen::Map<VectorXd>(yk.data(), kept);
  reduced.noise_precision = Eigen::Map<VectorXd>(nk.data(), kept);
  reduced.row_keys = keys;

  const GaussianPosterior direct = condition(reduced);
  const oracle::DensePosterior dense = oracle::dense_condition(reduced);

  Eigen::SparseVector<double> c(sys.layout.dim);
  c.insert(0) = 1.0;
  c.insert(sys.layout.field1_offset + 2) = 0.5;

  Reconditioner rec(sys);
  const Reconditioner::Result res = rec.solve(keep, {c});

  CHECK((res.mean - direct.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((res.mean - dense.mean).cwiseAbs().maxCoeff() < 1e-8);
  const VectorXd cd = c;
  CHECK(res.means[0] == doctest::Approx(cd.dot(direct.mean)).epsilon(1e-10));
  CHECK(res.variances[0] == doctest::Approx(direct.variance_of(c)).epsilon(1e-8));
}

TEST_CASE("removing more data never shrinks the held-out variance") {
  Rng rng(22);
  const Mesh mesh = oracle::tiny_mesh(0.9, 0.4);
  const ObservationSet data = oracle::tiny_observations(rng, 6, 3, 1);
  const HyperPoint th = demo_theta();
  const PosteriorEnsemble ens =
      fixed_theta_ensemble(ModelFamily::stations_only, data, mesh, th);

  // nested plans: each station's group grows with the radius
  std::vector<double> prev;
  for (double radius : {1e-6, 0.2, 0.5}) {
    const LeaveOutPlan plan = build_plan(data.stations.points, radius);
    const LgocvResult res = run_lgocv(ens, data, plan);
    REQUIRE(res.flagged == 0);
    std::vector<double> vars;
    for (const CvPrediction& p : res.predictions) vars.push_back(p.pred_sd * p.pred_sd);
    if (!prev.empty())
      for (std::size_t i = 0; i < vars.size(); ++i)
        CHECK(vars[i] >= prev[i] * (1.0 - 1e-9));
    prev = vars;
  }
}

TEST_CASE("grid rows survive every leave-out") {
  Rng rng(23);
  const Mesh mesh = oracle::tiny_mesh(0.9, 0.4);
  const ObservationSet data = oracle::tiny_observations(rng, 4, 5, 1);
  const HyperPoint th = demo_theta();
  const PosteriorEnsemble ens = fixed_theta_ensemble(ModelFamily::fusion, data, mesh, th, 1.1);

  // radius covering everything: only grid rows remain, still informative
  const LeaveOutPlan plan = build_plan(data.stations.points, 10.0);
  const LgocvResult res = run_lgocv(ens, data, plan);
  CHECK(res.flagged == 0);
  for (const CvPrediction& p : res.predictions) {
    CHECK(!p.missing);
    CHECK(p.pred_sd > 0.0);
    CHECK(std::isfinite(p.pred_mean));
  }
}

TEST_CASE("stations-only model flags fully emptied likelihoods") {
  Rng rng(24);
  const Mesh mesh = oracle::tiny_mesh(0.9, 0.4);
  const ObservationSet data = oracle::tiny_observations(rng, 3, 2, 1);
  const HyperPoint th = demo_theta();
  const PosteriorEnsemble ens =
      fixed_theta_ensemble(ModelFamily::stations_only, data, mesh, th);
  const LeaveOutPlan plan = build_plan(data.stations.points, 10.0);
  const LgocvResult res = run_lgocv(ens, data, plan);
  CHECK(res.flagged == 3);
  for (const CvPrediction& p : res.predictions) CHECK(p.missing);
  CHECK_THROWS_AS(res.scores(), validation_error);  // nothing left to score
}

TEST_CASE("with the spatial field silenced the held-out mean is the regression fit") {
  Rng rng(25);
  const Mesh mesh = oracle::tiny_mesh(0.9, 0.4);
  ObservationSet data = oracle::tiny_observations(rng, 7, 2, 1);
  // linear signal in the covariate
  for (int i = 0; i < data.stations.n_locations(); ++i)
    data.stations.values(i, 0) = 1.5 + 2.0 * data.stations.covariates[1](i, 0);

  HyperPoint th = demo_theta();
  th.latent_sd = 1e-5;  // spatial field effectively removed
  th.noise_sd_stations = 0.3;
  const PosteriorEnsemble ens =
      fixed_theta_ensemble(ModelFamily::stations_only, data, mesh, th);
  const LeaveOutPlan plan = build_plan(data.stations.points, 1e-9);  // singletons

  const LgocvResult res = run_lgocv(ens, data, plan);
  REQUIRE(res.predictions.size() == 7);
  for (const CvPrediction& p : res.predictions) {
    // closed-form ridge regression on the remaining stations
    MatrixXd zt(6, 2);
    VectorXd yt(6);
    int k = 0;
    for (int i = 0; i < 7; ++i) {
      if (i == p.station) continue;
      zt(k, 0) = 1.0;
      zt(k, 1) = data.stations.covariates[1](i, 0);
      yt(k) = data.stations.value(i, 1);
      ++k;
    }
    const double noise_prec = 1.0 / (th.noise_sd_stations * th.noise_sd_stations);
    const MatrixXd qb =
        noise_prec * zt.transpose() * zt + 1e-6 * MatrixXd::Identity(2, 2);
    const VectorXd beta = qb.ldlt().solve(noise_prec * zt.transpose() * yt);
    const double expected = beta[0] + beta[1] * data.stations.covariates[1](p.station, 0);
    CHECK(p.pred_mean == doctest::Approx(expected).epsilon(5e-3));
  }
}

TEST_CASE("removing an uninformative group leaves the predictive unchanged") {
  Rng rng(26);
  const Mesh mesh = build_mesh(Domain::rectangle(0, 0, 4, 1), 0.8, 0.4);
  ObservationSet data = oracle::tiny_observations(rng, 4, 2, 1);
  // isolated stations, short field range: groups stay singletons and nothing
  // spills between locations
  data.stations.points = {{0.2, 0.4}, {1.3, 0.6}, {2.4, 0.2}, {3.8, 0.5}};
  for (int j = 0; j < data.grid.n_locations(); ++j)
    data.grid.points[j] = {0.2 + 0.2 * j, 0.8};

  HyperPoint th = demo_theta();
  th.latent_range = 0.25;
  th.noise_sd_stations = 1e4;  // noise-dominated observations carry ~no information
  // unit fixed-effect precision: the vague default would itself soak up the
  // residual trace of information and blur the comparison
  const PosteriorEnsemble ens =
      fixed_theta_ensemble(ModelFamily::stations_only, data, mesh, th, 1.0, 1.0);

  const LeaveOutPlan plan = build_plan(data.stations.points, 0.05);
  const LgocvResult res = run_lgocv(ens, data, plan);
  for (const CvPrediction& p : res.predictions) {
    const double kl = gaussian_kl(p.pred_mean, p.pred_sd, p.full_mean, p.full_sd);
    CHECK(kl < 1e-6);
  }

  // informative observations, by contrast, leave a visible gap
  HyperPoint sharp = demo_theta();
  sharp.latent_range = 0.25;
  sharp.noise_sd_stations = 0.1;
  const PosteriorEnsemble ens2 =
      fixed_theta_ensemble(ModelFamily::stations_only, data, mesh, sharp, 1.0, 1.0);
  const LgocvResult res2 = run_lgocv(ens2, data, plan);
  double max_kl = 0.0;
  for (const CvPrediction& p : res2.predictions)
    max_kl = std::max(max_kl, gaussian_kl(p.pred_mean, p.pred_sd, p.full_mean, p.full_sd));
  CHECK(max_kl > 0.1);
}
