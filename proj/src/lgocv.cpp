#include "fusion/lgocv.hpp"

#include <algorithm>
#include <cmath>

#include "fusion/errors.hpp"
#include "fusion/parallel.hpp"

namespace fusion {

void LeaveOutPlan::validate(int n_stations) const {
  require(radius > 0.0, "leave-out radius must be positive");
  require(static_cast<int>(groups.size()) == n_stations, "plan size mismatch");
  for (int i = 0; i < n_stations; ++i) {
    require(std::binary_search(groups[i].begin(), groups[i].end(), i),
            "leave-out group must contain its own testing station");
    for (int j : groups[i])
      require(j >= 0 && j < n_stations, "leave-out member out of range");
  }
}

LeaveOutPlan build_plan(const std::vector<Point>& stations, double radius) {
  require(radius > 0.0, "build_plan: radius must be positive");
  LeaveOutPlan plan;
  plan.radius = radius;
  plan.groups.resize(stations.size());
  for (std::size_t i = 0; i < stations.size(); ++i) {
    for (std::size_t j = 0; j < stations.size(); ++j) {
      const double dx = stations[i].x - stations[j].x;
      const double dy = stations[i].y - stations[j].y;
      if (std::sqrt(dx * dx + dy * dy) <= radius)
        plan.groups[i].push_back(static_cast<int>(j));
    }
  }
  plan.validate(static_cast<int>(stations.size()));
  return plan;
}

ScoreReport LgocvResult::scores() const {
  std::vector<CvRecord> records;
  records.reserve(predictions.size());
  for (const CvPrediction& p : predictions) {
    if (p.missing) continue;
    records.push_back({p.y, p.pred_mean, p.pred_sd, p.full_mean, p.full_sd});
  }
  ScoreReport rep = lgocv_scores(records, obs_noise_var);
  rep.add("flagged_stations", static_cast<double>(flagged));
  rep.radius = predictions.empty() ? -1.0 : predictions.front().radius;
  return rep;
}

LgocvResult run_lgocv(const PosteriorEnsemble& ensemble, const ObservationSet& data,
                      const LeaveOutPlan& plan, int threads) {
  require(!ensemble.members.empty(), "run_lgocv: empty ensemble");
  const int n_stations = data.stations.n_locations();
  plan.validate(n_stations);

  // functionals of the latent surface at each observed (station, time)
  const SystemAssembler& asm0 = *ensemble.members.front().assembler;
  std::vector<std::pair<int, int>> cells;  // (station, t)
  std::vector<Eigen::SparseVector<double>> functionals;
  for (int i = 0; i < n_stations; ++i)
    for (int t = 1; t <= data.n_times; ++t) {
      if (!data.stations.observed(i, t)) continue;
      PredictionTarget target;
      target.location = data.stations.points[i];
      target.t = t;
      target.covariates.resize(data.n_covariates());
      for (int k = 0; k < data.n_covariates(); ++k)
        target.covariates[k] = data.stations.covariates[k](i, t - 1);
      cells.emplace_back(i, t);
      functionals.push_back(asm0.target_functional(target));
    }

  // full-data predictive (mixture over members)
  std::vector<double> full_mean(cells.size()), full_sd(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    double m = 0.0, s = 0.0;
    ensemble.mixture_of(functionals[c], m, s);
    full_mean[c] = m;
    full_sd[c] = s;
  }

  const int n_members = static_cast<int>(ensemble.members.size());
  // per member: held-out moments for every (group, cell-of-group)
  std::vector<std::vector<std::vector<double>>> mem_means(n_members), mem_vars(n_members);
  std::vector<char> group_empty(n_stations, 0);

  // group cells: indices into `cells` belonging to each testing station
  std::vector<std::vector<int>> group_cells(n_stations);
  for (std::size_t c = 0; c < cells.size(); ++c)
    group_cells[cells[c].first].push_back(static_cast<int>(c));

  parallel_for(n_members, threads, [&](int m) {
    const EnsembleMember& mem = ensemble.members[m];
    Reconditioner rec(mem.assembler->assemble(mem.theta));
    const GaussianSystem& sys = rec.system();
    mem_means[m].resize(n_stations);
    mem_vars[m].resize(n_stations);
    for (int i = 0; i < n_stations; ++i) {
      const auto& group = plan.groups[i];
      std::vector<bool> keep(sys.n_rows(), true);
      int kept = 0;
      for (int r = 0; r < sys.n_rows(); ++r) {
        const RowKey& key = sys.row_keys[r];
        if (key.source == ObsSource::station &&
            std::binary_search(group.begin(), group.end(), key.loc))
          keep[r] = false;
        else
          ++kept;
      }
      if (kept == 0) {
        group_empty[i] = 1;
        continue;
      }
      std::vector<Eigen::SparseVector<double>> fs;
      fs.reserve(group_cells[i].size());
      for (int c : group_cells[i]) fs.push_back(functionals[c]);
      const Reconditioner::Result res = rec.solve(keep, fs);
      mem_means[m][i] = res.means;
      mem_vars[m][i] = res.variances;
    }
  });

  LgocvResult out;
  out.obs_noise_var = ensemble.average([](const EnsembleMember& m) {
    return m.theta.noise_sd_stations * m.theta.noise_sd_stations;
  });
  for (int i = 0; i < n_stations; ++i)
    if (group_empty[i]) ++out.flagged;

  for (int i = 0; i < n_stations; ++i) {
    for (std::size_t g = 0; g < group_cells[i].size(); ++g) {
      const int c = group_cells[i][g];
      CvPrediction p;
      p.station = cells[c].first;
      p.t = cells[c].second;
      p.radius = plan.radius;
      p.y = data.stations.value(p.station, p.t);
      p.full_mean = full_mean[c];
      p.full_sd = full_sd[c];
      if (group_empty[i]) {
        p.missing = true;
      } else {
        double m1 = 0.0, m2 = 0.0;
        for (int m = 0; m < n_members; ++m) {
          const double w = ensemble.members[m].weight;
          const double mk = mem_means[m][i][g];
          m1 += w * mk;
          m2 += w * (mem_vars[m][i][g] + mk * mk);
        }
        p.pred_mean = m1;
        p.pred_sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
      }
      out.predictions.push_back(p);
    }
  }
  return out;
}

LgocvResult run_lgocv(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                      const HyperPriorSet& priors, const LeaveOutPlan& plan,
                      const OptimOptions& optim, const std::vector<double>& alpha_grid,
                      int threads) {
  const PosteriorEnsemble ens =
      fit_ensemble(family, data, mesh, priors, optim, alpha_grid, threads);
  return run_lgocv(ens, data, plan, threads);
}

}  // namespace fusion
