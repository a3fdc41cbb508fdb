#include "fusion/runner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "fusion/errors.hpp"
#include "fusion/version.hpp"

namespace fusion {

namespace {

void echo_config(const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  write_text(dir + "/config.json", resolved_config_json(cfg).dump(2) + "\n");
}

std::string rep_dir_name(int r) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "rep%04d", r);
  return buf;
}

void write_station_csv(const std::string& path, const SourceData& s, int n_times) {
  std::ostringstream out;
  out << "station_id,x,y,t,value,z\n";
  for (int i = 0; i < s.n_locations(); ++i)
    for (int t = 1; t <= n_times; ++t) {
      out << s.ids[i] << "," << format_double(s.points[i].x) << ","
          << format_double(s.points[i].y) << "," << t << ",";
      if (s.observed(i, t)) out << format_double(s.value(i, t));
      out << "," << format_double(s.covariates[1](i, t - 1)) << "\n";
    }
  write_text(path, out.str());
}

void write_grid_csv(const std::string& path, const SourceData& g, int n_times,
                    const Eigen::VectorXd& bias_truth) {
  std::ostringstream out;
  out << "cell_id,x,y,t,value,z,bias_truth\n";
  for (int j = 0; j < g.n_locations(); ++j)
    for (int t = 1; t <= n_times; ++t) {
      out << g.ids[j] << "," << format_double(g.points[j].x) << ","
          << format_double(g.points[j].y) << "," << t << ",";
      if (g.observed(j, t)) out << format_double(g.value(j, t));
      out << "," << format_double(g.covariates[1](j, t - 1)) << ","
          << format_double(bias_truth[j]) << "\n";
    }
  write_text(path, out.str());
}

void write_truth_csv(const std::string& path, const SimReplicate& rep) {
  std::ostringstream out;
  out << "x,y,z,truth\n";
  for (std::size_t i = 0; i < rep.eval_points.size(); ++i)
    out << format_double(rep.eval_points[i].x) << "," << format_double(rep.eval_points[i].y)
        << "," << format_double(rep.covariate[static_cast<int>(i)]) << ","
        << format_double(rep.truth[static_cast<int>(i)]) << "\n";
  write_text(path, out.str());
}

void write_layout_csv(const std::string& path, const std::vector<Point>& pts) {
  std::ostringstream out;
  out << "station_id,x,y\n";
  for (std::size_t i = 0; i < pts.size(); ++i)
    out << "s" << i + 1 << "," << format_double(pts[i].x) << "," << format_double(pts[i].y)
        << "\n";
  write_text(path, out.str());
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  SimConfig sim = cfg.simulation.sim;
  sim.base_seed = cfg.seed;  // the run seed drives the study
  sim.validate();
  const std::string dir = cfg.out;
  echo_config(cfg, dir);
  write_layout_csv(dir + "/layout.csv", sim.station_points());

  const StudyContext ctx(sim);
  if (cfg.simulation.write_data) {
    for (int r = 0; r < cfg.simulation.replicates; ++r) {
      const SimReplicate rep = ctx.simulate(r);
      const std::string rdir = dir + "/replicates/" + rep_dir_name(r);
      ensure_dir(rdir);
      write_station_csv(rdir + "/stations.csv", rep.data.stations, rep.data.n_times);
      write_grid_csv(rdir + "/grid.csv", rep.data.grid, rep.data.n_times, rep.bias_truth);
      write_truth_csv(rdir + "/truth.csv", rep);
    }
  }

  if (!cfg.simulation.fit) return;

  StudyOptions opts;
  opts.families = cfg.simulation.families;
  opts.prior_scenarios = cfg.simulation.prior_scenarios;
  opts.replicates = cfg.simulation.replicates;
  opts.threads = cfg.threads;
  opts.optim = cfg.optim;
  opts.alpha_grid = cfg.model.alpha_grid;

  std::ostringstream weights;
  weights << "replicate,prior_scenario,alpha1,weight\n";
  std::ostringstream failures;
  failures << "replicate,prior_scenario,family,error\n";

  std::vector<ScoreReport> reports;
  const StudyResult result = run_study(sim, opts, [&](const ReplicateOutcome& out) {
    if (out.failed) {
      std::string msg = out.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      failures << out.replicate << "," << out.prior_scenario << "," << out.family << ","
               << msg << "\n";
      return;
    }
    reports.push_back(out.scores);
    for (const auto& [alpha, w] : out.weights)
      weights << out.replicate << "," << out.prior_scenario << "," << format_double(alpha)
              << "," << format_double(w) << "\n";
  });

  write_score_csv(reports, dir + "/scores.csv");
  write_text(dir + "/weights.csv", weights.str());
  write_text(dir + "/failures.csv", failures.str());

  // aggregated means per (scenario, family, score)
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, long>> agg;
  for (const ScoreReport& rep : reports)
    for (const auto& [name, value] : rep.scores) {
      auto& cell = agg[{rep.scenario, rep.model, name}];
      cell.first += value;
      cell.second += 1;
    }
  std::ostringstream summary;
  summary << "scenario,model,score_name,mean,n\n";
  for (const auto& [key, cell] : agg)
    summary << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << ","
            << format_double(cell.first / cell.second) << "," << cell.second << "\n";
  write_text(dir + "/summary.csv", summary.str());
}

std::string cmd_fit(const RunConfig& cfg, const std::string& stations_csv,
                    const std::string& grid_csv) {
  const HyperPriorSet& priors = cfg.require_priors();
  const ObservationSet data = read_observations(stations_csv, grid_csv, cfg);
  const Mesh mesh = build_mesh(cfg.domain.domain, cfg.mesh_max_edge(), cfg.mesh_extension(),
                               {cfg.mesh.band_coarsening, cfg.mesh.max_vertices});

  const PosteriorEnsemble ens =
      fit_ensemble(cfg.model.family, data, mesh, priors, cfg.optim, cfg.model.alpha_grid,
                   cfg.threads, cfg.model.theta_grid);

  const std::string dir = cfg.out;
  echo_config(cfg, dir);
  save_fit(dir, cfg, data, mesh, ens, stations_csv, grid_csv);

  // conditional marginal likelihoods and averaging weights
  std::ostringstream w;
  w << "alpha1,log_ml,weight\n";
  for (const EnsembleMember& m : ens.members)
    w << format_double(m.mult_bias) << "," << format_double(m.log_ml) << ","
      << format_double(m.weight) << "\n";
  write_text(dir + "/weights.csv", w.str());
  return dir;
}

void cmd_predict(const std::string& fit_dir, const std::string& targets_csv,
                 const PredictOptions& opts) {
  const FitArtifact art = load_fit(fit_dir);
  const std::string dir = opts.out.empty() ? fit_dir : opts.out;
  ensure_dir(dir);
  write_text(dir + "/config.json", resolved_config_json(art.config).dump(2) + "\n");

  const std::vector<TargetRow> rows = read_targets(targets_csv, art.config, art.data.n_times);
  std::ostringstream out;
  out << "x,y,t,mean,sd,status\n";
  long bad = 0;
  for (const TargetRow& row : rows) {
    out << format_double(row.location.x) << "," << format_double(row.location.y) << ","
        << row.t << ",";
    std::string status = row.usable ? "ok" : row.issue;
    if (status == "ok") {
      try {
        PredictionTarget t;
        t.location = row.location;
        t.t = row.t;
        t.covariates = row.covariates;
        const PredictionSummary p = art.ensemble.predict({t});
        out << format_double(p.mean[0]) << "," << format_double(p.sd[0]);
      } catch (const validation_error&) {
        status = "outside_mesh";
      }
    }
    if (status != "ok") {
      ++bad;
      out << ",";
    }
    out << "," << status << "\n";
  }
  write_text(dir + "/predictions.csv", out.str());
  if (bad == static_cast<long>(rows.size()))
    throw validation_error("predict: no target could be evaluated (see predictions.csv)");

  if (opts.calibrate) {
    require(art.ensemble.family == ModelFamily::fusion,
            "--calibrate applies to fusion fits only");
    const auto calibrated = calibrate_grid(art.ensemble, art.data);
    std::ostringstream cal;
    cal << "cell_id,x,y,t,observed,bias_mean,calibrated\n";
    for (const CalibratedValue& v : calibrated)
      cal << art.data.grid.ids[v.cell] << "," << format_double(art.data.grid.points[v.cell].x)
          << "," << format_double(art.data.grid.points[v.cell].y) << "," << v.t << ","
          << format_double(v.observed) << "," << format_double(v.bias_mean) << ","
          << format_double(v.calibrated) << "\n";
    write_text(dir + "/calibrated.csv", cal.str());
  }
}

void cmd_cv(const RunConfig& cfg, const std::string& stations_csv,
            const std::string& grid_csv) {
  const HyperPriorSet& priors = cfg.require_priors();
  const ObservationSet data = read_observations(stations_csv, grid_csv, cfg);
  const Mesh mesh = build_mesh(cfg.domain.domain, cfg.mesh_max_edge(), cfg.mesh_extension(),
                               {cfg.mesh.band_coarsening, cfg.mesh.max_vertices});
  const std::string dir = cfg.out;
  echo_config(cfg, dir);

  // hyperparameters (and weights) are estimated once on the full data
  const PosteriorEnsemble ens = fit_ensemble(cfg.model.family, data, mesh, priors, cfg.optim,
                                             cfg.model.alpha_grid, cfg.threads,
                                             cfg.model.theta_grid);

  std::ostringstream rowsout;
  rowsout << "station,t,radius,model,pred_mean,pred_sd,full_mean,full_sd,y\n";
  std::vector<ScoreReport> reports;
  for (double radius : cfg.lgocv_radii) {
    const LeaveOutPlan plan = build_plan(data.stations.points, radius);
    const LgocvResult res = run_lgocv(ens, data, plan, cfg.threads);
    for (const CvPrediction& p : res.predictions) {
      rowsout << data.stations.ids[p.station] << "," << p.t << "," << format_double(p.radius)
              << "," << family_name(cfg.model.family) << ",";
      if (p.missing)
        rowsout << ",,";
      else
        rowsout << format_double(p.pred_mean) << "," << format_double(p.pred_sd) << ","
                << format_double(p.full_mean);
      rowsout << "," << format_double(p.full_sd) << "," << format_double(p.y) << "\n";
    }
    ScoreReport rep = res.scores();
    rep.model = family_name(cfg.model.family);
    rep.scenario = "lgocv";
    rep.radius = radius;
    reports.push_back(std::move(rep));
  }
  write_text(dir + "/lgocv.csv", rowsout.str());
  write_score_csv(reports, dir + "/scores.csv");
}

namespace {

double cell_num(const CsvFile& csv, const std::vector<std::string>& row,
                const std::string& col) {
  const int c = csv.column(col);
  require(c >= 0, "report: missing column " + col);
  return std::stod(row[c]);
}

std::string cell_str(const CsvFile& csv, const std::vector<std::string>& row,
                     const std::string& col) {
  const int c = csv.column(col);
  require(c >= 0, "report: missing column " + col);
  return row[c];
}

}  // namespace

void cmd_report(const std::string& results_dir, const std::string& out_dir) {
  const std::string dir = out_dir.empty() ? results_dir : out_dir;
  ensure_dir(dir);
  const CsvFile scores = read_csv_file(results_dir + "/scores.csv");

  // field scores: mean per (scenario, model, score), with log(ase) added
  struct Cell {
    double sum = 0.0;
    long n = 0;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Cell> field;
  std::vector<double> ds_values;
  std::vector<std::tuple<std::string, std::string>> ds_keys;
  long used_rows = 0;
  for (const auto& row : scores.rows) {
    const std::string name = cell_str(scores, row, "score_name");
    const std::string scen = cell_str(scores, row, "scenario");
    const std::string model = cell_str(scores, row, "model");
    const double value = cell_num(scores, row, "value");
    auto bump = [&](const std::string& key, double v) {
      auto& cell = field[{scen, model, key}];
      cell.sum += v;
      cell.n += 1;
    };
    if (name == "ase") {
      bump("ase", value);
      bump("log_ase", std::log(value));
      ++used_rows;
    } else if (name == "apsd" || name == "ds" || name.rfind("rel_err_", 0) == 0 ||
               name.rfind("sd_", 0) == 0 || name == "mult_bias_mean") {
      bump(name, value);
      ++used_rows;
    }
    if (name == "ds") {
      ds_values.push_back(value);
      ds_keys.emplace_back(scen, model);
    }
  }
  {
    std::ostringstream out;
    out << "scenario,model,score_name,mean,n\n";
    for (const auto& [key, cell] : field)
      out << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << ","
          << format_double(cell.sum / cell.n) << "," << cell.n << "\n";
    write_text(dir + "/fig_field_scores.csv", out.str());
  }

  // scaled DS panel (shift by the panel minimum, then log)
  if (!ds_values.empty()) {
    const std::vector<double> scaled = scaled_ds(ds_values);
    std::map<std::tuple<std::string, std::string>, Cell> panel;
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      auto& cell = panel[ds_keys[i]];
      cell.sum += scaled[i];
      cell.n += 1;
    }
    std::ostringstream out;
    out << "scenario,model,mean_scaled_ds,n\n";
    for (const auto& [key, cell] : panel)
      out << std::get<0>(key) << "," << std::get<1>(key) << ","
          << format_double(cell.sum / cell.n) << "," << cell.n << "\n";
    write_text(dir + "/fig_scaled_ds.csv", out.str());
  }

  // averaged model-averaging weights per bias value
  std::error_code ec;
  if (std::filesystem::exists(results_dir + "/weights.csv", ec)) {
    const CsvFile weights = read_csv_file(results_dir + "/weights.csv");
    std::map<std::tuple<std::string, std::string>, Cell> agg;
    for (const auto& row : weights.rows) {
      const std::string prior = cell_str(weights, row, "prior_scenario");
      const std::string alpha = cell_str(weights, row, "alpha1");
      auto& cell = agg[{prior, alpha}];
      cell.sum += cell_num(weights, row, "weight");
      cell.n += 1;
    }
    std::ostringstream out;
    out << "prior_scenario,alpha1,mean_weight,n\n";
    for (const auto& [key, cell] : agg)
      out << std::get<0>(key) << "," << std::get<1>(key) << ","
          << format_double(cell.sum / cell.n) << "," << cell.n << "\n";
    write_text(dir + "/fig_weights.csv", out.str());
  }

  Json manifest;
  manifest["input_rows"] = scores.rows.size();
  manifest["aggregated_rows"] = used_rows;
  manifest["software_version"] = kVersion;
  write_text(dir + "/report_manifest.json", manifest.dump(2) + "\n");
}

void cmd_fixtures(const std::string& out_dir) {
  ensure_dir(out_dir);
  for (StationScenario s :
       {StationScenario::n10, StationScenario::n25, StationScenario::n40})
    write_layout_csv(out_dir + "/" + scenario_name(s) + ".csv", station_layouts(s));
}

}  // namespace fusion
