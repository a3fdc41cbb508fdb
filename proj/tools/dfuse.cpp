// Command line front end. Links only the shared-library C API.
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "datafusion.h"

namespace {

int finish(df_status status) {
  switch (status) {
    case DF_OK:
      return 0;
    case DF_ERR_VALIDATION:
    case DF_ERR_IO:
      std::fprintf(stderr, "error: %s\n", df_last_error());
      return 1;
    case DF_ERR_NUMERIC:
      std::fprintf(stderr, "numerical failure: %s\n", df_last_error());
      return 2;
  }
  return 1;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

struct CommonFlags {
  std::string config;
  std::string out;
  long seed = 0;
  int threads = 0;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;

  void attach(CLI::App* cmd, bool needs_config) {
    if (needs_config) cmd->add_option("--config", config, "run configuration (JSON)")->required();
    out_opt = cmd->add_option("--out", out, "output directory (overrides the config)");
    seed_opt = cmd->add_option("--seed", seed, "seed (overrides the config)");
    threads_opt = cmd->add_option("--threads", threads, "worker threads (overrides the config)");
  }

  // flag > file > default precedence, applied as top-level config overrides
  std::string overrides() const {
    std::string j;
    auto add = [&](const std::string& item) {
      j += j.empty() ? "{" : ",";
      j += item;
    };
    if (out_opt != nullptr && out_opt->count() > 0) add("\"out\":\"" + json_escape(out) + "\"");
    if (seed_opt != nullptr && seed_opt->count() > 0) add("\"seed\":" + std::to_string(seed));
    if (threads_opt != nullptr && threads_opt->count() > 0)
      add("\"threads\":" + std::to_string(threads));
    if (!j.empty()) j += "}";
    return j;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal data fusion of station and gridded observations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(df_version()));

  std::string stations, grid, targets, fit_dir, results_dir, pred_out, report_out, fix_out;
  bool calibrate = false;
  CommonFlags sim_flags, fit_flags, cv_flags;

  auto* sim = app.add_subcommand("simulate", "simulate replicate data / run the study");
  sim_flags.attach(sim, true);

  auto* fit = app.add_subcommand("fit", "fit the configured model family");
  fit_flags.attach(fit, true);
  fit->add_option("--stations", stations, "station observations CSV")->required();
  fit->add_option("--grid", grid, "gridded observations CSV");

  auto* pred = app.add_subcommand("predict", "predict from a fit artifact");
  pred->add_option("--fit", fit_dir, "fit artifact directory")->required();
  pred->add_option("--targets", targets, "prediction targets CSV")->required();
  pred->add_option("--out", pred_out, "output directory (defaults to the artifact)");
  pred->add_flag("--calibrate", calibrate, "also write calibrated grid values");

  auto* cv = app.add_subcommand("cv", "leave-group-out cross-validation");
  cv_flags.attach(cv, true);
  cv->add_option("--stations", stations, "station observations CSV")->required();
  cv->add_option("--grid", grid, "gridded observations CSV");

  auto* report = app.add_subcommand("report", "aggregate a study directory");
  report->add_option("--dir", results_dir, "study output directory")->required();
  report->add_option("--out", report_out, "destination for the figure tables");

  auto* fixtures = app.add_subcommand("fixtures", "write the station layout fixtures");
  fixtures->add_option("--out", fix_out, "destination directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    const std::string ov = sim_flags.overrides();
    return finish(df_cmd_simulate(sim_flags.config.c_str(), ov.empty() ? nullptr : ov.c_str()));
  }
  if (fit->parsed()) {
    const std::string ov = fit_flags.overrides();
    return finish(df_cmd_fit(fit_flags.config.c_str(), stations.c_str(),
                             grid.empty() ? nullptr : grid.c_str(),
                             ov.empty() ? nullptr : ov.c_str()));
  }
  if (pred->parsed())
    return finish(df_cmd_predict(fit_dir.c_str(), targets.c_str(),
                                 pred_out.empty() ? nullptr : pred_out.c_str(),
                                 calibrate ? 1 : 0));
  if (cv->parsed()) {
    const std::string ov = cv_flags.overrides();
    return finish(df_cmd_cv(cv_flags.config.c_str(), stations.c_str(),
                            grid.empty() ? nullptr : grid.c_str(),
                            ov.empty() ? nullptr : ov.c_str()));
  }
  if (report->parsed())
    return finish(df_cmd_report(results_dir.c_str(),
                                report_out.empty() ? nullptr : report_out.c_str()));
  if (fixtures->parsed()) return finish(df_cmd_fixtures(fix_out.c_str()));
  return 1;
}
