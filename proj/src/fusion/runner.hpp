#pragma once

#include <string>

#include "fusion/io.hpp"

namespace fusion {

// Command-level entry points used by the C API. Each writes its outputs plus
// the resolved configuration into the run's output directory.

// simulate replicate data (and optionally run the full replicate study)
void cmd_simulate(const RunConfig& cfg);

// fit the configured model family; writes a reloadable fit artifact
std::string cmd_fit(const RunConfig& cfg, const std::string& stations_csv,
                    const std::string& grid_csv);

struct PredictOptions {
  std::string out;         // defaults to the artifact directory
  bool calibrate = false;  // also write calibrated grid values (fusion only)
};
void cmd_predict(const std::string& fit_dir, const std::string& targets_csv,
                 const PredictOptions& opts = {});

// leave-group-out cross-validation over the configured radii
void cmd_cv(const RunConfig& cfg, const std::string& stations_csv,
            const std::string& grid_csv);

// aggregate a study output directory into plot-ready tables
void cmd_report(const std::string& results_dir, const std::string& out_dir = "");

// write the station-layout fixtures as CSV files
void cmd_fixtures(const std::string& out_dir);

}  // namespace fusion
