#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fusion/lgocv.hpp"
#include "fusion/simulation.hpp"

// vendored single-header json
#include "json.hpp"

namespace fusion {

using Json = nlohmann::json;

// ---- run configuration ----

struct TransformSpec {
  std::string name;     // design column name
  std::string source;   // raw CSV column
  std::string op;       // identity | log | log1p | square | interaction
  std::string source2;  // second raw column for interactions

  void validate() const;
  double apply(double a, double b) const;
};

struct CovariateConfig {
  bool intercept = true;
  std::vector<TransformSpec> design;
};

struct DomainConfig {
  Domain domain = Domain::rectangle(0.0, 0.0, 3.0, 2.6);
  bool to_km = false;  // convert degree coordinates to planar km at ingestion
};

struct MeshConfig {
  std::optional<double> max_edge;   // default: prior median range / 5
  std::optional<double> extension;  // default: prior median range
  double band_coarsening = 2.0;
  int max_vertices = 200000;
};

struct ModelConfig {
  ModelFamily family = ModelFamily::fusion;
  std::vector<double> alpha_grid = default_alpha_grid();
  std::vector<double> alpha_prior_weights;  // empty = uniform
  bool theta_grid = false;
};

struct SimulationSection {
  SimConfig sim;
  int replicates = 1;
  bool fit = false;
  std::vector<ModelFamily> families = {ModelFamily::fusion, ModelFamily::stations_only,
                                       ModelFamily::regression_calibration};
  std::vector<PriorScenario> prior_scenarios = {PriorScenario::matching};
  bool write_data = true;
};

struct RunConfig {
  long seed = 1;
  int threads = 1;
  std::string out = "out";
  DomainConfig domain;
  MeshConfig mesh;
  ModelConfig model;
  CovariateConfig covariates;
  std::optional<HyperPriorSet> priors;
  OptimOptions optim;
  std::vector<double> lgocv_radii = {60.0, 80.0, 125.0, 150.0};
  SimulationSection simulation;

  double mesh_max_edge() const;   // resolved against the priors
  double mesh_extension() const;
  const HyperPriorSet& require_priors() const;
};

// Parses and schema-validates a config document; unknown keys are rejected.
RunConfig parse_config(const Json& doc);
RunConfig load_config(const std::string& path);
// flag > file > default precedence: overrides is a flat object of top-level keys
RunConfig load_config(const std::string& path, const Json& overrides);
Json resolved_config_json(const RunConfig& cfg);

// ---- observation CSV ingestion ----

// stations: station_id,x,y,t,value[,raw covariates...]
// grid:     cell_id,x,y,t,value[,raw covariates...]
// empty value cells are missing; every other parse problem is an error
// naming the row.
ObservationSet read_observations(const std::string& stations_csv,
                                 const std::string& grid_csv, const RunConfig& cfg);

struct TargetRow {
  Point location;
  int t = 1;
  Eigen::VectorXd covariates;  // design columns
  bool usable = true;
  std::string issue;
};
std::vector<TargetRow> read_targets(const std::string& path, const RunConfig& cfg,
                                    int n_times);

// ---- fitted-model artifact ----

struct FitArtifact {
  RunConfig config;
  ObservationSet data;
  Mesh mesh;
  PosteriorEnsemble ensemble;
  std::string dir;
};

// Writes fit.json plus the mesh and verbatim copies of the data files into
// `dir`; the artifact is self-contained and reloadable.
void save_fit(const std::string& dir, const RunConfig& cfg, const ObservationSet& data,
              const Mesh& mesh, const PosteriorEnsemble& ensemble,
              const std::string& stations_csv, const std::string& grid_csv);
FitArtifact load_fit(const std::string& dir);

// ---- helpers ----

std::string format_double(double v);  // deterministic round-trip formatting
void ensure_dir(const std::string& path);
void copy_file(const std::string& from, const std::string& to);
void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

struct CsvFile {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};
CsvFile read_csv_file(const std::string& path);

}  // namespace fusion
