#pragma once

#include <memory>
#include <optional>

#include "fusion/data.hpp"
#include "fusion/priors.hpp"
#include "fusion/spacetime.hpp"
#include "fusion/spde.hpp"

namespace fusion {

enum class ModelFamily { fusion, stations_only, regression_calibration };

const char* family_name(ModelFamily family);
ModelFamily family_from_name(const std::string& name);

// One hyperparameter configuration. Families read the slots they use:
//   fusion:       both noise sds, latent_* (process field), bias_* (error field)
//   stations_only: noise_sd_stations, latent_*
//   regression_calibration: noise_sd_stations, latent_* (additive-coefficient
//                 field), bias_* (multiplicative-coefficient field)
// Autoregressive coefficients apply only when n_times > 1.
struct HyperPoint {
  double noise_sd_stations = 1.0;
  double noise_sd_grid = 1.0;
  double latent_sd = 1.0;
  double latent_range = 1.0;
  double latent_ar = 0.0;
  double bias_sd = 1.0;
  double bias_range = 1.0;
  double bias_ar = 0.0;

  void validate(ModelFamily family) const;
};

struct BlockLayout {
  int n_fixed = 0;     // leading fixed-effect block
  int n_vertices = 0;  // mesh size
  int n_times = 1;
  int field1_offset = 0;
  int field2_offset = -1;  // -1 when the layout has a single field
  int dim = 0;

  int field1_index(int vertex, int t) const {  // t is 1-based
    return field1_offset + (t - 1) * n_vertices + vertex;
  }
  int field2_index(int vertex, int t) const {
    return field2_offset + (t - 1) * n_vertices + vertex;
  }
};

enum class ObsSource { station, grid };

struct RowKey {
  ObsSource source;
  int loc;  // index into the SourceData location list
  int t;    // 1-based
};

// Latent-Gaussian observation system shared by all model families:
//   latent ~ N(0, prior_precision^-1),  y | latent ~ N(A latent, N^-1)
struct GaussianSystem {
  SparseMat prior_precision;
  SparseMat obs_matrix;
  Eigen::VectorXd noise_precision;  // diagonal, one entry per row
  Eigen::VectorXd response;
  BlockLayout layout;
  std::vector<RowKey> row_keys;

  int n_rows() const { return static_cast<int>(response.size()); }
  void validate() const;
};

// A point at which the latent surface is predicted. Covariates must match the
// observation set's design columns (fusion / stations-only families).
struct PredictionTarget {
  Point location;
  int t = 1;
  Eigen::VectorXd covariates;
};

// Builds observation systems for one (family, data, mesh) combination.
// Construction does the geometry work once (projections, FEM operators,
// design matrix, predictor matching); assemble() is then cheap per
// hyperparameter value, which the optimizer relies on.
class SystemAssembler {
 public:
  SystemAssembler(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                  double fixed_effect_precision = 1e-6, double mult_bias = 1.0);

  GaussianSystem assemble(const HyperPoint& theta) const;

  // linear functional picking the latent surface value at a target
  Eigen::SparseVector<double> target_functional(const PredictionTarget& target) const;

  // functional for the error-field value at a grid cell (fusion only)
  Eigen::SparseVector<double> bias_functional(int cell, int t) const;

  ModelFamily family() const { return family_; }
  const BlockLayout& layout() const { return layout_; }
  double mult_bias() const { return mult_bias_; }
  // regression calibration: grid cell whose value multiplies a station's rows
  int matched_cell(int station) const;

  const ObservationSet& data() const { return data_; }
  const Mesh& mesh() const { return mesh_; }

 private:
  ModelFamily family_;
  // owned copies: assemblers are kept alive inside fitted ensembles, which may
  // outlive the caller's observation set
  ObservationSet data_;
  Mesh mesh_;
  double fe_precision_;
  double mult_bias_;
  BlockLayout layout_;
  std::shared_ptr<FemOperators> fem_;
  ProjectionMatrix station_proj_;
  ProjectionMatrix grid_proj_;
  std::vector<int> matched_cells_;  // per station, regression calibration only
  SparseMat obs_matrix_;
  Eigen::VectorXd response_;
  std::vector<RowKey> row_keys_;
  std::vector<ObsSource> row_source_;

  void build_rows();
  double predictor_value(int station, int t) const;  // matched grid value
};

// One-shot wrappers mirroring the three model definitions.
GaussianSystem assemble_fusion(const ObservationSet& data, const Mesh& mesh,
                               const HyperPoint& theta, double mult_bias,
                               double fixed_effect_precision = 1e-6);
GaussianSystem assemble_stations_only(const ObservationSet& data, const Mesh& mesh,
                                      const HyperPoint& theta,
                                      double fixed_effect_precision = 1e-6);
GaussianSystem assemble_regcalib(const ObservationSet& data, const Mesh& mesh,
                                 const HyperPoint& theta,
                                 double fixed_effect_precision = 1e-6);

}  // namespace fusion
