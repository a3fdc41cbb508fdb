#pragma once

#include <Eigen/Sparse>

#include "fusion/geometry.hpp"

namespace fusion {

using SparseMat = Eigen::SparseMatrix<double>;

// Matérn field parameters. The smoothness is fixed, never estimated; the
// GMRF construction below supports smoothness 1 only.
struct MaternParams {
  double range = 1.0;       // distance at which correlation drops to ~0.1
  double sd = 1.0;          // marginal standard deviation
  double smoothness = 1.0;

  void validate() const;
  double kappa() const;  // scale parameter sqrt(8*smoothness)/range
};

// Matérn covariance at distance `dist`; returns sd^2 at dist = 0.
double matern_cov(double dist, const MaternParams& params);

// Piecewise-linear FEM operators for a triangulation, cached per mesh:
// lumped mass (diagonal) and stiffness, plus the composite G C^-1 G term.
struct FemOperators {
  Eigen::VectorXd mass;  // lumped mass, one entry per vertex
  SparseMat stiffness;
  SparseMat stiff_mass_stiff;  // stiffness * mass^-1 * stiffness

  explicit FemOperators(const Mesh& mesh);

  // Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G) with tau chosen so the
  // nominal marginal variance equals params.sd^2.
  SparseMat precision(const MaternParams& params) const;
};

// One-shot convenience wrapper around FemOperators.
SparseMat spde_precision(const Mesh& mesh, const MaternParams& params);

// (row, col, value) text export for debugging.
void write_sparse_coo(const SparseMat& m, const std::string& path);

}  // namespace fusion
