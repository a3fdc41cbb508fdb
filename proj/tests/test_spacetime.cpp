#include <Eigen/Dense>

#include "doctest.h"
#include "fusion/errors.hpp"
#include "fusion/spacetime.hpp"
#include "support/test_support.hpp"

using namespace fusion;

TEST_CASE("independence and single-time limits") {
  const Mesh mesh = oracle::tiny_mesh();
  const SparseMat qs = spde_precision(mesh, {0.8, 1.3, 1.0});

  // ar_coef 0: block diagonal with T copies of the spatial precision
  const SparseMat q0 = st_precision(qs, 0.0, 3);
  const int n = static_cast<int>(qs.rows());
  const Eigen::MatrixXd dq0 = Eigen::MatrixXd(q0);
  const Eigen::MatrixXd dqs = Eigen::MatrixXd(qs);
  for (int t = 0; t < 3; ++t)
    CHECK((dq0.block(t * n, t * n, n, n) - dqs).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(dq0.block(0, n, n, n).cwiseAbs().maxCoeff() == 0.0);

  // single time point: stationary variance inflation inverts to (1 - phi^2) Q
  const SparseMat q1 = st_precision(qs, 0.5, 1);
  const Eigen::MatrixXd diff = Eigen::MatrixXd(q1) - 0.75 * dqs;
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(st_precision(qs, 1.0, 3), validation_error);
  CHECK_THROWS_AS(st_precision(qs, 0.5, 0), validation_error);
}

TEST_CASE("inverse equals the stationary autoregressive covariance") {
  // small mesh so the dense oracle stays cheap
  const Mesh mesh = build_mesh(Domain::rectangle(0, 0, 1, 1), 1.2, 0.0);
  REQUIRE(mesh.n_vertices() <= 10);
  const SparseMat qs = spde_precision(mesh, {0.7, 1.1, 1.0});
  const double phi = 0.6;
  const int n_times = 3;

  const SparseMat q = st_precision(qs, phi, n_times);
  const Eigen::MatrixXd cov = Eigen::MatrixXd(q).inverse();
  const Eigen::MatrixXd expected =
      oracle::st_covariance(Eigen::MatrixXd(qs).inverse(), phi, n_times);
  CHECK((cov - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("exact symmetry, SPD up to strong dependence, time reversal") {
  const Mesh mesh = oracle::tiny_mesh();
  const SparseMat qs = spde_precision(mesh, {0.9, 0.8, 1.0});
  const int n = static_cast<int>(qs.rows());

  for (double phi : {-0.99, -0.5, 0.0, 0.37, 0.99}) {
    const SparseMat q = st_precision(qs, phi, 4);
    const SparseMat qskew = SparseMat(q - SparseMat(q.transpose()));
    const bool exact_symmetric = qskew.coeffs().size() == 0 || qskew.coeffs().abs().maxCoeff() == 0.0;
    CHECK(exact_symmetric);
    Eigen::SimplicialLLT<SparseMat> llt(q);
    CHECK(llt.info() == Eigen::Success);
  }

  // permuting t -> T + 1 - t leaves the precision invariant
  const int n_times = 4;
  const SparseMat q = st_precision(qs, 0.8, n_times);
  const Eigen::MatrixXd dq = Eigen::MatrixXd(q);
  Eigen::MatrixXd perm = Eigen::MatrixXd::Zero(n * n_times, n * n_times);
  for (int t = 0; t < n_times; ++t)
    perm.block((n_times - 1 - t) * n, t * n, n, n) = Eigen::MatrixXd::Identity(n, n);
  CHECK((perm * dq * perm.transpose() - dq).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("marginal variance at each time equals the stationary inflation") {
  const Mesh mesh = build_mesh(Domain::rectangle(0, 0, 1, 1), 1.2, 0.0);
  const MaternParams params{0.8, 1.4, 1.0};
  const SparseMat qs = spde_precision(mesh, params);
  const double phi = 0.7;
  const int n = static_cast<int>(qs.rows());

  const Eigen::MatrixXd spatial_cov = Eigen::MatrixXd(qs).inverse();
  const Eigen::MatrixXd cov = Eigen::MatrixXd(st_precision(qs, phi, 3)).inverse();
  for (int t = 0; t < 3; ++t)
    CHECK((cov.block(t * n, t * n, n, n) - spatial_cov / (1.0 - phi * phi))
              .cwiseAbs()
              .maxCoeff() < 1e-8);
}
