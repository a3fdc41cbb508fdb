#pragma once

#include "fusion/spde.hpp"

namespace fusion {

// Space-time field: first-order autoregression in time, Matérn innovations in
// space, initialized at the stationary distribution.
struct STFieldParams {
  MaternParams spatial;
  double ar_coef = 0.0;  // |ar_coef| < 1
  int n_times = 1;

  void validate() const;
};

// Joint precision of the space-time field: the T x T stationary AR(1)
// precision Kronecker the spatial precision. Time-major block ordering:
// latent index = t * n_space + vertex, t in [0, T).
SparseMat st_precision(const SparseMat& spatial_precision, double ar_coef, int n_times);

// Dense stationary AR(1) precision (unit innovation variance); exposed for tests.
Eigen::MatrixXd ar1_precision(double ar_coef, int n_times);

}  // namespace fusion
