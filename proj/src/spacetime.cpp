#include "fusion/spacetime.hpp"

#include <cmath>

#include "fusion/errors.hpp"

namespace fusion {

void STFieldParams::validate() const {
  spatial.validate();
  require(std::abs(ar_coef) < 1.0, "autoregressive coefficient must lie in (-1, 1)");
  require(n_times >= 1, "need at least one time point");
}

Eigen::MatrixXd ar1_precision(double ar_coef, int n_times) {
  require(std::abs(ar_coef) < 1.0, "autoregressive coefficient must lie in (-1, 1)");
  require(n_times >= 1, "need at least one time point");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_times, n_times);
  if (n_times == 1) {
    m(0, 0) = 1.0 - ar_coef * ar_coef;
    return m;
  }
  for (int t = 0; t < n_times; ++t)
    m(t, t) = (t == 0 || t == n_times - 1) ? 1.0 : 1.0 + ar_coef * ar_coef;
  for (int t = 0; t + 1 < n_times; ++t) {
    m(t, t + 1) = -ar_coef;
    m(t + 1, t) = -ar_coef;
  }
  return m;
}

SparseMat st_precision(const SparseMat& spatial_precision, double ar_coef, int n_times) {
  const Eigen::MatrixXd tm = ar1_precision(ar_coef, n_times);
  const int n = static_cast<int>(spatial_precision.rows());
  require(spatial_precision.cols() == n, "spatial precision must be square");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(spatial_precision.nonZeros()) * (3 * n_times - 2));
  for (int a = 0; a < n_times; ++a)
    for (int b = std::max(0, a - 1); b <= std::min(n_times - 1, a + 1); ++b) {
      const double w = tm(a, b);
      for (int k = 0; k < spatial_precision.outerSize(); ++k)
        for (SparseMat::InnerIterator it(spatial_precision, k); it; ++it)
          trips.emplace_back(a * n + static_cast<int>(it.row()),
                             b * n + static_cast<int>(it.col()), w * it.value());
    }
  SparseMat q(n * n_times, n * n_times);
  q.setFromTriplets(trips.begin(), trips.end());
  return q;
}

}  // namespace fusion
