#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace fusion {

struct OptimOptions {
  int max_iters = 400;      // per simplex run
  double f_tol = 1e-6;      // absolute spread tolerance on simplex values
  int restarts = 3;         // additional runs from jittered copies of the best point
  double init_step = 0.25;  // initial simplex edge length
  std::uint64_t jitter_seed = 971;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;   // total across runs
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // best value after each run
};

// Derivative-free simplex minimizer (Nelder-Mead). Deterministic; ties are
// broken in favor of the first point found.
OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                        const Eigen::VectorXd& x0, const OptimOptions& opts = {});

}  // namespace fusion
