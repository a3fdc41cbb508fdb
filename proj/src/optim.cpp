#include "fusion/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fusion/errors.hpp"
#include "fusion/rng.hpp"

namespace fusion {

namespace {

struct Simplex {
  std::vector<Eigen::VectorXd> x;
  std::vector<double> f;

  void sort() {
    // stable so that earlier points win ties
    std::vector<int> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
    std::vector<Eigen::VectorXd> xs(x.size());
    std::vector<double> fs(f.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      xs[i] = x[order[i]];
      fs[i] = f[order[i]];
    }
    x.swap(xs);
    f.swap(fs);
  }
};

double safe_eval(const std::function<double(const Eigen::VectorXd&)>& fn,
                 const Eigen::VectorXd& x, int& evals) {
  ++evals;
  const double v = fn(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::max();
}

// one Nelder-Mead run; returns true if the simplex spread met f_tol
bool run_simplex(const std::function<double(const Eigen::VectorXd&)>& fn, Simplex& s,
                 const OptimOptions& opts, int& iters, int& evals) {
  const int n = static_cast<int>(s.x[0].size());
  for (int it = 0; it < opts.max_iters; ++it) {
    s.sort();
    if (std::abs(s.f.back() - s.f.front()) < opts.f_tol) return true;
    ++iters;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += s.x[i];
    centroid /= n;

    const Eigen::VectorXd& worst = s.x[n];
    const Eigen::VectorXd reflected = centroid + (centroid - worst);
    const double fr = safe_eval(fn, reflected, evals);

    if (fr < s.f[0]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - worst);
      const double fe = safe_eval(fn, expanded, evals);
      if (fe < fr) {
        s.x[n] = expanded;
        s.f[n] = fe;
      } else {
        s.x[n] = reflected;
        s.f[n] = fr;
      }
      continue;
    }
    if (fr < s.f[n - 1]) {
      s.x[n] = reflected;
      s.f[n] = fr;
      continue;
    }
    const bool outside = fr < s.f[n];
    const Eigen::VectorXd contracted =
        outside ? centroid + 0.5 * (reflected - centroid) : centroid + 0.5 * (worst - centroid);
    const double fc = safe_eval(fn, contracted, evals);
    if (fc < std::min(fr, s.f[n])) {
      s.x[n] = contracted;
      s.f[n] = fc;
      continue;
    }
    // shrink towards the best vertex
    for (int i = 1; i <= n; ++i) {
      s.x[i] = s.x[0] + 0.5 * (s.x[i] - s.x[0]);
      s.f[i] = safe_eval(fn, s.x[i], evals);
    }
  }
  s.sort();
  return std::abs(s.f.back() - s.f.front()) < opts.f_tol;
}

Simplex make_simplex(const std::function<double(const Eigen::VectorXd&)>& fn,
                     const Eigen::VectorXd& x0, double step, int& evals) {
  const int n = static_cast<int>(x0.size());
  Simplex s;
  s.x.resize(n + 1);
  s.f.resize(n + 1);
  s.x[0] = x0;
  s.f[0] = safe_eval(fn, x0, evals);
  for (int i = 0; i < n; ++i) {
    s.x[i + 1] = x0;
    s.x[i + 1][i] += step;
    s.f[i + 1] = safe_eval(fn, s.x[i + 1], evals);
  }
  return s;
}

}  // namespace

OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                        const Eigen::VectorXd& x0, const OptimOptions& opts) {
  require(x0.size() > 0, "nelder_mead: empty parameter vector");
  OptimResult res;
  res.x = x0;
  res.value = std::numeric_limits<double>::max();

  Rng jitter(opts.jitter_seed);
  bool any_converged = false;
  for (int run = 0; run <= opts.restarts; ++run) {
    Eigen::VectorXd start = run == 0 ? x0 : res.x;
    if (run > 0)
      for (int i = 0; i < start.size(); ++i)
        start[i] += opts.init_step * (jitter.uniform() - 0.5);
    Simplex s = make_simplex(objective, start, opts.init_step, res.evaluations);
    const bool ok = run_simplex(objective, s, opts, res.iterations, res.evaluations);
    any_converged = any_converged || ok;
    if (s.f[0] < res.value) {
      res.value = s.f[0];
      res.x = s.x[0];
    }
  }
  res.converged = any_converged && res.value < std::numeric_limits<double>::max();
  res.trace.push_back(res.value);
  return res;
}

}  // namespace fusion
