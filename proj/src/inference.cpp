#include "fusion/inference.hpp"

#include <cmath>
#include <limits>

#include "fusion/errors.hpp"
#include "fusion/parallel.hpp"

namespace fusion {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_det_from_llt(const SparseLLT& llt) {
  // lower CSC factor stores the diagonal first in each column
  const SparseMat& L = llt.matrixL().nestedExpression();
  double s = 0.0;
  for (int k = 0; k < L.outerSize(); ++k) {
    SparseMat::InnerIterator it(L, k);
    s += std::log(it.value());
  }
  return 2.0 * s;
}

[[noreturn]] void report_indefinite(const SparseMat& q, const char* what) {
  Eigen::SimplicialLDLT<SparseMat> ldlt(q);
  if (ldlt.info() == Eigen::Success) {
    const auto& d = ldlt.vectorD();
    for (int i = 0; i < d.size(); ++i)
      if (!(d[i] > 0.0)) {
        const int original = ldlt.permutationPinv().indices()[i];
        throw numeric_error(std::string(what) + ": matrix is not positive definite (pivot " +
                            std::to_string(i) + ", coordinate " + std::to_string(original) +
                            ", value " + std::to_string(d[i]) + ")");
      }
  }
  throw numeric_error(std::string(what) + ": sparse Cholesky factorization failed");
}

SparseMat posterior_precision(const GaussianSystem& sys) {
  if (sys.n_rows() == 0) return sys.prior_precision;
  SparseMat atna = sys.obs_matrix.transpose() * sys.noise_precision.asDiagonal() *
                   sys.obs_matrix;
  return sys.prior_precision + atna;
}

Eigen::VectorXd information_vector(const GaussianSystem& sys) {
  if (sys.n_rows() == 0) return Eigen::VectorXd::Zero(sys.layout.dim);
  return sys.obs_matrix.transpose() *
         (sys.noise_precision.array() * sys.response.array()).matrix();
}

double log_marginal_from_parts(const GaussianSystem& sys, double logdet_prior,
                               double logdet_post, const Eigen::VectorXd& b,
                               const Eigen::VectorXd& mean) {
  const int m = sys.n_rows();
  double logdet_noise = 0.0;
  double quad = 0.0;
  for (int i = 0; i < m; ++i) {
    logdet_noise += std::log(sys.noise_precision[i]);
    quad += sys.noise_precision[i] * sys.response[i] * sys.response[i];
  }
  return 0.5 * (logdet_prior + logdet_noise - logdet_post) - 0.5 * (quad - b.dot(mean)) -
         0.5 * m * std::log(2.0 * M_PI);
}

Eigen::VectorXd refined_solve(const SparseLLT& llt, const SparseMat& q,
                              const Eigen::VectorXd& b) {
  Eigen::VectorXd x = llt.solve(b);
  const double bnorm = b.norm();
  if (bnorm > 0.0) {
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd r = b - q * x;
      if (r.norm() <= 1e-10 * bnorm) break;
      x += llt.solve(r);
    }
  }
  return x;
}

}  // namespace

double GaussianPosterior::variance_of(const Eigen::SparseVector<double>& functional) const {
  require(factor != nullptr, "posterior has no factorization");
  require(functional.size() == post_precision.rows(), "functional dimension mismatch");
  const Eigen::VectorXd dense = functional;
  const Eigen::VectorXd x = factor->solve(dense);
  return dense.dot(x);
}

Eigen::VectorXd GaussianPosterior::marginal_variances(const std::vector<int>& indices) const {
  require(factor != nullptr, "posterior has no factorization");
  Eigen::VectorXd out(indices.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(post_precision.rows());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int i = indices[k];
    require(i >= 0 && i < post_precision.rows(), "marginal variance index out of range");
    e[i] = 1.0;
    out[k] = factor->solve(e)[i];
    e[i] = 0.0;
  }
  return out;
}

GaussianPosterior condition(const GaussianSystem& sys) {
  sys.validate();
  GaussianPosterior post;
  post.post_precision = posterior_precision(sys);
  post.factor = std::make_shared<SparseLLT>();
  post.factor->compute(post.post_precision);
  if (post.factor->info() != Eigen::Success)
    report_indefinite(post.post_precision, "condition");

  const Eigen::VectorXd b = information_vector(sys);
  post.mean = refined_solve(*post.factor, post.post_precision, b);

  SparseLLT llt_prior(sys.prior_precision);
  if (llt_prior.info() != Eigen::Success)
    report_indefinite(sys.prior_precision, "condition (prior)");
  post.log_marginal = log_marginal_from_parts(sys, log_det_from_llt(llt_prior),
                                              log_det_from_llt(*post.factor), b, post.mean);
  return post;
}

double log_marginal_likelihood(const GaussianSystem& sys) {
  MarginalLikelihoodEvaluator ev;
  return ev.eval(sys);
}

double MarginalLikelihoodEvaluator::eval(const GaussianSystem& sys) {
  sys.validate();
  const SparseMat q_post = posterior_precision(sys);
  if (!analyzed_) {
    llt_prior_.analyzePattern(sys.prior_precision);
    llt_post_.analyzePattern(q_post);
    analyzed_ = true;
  }
  llt_prior_.factorize(sys.prior_precision);
  if (llt_prior_.info() != Eigen::Success)
    report_indefinite(sys.prior_precision, "log_marginal_likelihood (prior)");
  llt_post_.factorize(q_post);
  if (llt_post_.info() != Eigen::Success)
    report_indefinite(q_post, "log_marginal_likelihood");
  const Eigen::VectorXd b = information_vector(sys);
  const Eigen::VectorXd mean = llt_post_.solve(b);
  return log_marginal_from_parts(sys, log_det_from_llt(llt_prior_), log_det_from_llt(llt_post_),
                                 b, mean);
}

Reconditioner::Reconditioner(GaussianSystem system) : system_(std::move(system)) {
  system_.validate();
}

Reconditioner::Result Reconditioner::solve(
    const std::vector<bool>& keep,
    const std::vector<Eigen::SparseVector<double>>& functionals) {
  require(static_cast<int>(keep.size()) == system_.n_rows(),
          "recondition mask length mismatch");
  Eigen::VectorXd w(system_.n_rows());
  Eigen::VectorXd wy(system_.n_rows());
  for (int r = 0; r < system_.n_rows(); ++r) {
    w[r] = keep[r] ? system_.noise_precision[r] : 0.0;
    wy[r] = w[r] * system_.response[r];
  }
  // masked rows keep their structural entries, so the pattern is reusable
  SparseMat q = system_.prior_precision +
                SparseMat(system_.obs_matrix.transpose() * w.asDiagonal() * system_.obs_matrix);
  if (!analyzed_) {
    llt_.analyzePattern(q);
    analyzed_ = true;
  }
  llt_.factorize(q);
  if (llt_.info() != Eigen::Success) report_indefinite(q, "recondition");

  Result res;
  const Eigen::VectorXd b = system_.obs_matrix.transpose() * wy;
  res.mean = refined_solve(llt_, q, b);
  res.means.reserve(functionals.size());
  res.variances.reserve(functionals.size());
  for (const auto& c : functionals) {
    const Eigen::VectorXd dense = c;
    const Eigen::VectorXd x = llt_.solve(dense);
    res.means.push_back(dense.dot(res.mean));
    res.variances.push_back(dense.dot(x));
  }
  return res;
}

// ---- hyperparameter estimation ----

namespace {

enum class Par {
  noise_stations,
  noise_grid,
  latent_sd,
  latent_range,
  latent_ar,
  bias_sd,
  bias_range,
  bias_ar
};

struct ParamMap {
  std::vector<Par> pars;

  static ParamMap make(ModelFamily family, int n_times) {
    ParamMap pm;
    const bool time = n_times > 1;
    pm.pars = {Par::noise_stations, Par::latent_sd, Par::latent_range};
    if (time) pm.pars.push_back(Par::latent_ar);
    if (family == ModelFamily::fusion) pm.pars.insert(pm.pars.begin() + 1, Par::noise_grid);
    if (family != ModelFamily::stations_only) {
      pm.pars.push_back(Par::bias_sd);
      pm.pars.push_back(Par::bias_range);
      if (time) pm.pars.push_back(Par::bias_ar);
    }
    return pm;
  }

  int size() const { return static_cast<int>(pars.size()); }

  static double get(const HyperPoint& th, Par p) {
    switch (p) {
      case Par::noise_stations: return th.noise_sd_stations;
      case Par::noise_grid: return th.noise_sd_grid;
      case Par::latent_sd: return th.latent_sd;
      case Par::latent_range: return th.latent_range;
      case Par::latent_ar: return th.latent_ar;
      case Par::bias_sd: return th.bias_sd;
      case Par::bias_range: return th.bias_range;
      case Par::bias_ar: return th.bias_ar;
    }
    return 0.0;
  }

  static void set(HyperPoint& th, Par p, double v) {
    switch (p) {
      case Par::noise_stations: th.noise_sd_stations = v; break;
      case Par::noise_grid: th.noise_sd_grid = v; break;
      case Par::latent_sd: th.latent_sd = v; break;
      case Par::latent_range: th.latent_range = v; break;
      case Par::latent_ar: th.latent_ar = v; break;
      case Par::bias_sd: th.bias_sd = v; break;
      case Par::bias_range: th.bias_range = v; break;
      case Par::bias_ar: th.bias_ar = v; break;
    }
  }

  static bool is_ar(Par p) { return p == Par::latent_ar || p == Par::bias_ar; }

  Eigen::VectorXd to_internal(const HyperPoint& th) const {
    Eigen::VectorXd u(size());
    for (int i = 0; i < size(); ++i) {
      const double v = get(th, pars[i]);
      u[i] = is_ar(pars[i]) ? std::atanh(v) : std::log(v);
    }
    return u;
  }

  HyperPoint to_theta(const Eigen::VectorXd& u, const HyperPoint& base) const {
    HyperPoint th = base;
    for (int i = 0; i < size(); ++i) {
      const double ui = std::clamp(u[i], -40.0, 40.0);
      set(th, pars[i], is_ar(pars[i]) ? std::tanh(ui) : std::exp(ui));
    }
    return th;
  }

  // hyperprior density in the internal coordinates (change-of-variables included)
  double log_prior_internal(const HyperPoint& th, const HyperPriorSet& priors) const {
    double lp = 0.0;
    for (Par p : pars) {
      const double v = get(th, p);
      switch (p) {
        case Par::noise_stations:
          lp += pc_sd_logpdf(v, priors.noise_stations) + std::log(v);
          break;
        case Par::noise_grid:
          lp += pc_sd_logpdf(v, priors.noise_grid) + std::log(v);
          break;
        case Par::latent_sd:
          lp += pc_sd_logpdf(v, priors.latent_sd) + std::log(v);
          break;
        case Par::latent_range:
          lp += pc_range_logpdf(v, priors.latent_range) + std::log(v);
          break;
        case Par::bias_sd:
          lp += pc_sd_logpdf(v, priors.bias_sd) + std::log(v);
          break;
        case Par::bias_range:
          lp += pc_range_logpdf(v, priors.bias_range) + std::log(v);
          break;
        case Par::latent_ar:
        case Par::bias_ar:
          lp += ar_logprior(v, priors.ar_prior) + std::log1p(-v * v);
          break;
      }
    }
    return lp;
  }
};

}  // namespace

HyperPoint prior_mode_theta(const HyperPriorSet& priors) {
  priors.validate();
  HyperPoint th;
  // modes of the internal-scale prior densities
  th.noise_sd_stations = 1.0 / priors.noise_stations.rate();
  th.noise_sd_grid = 1.0 / priors.noise_grid.rate();
  th.latent_sd = 1.0 / priors.latent_sd.rate();
  th.latent_range = priors.latent_range.rate();
  th.bias_sd = 1.0 / priors.bias_sd.rate();
  th.bias_range = priors.bias_range.rate();
  th.latent_ar = 0.0;
  th.bias_ar = 0.0;
  return th;
}

FitResult fit_map(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                  const HyperPriorSet& priors, const HyperPoint& theta_init,
                  const FitOptions& opts) {
  priors.validate();
  theta_init.validate(family);
  SystemAssembler assembler(family, data, mesh, opts.fixed_effect_precision, opts.mult_bias);
  const ParamMap pm = ParamMap::make(family, data.n_times);
  MarginalLikelihoodEvaluator evaluator;

  const auto objective = [&](const Eigen::VectorXd& u) -> double {
    const HyperPoint th = pm.to_theta(u, theta_init);
    try {
      const double lp = pm.log_prior_internal(th, priors);
      const double lml = evaluator.eval(assembler.assemble(th));
      const double v = -(lml + lp);
      return std::isfinite(v) ? v : kInf;
    } catch (const numeric_error&) {
      return kInf;
    } catch (const validation_error&) {
      return kInf;
    }
  };

  const OptimResult opt = nelder_mead(objective, pm.to_internal(theta_init), opts.optim);
  if (!std::isfinite(opt.value))
    throw numeric_error("fit_map: hyperparameter search failed (repeated factorization failure)");

  FitResult res;
  res.theta = pm.to_theta(opt.x, theta_init);
  res.log_posterior = -opt.value;
  res.converged = opt.converged;
  res.iterations = opt.iterations;
  res.evaluations = opt.evaluations;
  res.trace = opt.trace;
  return res;
}

// ---- model averaging ----

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(0.5 + 0.1 * i);
  return g;
}

std::vector<double> bma_weights(const std::vector<double>& log_ml,
                                const std::vector<double>& log_prior) {
  require(!log_ml.empty() && log_ml.size() == log_prior.size(),
          "bma_weights: inconsistent inputs");
  std::vector<double> v(log_ml.size());
  double vmax = -kInf;
  for (std::size_t k = 0; k < v.size(); ++k) {
    v[k] = log_ml[k] + log_prior[k];
    vmax = std::max(vmax, v[k]);
  }
  require(std::isfinite(vmax), "bma_weights: no finite member");
  double total = 0.0;
  for (double& w : v) {
    w = std::exp(w - vmax);
    total += w;
  }
  for (double& w : v) w /= total;
  return v;
}

void PosteriorEnsemble::mixture_of(const Eigen::SparseVector<double>& functional,
                                   double& mean, double& sd) const {
  require(!members.empty(), "empty ensemble");
  double m1 = 0.0, m2 = 0.0;
  for (const auto& mem : members) {
    const Eigen::VectorXd dense = functional;
    const double mk = dense.dot(mem.posterior.mean);
    const double vk = mem.posterior.variance_of(functional);
    m1 += mem.weight * mk;
    m2 += mem.weight * (vk + mk * mk);
  }
  mean = m1;
  sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
}

PredictionSummary PosteriorEnsemble::predict(
    const std::vector<PredictionTarget>& targets) const {
  require(!members.empty(), "empty ensemble");
  PredictionSummary out;
  out.mean.resize(targets.size());
  out.sd.resize(targets.size());
  // the layout is shared across members, so functionals are built once
  const SystemAssembler& asm0 = *members.front().assembler;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Eigen::SparseVector<double> c = asm0.target_functional(targets[i]);
    mixture_of(c, out.mean[static_cast<int>(i)], out.sd[static_cast<int>(i)]);
  }
  return out;
}

double PosteriorEnsemble::average(
    const std::function<double(const EnsembleMember&)>& f) const {
  require(!members.empty(), "empty ensemble");
  double s = 0.0;
  for (const auto& mem : members) s += mem.weight * f(mem);
  return s;
}

const EnsembleMember& PosteriorEnsemble::top_member() const {
  require(!members.empty(), "empty ensemble");
  const EnsembleMember* best = &members.front();
  for (const auto& mem : members)
    if (mem.weight > best->weight) best = &mem;
  return *best;
}

namespace {

// axis-wise spread around the fitted mode, reweighted like grid members
std::vector<EnsembleMember> expand_theta_grid(const EnsembleMember& mode,
                                              const ObservationSet& data, const Mesh& mesh,
                                              ModelFamily family, double fe_precision,
                                              double step) {
  const ParamMap pm = ParamMap::make(family, data.n_times);
  const Eigen::VectorXd u0 = pm.to_internal(mode.theta);
  std::vector<EnsembleMember> out;
  for (int axis = 0; axis < pm.size(); ++axis)
    for (double dir : {-1.0, 1.0}) {
      Eigen::VectorXd u = u0;
      u[axis] += dir * step;
      EnsembleMember mem = mode;
      mem.theta = pm.to_theta(u, mode.theta);
      mem.assembler = std::make_shared<SystemAssembler>(family, data, mesh, fe_precision,
                                                        mode.mult_bias);
      mem.posterior = condition(mem.assembler->assemble(mem.theta));
      mem.log_ml = mem.posterior.log_marginal;
      out.push_back(std::move(mem));
    }
  return out;
}

}  // namespace

PosteriorEnsemble bma_fit(const ObservationSet& data, const Mesh& mesh,
                          const HyperPriorSet& priors, const BmaOptions& opts) {
  const std::vector<double> log_prior =
      alpha1_log_prior(opts.alpha_grid, opts.alpha_prior_weights);

  // pilot fit at the grid value closest to no multiplicative bias; all members
  // then start from its estimate, which keeps results independent of threading
  std::size_t pilot = 0;
  for (std::size_t k = 1; k < opts.alpha_grid.size(); ++k)
    if (std::abs(opts.alpha_grid[k] - 1.0) < std::abs(opts.alpha_grid[pilot] - 1.0)) pilot = k;
  FitOptions pilot_opts = opts.fit;
  pilot_opts.mult_bias = opts.alpha_grid[pilot];
  const HyperPoint init = prior_mode_theta(priors);
  const FitResult pilot_fit =
      fit_map(ModelFamily::fusion, data, mesh, priors, init, pilot_opts);

  PosteriorEnsemble ens;
  ens.family = ModelFamily::fusion;
  ens.members.resize(opts.alpha_grid.size());
  std::vector<std::vector<EnsembleMember>> extra(opts.alpha_grid.size());

  parallel_for(static_cast<int>(opts.alpha_grid.size()), opts.threads, [&](int k) {
    FitOptions fo = opts.fit;
    fo.mult_bias = opts.alpha_grid[k];
    const FitResult fr =
        fit_map(ModelFamily::fusion, data, mesh, priors, pilot_fit.theta, fo);
    EnsembleMember mem;
    mem.mult_bias = opts.alpha_grid[k];
    mem.theta = fr.theta;
    mem.converged = fr.converged;
    mem.iterations = fr.iterations;
    mem.log_prior = log_prior[k];
    mem.assembler = std::make_shared<SystemAssembler>(ModelFamily::fusion, data, mesh,
                                                      fo.fixed_effect_precision, fo.mult_bias);
    mem.posterior = condition(mem.assembler->assemble(mem.theta));
    mem.log_ml = mem.posterior.log_marginal;
    if (opts.theta_grid)
      extra[k] = expand_theta_grid(mem, data, mesh, ModelFamily::fusion,
                                   fo.fixed_effect_precision, opts.theta_grid_step);
    ens.members[k] = std::move(mem);
  });

  if (opts.theta_grid)
    for (auto& block : extra)
      for (auto& mem : block) ens.members.push_back(std::move(mem));

  std::vector<double> lml, lpr;
  for (const auto& mem : ens.members) {
    lml.push_back(mem.log_ml);
    lpr.push_back(mem.log_prior);
  }
  const std::vector<double> w = bma_weights(lml, lpr);
  for (std::size_t k = 0; k < ens.members.size(); ++k) ens.members[k].weight = w[k];
  return ens;
}

PosteriorEnsemble single_fit(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                             const HyperPriorSet& priors, const FitOptions& opts,
                             bool theta_grid, double theta_grid_step) {
  const FitResult fr = fit_map(family, data, mesh, priors, prior_mode_theta(priors), opts);
  PosteriorEnsemble ens;
  ens.family = family;
  EnsembleMember mem;
  mem.mult_bias = 1.0;
  mem.theta = fr.theta;
  mem.converged = fr.converged;
  mem.iterations = fr.iterations;
  mem.log_prior = 0.0;
  mem.assembler = std::make_shared<SystemAssembler>(family, data, mesh,
                                                    opts.fixed_effect_precision, 1.0);
  mem.posterior = condition(mem.assembler->assemble(mem.theta));
  mem.log_ml = mem.posterior.log_marginal;
  ens.members.push_back(std::move(mem));
  if (theta_grid) {
    auto extra = expand_theta_grid(ens.members.front(), data, mesh, family,
                                   opts.fixed_effect_precision, theta_grid_step);
    for (auto& m : extra) ens.members.push_back(std::move(m));
  }
  std::vector<double> lml, lpr;
  for (const auto& mem2 : ens.members) {
    lml.push_back(mem2.log_ml);
    lpr.push_back(0.0);
  }
  const std::vector<double> w = bma_weights(lml, lpr);
  for (std::size_t k = 0; k < ens.members.size(); ++k) ens.members[k].weight = w[k];
  return ens;
}

PosteriorEnsemble fit_ensemble(ModelFamily family, const ObservationSet& data,
                               const Mesh& mesh, const HyperPriorSet& priors,
                               const OptimOptions& optim,
                               const std::vector<double>& alpha_grid, int threads,
                               bool theta_grid) {
  FitOptions fo;
  fo.optim = optim;
  fo.fixed_effect_precision = priors.fixed_effect_precision;
  if (family == ModelFamily::fusion) {
    BmaOptions bo;
    bo.alpha_grid = alpha_grid;
    bo.fit = fo;
    bo.threads = threads;
    bo.theta_grid = theta_grid;
    return bma_fit(data, mesh, priors, bo);
  }
  return single_fit(family, data, mesh, priors, fo, theta_grid);
}

PredictionSummary bma_predict(const PosteriorEnsemble& ensemble,
                              const std::vector<PredictionTarget>& targets) {
  return ensemble.predict(targets);
}

std::vector<CalibratedValue> calibrate_grid(const PosteriorEnsemble& ensemble,
                                            const ObservationSet& data) {
  require(ensemble.family == ModelFamily::fusion,
          "calibrate_grid applies to the fusion model only");
  require(!ensemble.members.empty(), "empty ensemble");
  const double avg_bias =
      ensemble.average([](const EnsembleMember& m) { return m.mult_bias; });
  if (std::abs(avg_bias) < 1e-6)
    throw numeric_error("calibrate_grid: averaged multiplicative bias is numerically zero");

  const SystemAssembler& asm0 = *ensemble.members.front().assembler;
  std::vector<CalibratedValue> out;
  for (int j = 0; j < data.grid.n_locations(); ++j)
    for (int t = 1; t <= data.n_times; ++t) {
      if (!data.grid.observed(j, t)) continue;
      const Eigen::SparseVector<double> c = asm0.bias_functional(j, t);
      double bias_mean = 0.0, bias_sd = 0.0;
      ensemble.mixture_of(c, bias_mean, bias_sd);
      CalibratedValue v;
      v.cell = j;
      v.t = t;
      v.observed = data.grid.value(j, t);
      v.bias_mean = bias_mean;
      v.calibrated = (v.observed - bias_mean) / avg_bias;
      out.push_back(v);
    }
  return out;
}

}  // namespace fusion
