#pragma once

#include <Eigen/SparseCholesky>
#include <memory>

#include "fusion/models.hpp"
#include "fusion/optim.hpp"

namespace fusion {

using SparseLLT = Eigen::SimplicialLLT<SparseMat>;

// Conditional Gaussian posterior of the latent vector. The Cholesky factor is
// retained so variance queries stay cheap after conditioning.
struct GaussianPosterior {
  SparseMat post_precision;
  Eigen::VectorXd mean;
  double log_marginal = 0.0;
  std::shared_ptr<SparseLLT> factor;

  // variance of a linear functional c^T latent
  double variance_of(const Eigen::SparseVector<double>& functional) const;
  // marginal variances of selected latent coordinates by per-column solves
  Eigen::VectorXd marginal_variances(const std::vector<int>& indices) const;
};

// Exact conditioning: posterior precision, mean, and log marginal likelihood.
GaussianPosterior condition(const GaussianSystem& system);

// Closed-form log marginal likelihood of the observation vector.
double log_marginal_likelihood(const GaussianSystem& system);

// Hot path for the optimizer: reuses the symbolic factorizations across
// hyperparameter values (the sparsity patterns do not change).
class MarginalLikelihoodEvaluator {
 public:
  double eval(const GaussianSystem& system);

 private:
  SparseLLT llt_prior_, llt_post_;
  bool analyzed_ = false;
};

// Exact re-conditioning after deleting observation rows, with the symbolic
// factorization shared across leave-out sets.
class Reconditioner {
 public:
  explicit Reconditioner(GaussianSystem system);

  struct Result {
    Eigen::VectorXd mean;           // full latent mean
    std::vector<double> variances;  // one per requested functional
    std::vector<double> means;      // functional means
  };
  // keep[r] == false removes row r exactly
  Result solve(const std::vector<bool>& keep,
               const std::vector<Eigen::SparseVector<double>>& functionals);

  const GaussianSystem& system() const { return system_; }

 private:
  GaussianSystem system_;
  SparseLLT llt_;
  bool analyzed_ = false;
};

// ---- hyperparameter estimation ----

struct FitOptions {
  OptimOptions optim;
  double mult_bias = 1.0;  // fusion: fixed multiplicative bias of this member
  double fixed_effect_precision = 1e-6;
};

struct FitResult {
  HyperPoint theta;
  double log_posterior = 0.0;  // log p(y | theta) + log p(theta), internal scale
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> trace;
};

// Empirical-Bayes point estimate: maximizes the sum of the log marginal
// likelihood and the log hyperprior over internal coordinates (log scale for
// sds and ranges, inverse hyperbolic tangent for AR coefficients).
FitResult fit_map(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                  const HyperPriorSet& priors, const HyperPoint& theta_init,
                  const FitOptions& opts = {});

// Hyperparameters at the internal-scale prior mode; the default optimizer start.
HyperPoint prior_mode_theta(const HyperPriorSet& priors);

// ---- model averaging over the multiplicative-bias grid ----

struct EnsembleMember {
  double mult_bias = 1.0;
  HyperPoint theta;
  double log_ml = 0.0;
  double log_prior = 0.0;
  double weight = 0.0;
  bool converged = false;
  int iterations = 0;
  std::shared_ptr<SystemAssembler> assembler;
  GaussianPosterior posterior;
};

struct PredictionSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

struct PosteriorEnsemble {
  ModelFamily family = ModelFamily::fusion;
  std::vector<EnsembleMember> members;

  // mixture mean / sd of a linear functional of the latent vector
  void mixture_of(const Eigen::SparseVector<double>& functional, double& mean,
                  double& sd) const;
  PredictionSummary predict(const std::vector<PredictionTarget>& targets) const;
  // weight-averaged value of a per-member scalar
  double average(const std::function<double(const EnsembleMember&)>& f) const;
  const EnsembleMember& top_member() const;
};

std::vector<double> default_alpha_grid();  // 0.5 to 1.5 in steps of 0.1

struct BmaOptions {
  std::vector<double> alpha_grid = default_alpha_grid();
  std::vector<double> alpha_prior_weights;  // empty = uniform
  FitOptions fit;
  int threads = 1;
  bool theta_grid = false;  // axis-wise spread around the mode, reweighted like the members
  double theta_grid_step = 1.0;  // internal-scale offset used by theta_grid
};

// Fits the fusion model on the bias grid and combines members by their
// conditional marginal likelihoods (log-sum-exp normalized).
PosteriorEnsemble bma_fit(const ObservationSet& data, const Mesh& mesh,
                          const HyperPriorSet& priors, const BmaOptions& opts = {});

// Benchmarks: a single-member ensemble for the other families.
PosteriorEnsemble single_fit(ModelFamily family, const ObservationSet& data, const Mesh& mesh,
                             const HyperPriorSet& priors, const FitOptions& opts = {},
                             bool theta_grid = false, double theta_grid_step = 1.0);

// Family dispatch: bias-grid averaging for fusion, a single fit otherwise.
PosteriorEnsemble fit_ensemble(ModelFamily family, const ObservationSet& data,
                               const Mesh& mesh, const HyperPriorSet& priors,
                               const OptimOptions& optim = {},
                               const std::vector<double>& alpha_grid = default_alpha_grid(),
                               int threads = 1, bool theta_grid = false);

// BMA weights from log marginal likelihoods and log prior weights.
std::vector<double> bma_weights(const std::vector<double>& log_ml,
                                const std::vector<double>& log_prior);

PredictionSummary bma_predict(const PosteriorEnsemble& ensemble,
                              const std::vector<PredictionTarget>& targets);

// Calibrated gridded values (observed - estimated additive bias) / average
// multiplicative bias, for every non-missing grid observation.
struct CalibratedValue {
  int cell = 0;
  int t = 1;
  double observed = 0.0;
  double bias_mean = 0.0;
  double calibrated = 0.0;
};
std::vector<CalibratedValue> calibrate_grid(const PosteriorEnsemble& ensemble,
                                            const ObservationSet& data);

}  // namespace fusion
