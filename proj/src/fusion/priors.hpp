#pragma once

#include <vector>

namespace fusion {

// Penalized-complexity prior stated through a tail probability:
//   sd_upper:    P(sd > threshold) = prob
//   range_lower: P(range < threshold) = prob
enum class PCKind { sd_upper, range_lower };

struct PCPriorSpec {
  PCKind kind = PCKind::sd_upper;
  double threshold = 1.0;
  double prob = 0.5;

  void validate() const;
  double rate() const;  // the exponential rate implied by (threshold, prob)
};

// log density of an sd under its PC prior: exponential with rate -ln(prob)/threshold
double pc_sd_logpdf(double sd, const PCPriorSpec& spec);

// log density of a range under its PC prior in two dimensions:
// pi(r) = lambda r^-2 exp(-lambda / r), lambda = -ln(prob) * threshold
double pc_range_logpdf(double range, const PCPriorSpec& spec);

enum class ArPriorKind { uniform, pc_correlation };

struct ArPriorSpec {
  ArPriorKind kind = ArPriorKind::uniform;
  // pc_correlation mode (experimental): P(ar_coef > threshold) = prob,
  // base model ar_coef = 1
  double threshold = 0.5;
  double prob = 0.5;
};

double ar_logprior(double ar_coef, const ArPriorSpec& spec = {});

// log weights for the multiplicative-bias grid; uniform or explicit positive
// weights, normalized to sum to one.
std::vector<double> alpha1_log_prior(const std::vector<double>& grid,
                                     const std::vector<double>& explicit_weights = {});

// Complete prior specification for the hyperparameters of one model family.
// For the regression-calibration family the two field slots hold the priors
// of the additive- and multiplicative-coefficient fields and noise_grid is
// unused.
struct HyperPriorSet {
  PCPriorSpec noise_stations;  // station measurement noise sd
  PCPriorSpec noise_grid;      // gridded-source measurement noise sd
  PCPriorSpec latent_sd;       // latent field marginal sd
  PCPriorSpec latent_range;
  PCPriorSpec bias_sd;         // error-field marginal sd
  PCPriorSpec bias_range;
  ArPriorSpec ar_prior;
  double fixed_effect_precision = 1e-6;

  void validate() const;
};

}  // namespace fusion
