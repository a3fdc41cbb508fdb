#include "fusion/priors.hpp"

#include <cmath>
#include <string>

#include "fusion/errors.hpp"

namespace fusion {

void PCPriorSpec::validate() const {
  require(threshold > 0.0 && std::isfinite(threshold), "PC prior threshold must be positive");
  require(prob > 0.0 && prob < 1.0, "PC prior probability must lie in (0, 1)");
}

double PCPriorSpec::rate() const {
  validate();
  // sd_upper:    rate on the sd itself
  // range_lower: rate on range^(-d/2) with d = 2
  return kind == PCKind::sd_upper ? -std::log(prob) / threshold : -std::log(prob) * threshold;
}

double pc_sd_logpdf(double sd, const PCPriorSpec& spec) {
  spec.validate();
  require(spec.kind == PCKind::sd_upper, "pc_sd_logpdf: spec is not an sd prior");
  require(sd > 0.0 || sd == 0.0, "pc_sd_logpdf: sd must be non-negative");
  if (sd < 0.0 || !std::isfinite(sd)) throw validation_error("pc_sd_logpdf: bad sd");
  const double lambda = spec.rate();
  return std::log(lambda) - lambda * sd;
}

double pc_range_logpdf(double range, const PCPriorSpec& spec) {
  spec.validate();
  require(spec.kind == PCKind::range_lower, "pc_range_logpdf: spec is not a range prior");
  require(range > 0.0 && std::isfinite(range), "pc_range_logpdf: range must be positive");
  const double lambda = spec.rate();
  return std::log(lambda) - 2.0 * std::log(range) - lambda / range;
}

double ar_logprior(double ar_coef, const ArPriorSpec& spec) {
  require(std::abs(ar_coef) < 1.0, "ar_logprior: coefficient must lie in (-1, 1)");
  if (spec.kind == ArPriorKind::uniform) return -std::log(2.0);
  // experimental PC prior for correlation with base model at 1:
  // distance scale d(c) = sqrt(1 - c), exponential on d truncated to (0, sqrt(2))
  require(spec.threshold > -1.0 && spec.threshold < 1.0,
          "ar_logprior: pc threshold must lie in (-1, 1)");
  require(spec.prob > 0.0 && spec.prob < 1.0, "ar_logprior: pc prob must lie in (0, 1)");
  const double d = std::sqrt(1.0 - ar_coef);
  const double d0 = std::sqrt(1.0 - spec.threshold);
  const double lambda = -std::log(spec.prob) / d0;
  const double log_norm = std::log1p(-std::exp(-lambda * std::sqrt(2.0)));
  // density of c: lambda exp(-lambda d) / norm * |dd/dc|, dd/dc = -1/(2 d)
  return std::log(lambda) - lambda * d - log_norm - std::log(2.0 * d);
}

std::vector<double> alpha1_log_prior(const std::vector<double>& grid,
                                     const std::vector<double>& explicit_weights) {
  require(!grid.empty(), "alpha1_log_prior: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    require(grid[i] > grid[i - 1], "alpha1_log_prior: grid must be strictly increasing");
  std::vector<double> logw(grid.size());
  if (explicit_weights.empty()) {
    const double v = -std::log(static_cast<double>(grid.size()));
    for (double& w : logw) w = v;
    return logw;
  }
  require(explicit_weights.size() == grid.size(),
          "alpha1_log_prior: weight count does not match grid");
  double total = 0.0;
  for (double w : explicit_weights) {
    require(w > 0.0 && std::isfinite(w), "alpha1_log_prior: weights must be positive");
    total += w;
  }
  for (std::size_t i = 0; i < grid.size(); ++i)
    logw[i] = std::log(explicit_weights[i] / total);
  return logw;
}

void HyperPriorSet::validate() const {
  noise_stations.validate();
  noise_grid.validate();
  latent_sd.validate();
  latent_range.validate();
  bias_sd.validate();
  bias_range.validate();
  require(noise_stations.kind == PCKind::sd_upper && noise_grid.kind == PCKind::sd_upper &&
              latent_sd.kind == PCKind::sd_upper && bias_sd.kind == PCKind::sd_upper,
          "sd priors must be of kind sd_upper");
  require(latent_range.kind == PCKind::range_lower && bias_range.kind == PCKind::range_lower,
          "range priors must be of kind range_lower");
  require(fixed_effect_precision > 0.0, "fixed-effect precision must be positive");
}

}  // namespace fusion
