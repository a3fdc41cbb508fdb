#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace fusion {

// Pointwise surface estimate aligned with an optional truth vector.
struct FieldEstimate {
  Eigen::VectorXd truth;  // may be empty
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  void validate(bool need_truth) const;
};

// mean squared discrepancy between truth and posterior mean over the grid
double avg_squared_error(const FieldEstimate& est);

// mean posterior standard deviation over the grid
double avg_posterior_sd(const FieldEstimate& est);

// Dawid-Sebastiani score of a single prediction
double ds_score(double y, double mean, double var);

// monotone rescaling used for plotting score panels:
// log(score + |min| + epsilon), epsilon guarding the exact minimum
std::vector<double> scaled_ds(const std::vector<double>& scores);

double relative_error(double estimate, double truth);

// One scored record of a held-out prediction: the x-scale predictive from the
// reduced data and from the full data.
struct CvRecord {
  double y = 0.0;
  double pred_mean = 0.0;
  double pred_sd = 0.0;
  double full_mean = 0.0;
  double full_sd = 0.0;
};

// A named table of scores with run metadata for long-format CSV export.
struct ScoreReport {
  std::string model;
  std::string scenario;
  long replicate = -1;   // -1 when not applicable
  double radius = -1.0;  // -1 when not applicable
  std::vector<std::pair<std::string, double>> scores;

  void add(const std::string& name, double value);
  double get(const std::string& name) const;
  bool has(const std::string& name) const;
};

// The six cross-validation scores. obs_noise_var is added to the predictive
// variance for the log-density score so that it targets the observation, not
// the latent surface.
ScoreReport lgocv_scores(const std::vector<CvRecord>& records, double obs_noise_var = 0.0);

// Gaussian Kullback-Leibler divergence KL(N(m1, s1^2) || N(m2, s2^2)).
double gaussian_kl(double m1, double s1, double m2, double s2);

// long-format CSV: model,scenario,replicate,radius,score_name,value
void write_score_csv(const std::vector<ScoreReport>& reports, const std::string& path);

}  // namespace fusion
