#include "fusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fusion/errors.hpp"

namespace fusion {

void FieldEstimate::validate(bool need_truth) const {
  require(mean.size() > 0, "empty field estimate");
  require(sd.size() == mean.size(), "field estimate mean/sd misaligned");
  if (need_truth) require(truth.size() == mean.size(), "field estimate lacks truth values");
  for (int i = 0; i < sd.size(); ++i) require(sd[i] >= 0.0, "negative posterior sd");
}

double avg_squared_error(const FieldEstimate& est) {
  est.validate(true);
  return (est.truth - est.mean).squaredNorm() / static_cast<double>(est.mean.size());
}

double avg_posterior_sd(const FieldEstimate& est) {
  est.validate(false);
  return est.sd.mean();
}

double ds_score(double y, double mean, double var) {
  require(var > 0.0, "ds_score: variance must be positive");
  const double r = y - mean;
  return r * r / var + std::log(var);
}

std::vector<double> scaled_ds(const std::vector<double>& scores) {
  require(!scores.empty(), "scaled_ds: empty input");
  const double shift = std::abs(*std::min_element(scores.begin(), scores.end()));
  constexpr double eps = 1e-9;
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = std::log(scores[i] + shift + eps);
  return out;
}

double relative_error(double estimate, double truth) {
  require(truth != 0.0, "relative_error: zero truth");
  return std::abs((estimate - truth) / truth);
}

void ScoreReport::add(const std::string& name, double value) { scores.emplace_back(name, value); }

double ScoreReport::get(const std::string& name) const {
  for (const auto& [n, v] : scores)
    if (n == name) return v;
  throw validation_error("score not present: " + name);
}

bool ScoreReport::has(const std::string& name) const {
  for (const auto& [n, v] : scores)
    if (n == name) return true;
  return false;
}

double gaussian_kl(double m1, double s1, double m2, double s2) {
  require(s1 > 0.0 && s2 > 0.0, "gaussian_kl: sds must be positive");
  const double dm = m1 - m2;
  return std::log(s2 / s1) + (s1 * s1 + dm * dm) / (2.0 * s2 * s2) - 0.5;
}

ScoreReport lgocv_scores(const std::vector<CvRecord>& records, double obs_noise_var) {
  require(!records.empty(), "lgocv_scores: no records");
  require(obs_noise_var >= 0.0, "lgocv_scores: negative observation noise variance");
  const double n = static_cast<double>(records.size());
  double logdens = 0.0, sq = 0.0, abs_err = 0.0, msd = 0.0, kl = 0.0;
  double mape = 0.0;
  long mape_excluded = 0;
  for (const CvRecord& r : records) {
    require(r.pred_sd > 0.0 && r.full_sd > 0.0, "lgocv_scores: non-positive predictive sd");
    const double v_obs = r.pred_sd * r.pred_sd + obs_noise_var;
    const double res = r.y - r.pred_mean;
    logdens += -0.5 * std::log(2.0 * M_PI * v_obs) - 0.5 * res * res / v_obs;
    sq += res * res;
    abs_err += std::abs(res);
    if (r.y == 0.0)
      ++mape_excluded;  // zero denominators are dropped and counted
    else
      mape += std::abs(res / r.y);
    msd += r.pred_sd;
    kl += gaussian_kl(r.pred_mean, r.pred_sd, r.full_mean, r.full_sd);
  }
  ScoreReport rep;
  rep.add("ulgocv", logdens / n);
  rep.add("rmse", std::sqrt(sq / n));
  rep.add("mae", abs_err / n);
  const double n_mape = n - static_cast<double>(mape_excluded);
  rep.add("mape", n_mape > 0 ? mape / n_mape : std::numeric_limits<double>::quiet_NaN());
  rep.add("mape_excluded", static_cast<double>(mape_excluded));
  rep.add("msd", msd / n);
  rep.add("mkld", kl / n);
  return rep;
}

void write_score_csv(const std::vector<ScoreReport>& reports, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_score_csv: cannot open " + path);
  out << "model,scenario,replicate,radius,score_name,value\n";
  char buf[64];
  for (const ScoreReport& r : reports)
    for (const auto& [name, value] : r.scores) {
      out << r.model << "," << r.scenario << ",";
      if (r.replicate >= 0) out << r.replicate;
      out << ",";
      if (r.radius >= 0.0) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.radius);
        out << buf;
      }
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      out << "," << name << "," << buf << "\n";
    }
  require(out.good(), "write_score_csv: write failed for " + path);
}

}  // namespace fusion
