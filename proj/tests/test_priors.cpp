#include <cmath>

#include "doctest.h"
#include "fusion/errors.hpp"
#include "fusion/priors.hpp"
#include "support/test_support.hpp"

using namespace fusion;

TEST_CASE("sd prior: unit exponential fixture and origin limit") {
  const PCPriorSpec unit{PCKind::sd_upper, 1.0, std::exp(-1.0)};
  CHECK(unit.rate() == doctest::Approx(1.0));
  CHECK(pc_sd_logpdf(1.0, unit) == doctest::Approx(-1.0));
  // finite limit at the origin: log(rate)
  CHECK(pc_sd_logpdf(1e-300, unit) == doctest::Approx(std::log(unit.rate())));
  CHECK_THROWS_AS(pc_sd_logpdf(-0.5, unit), validation_error);
}

TEST_CASE("sd prior reproduces its tail probability by quadrature") {
  for (const auto& [threshold, prob] :
       std::vector<std::pair<double, double>>{{0.25, 0.5}, {1.5, 0.5}, {0.3, 0.1}}) {
    const PCPriorSpec spec{PCKind::sd_upper, threshold, prob};
    const auto dens = [&](double s) { return std::exp(pc_sd_logpdf(s, spec)); };
    const double upper = threshold + 60.0 / spec.rate();
    const double tail = oracle::simpson(dens, threshold, upper, 20000);
    CHECK(std::abs(tail - prob) < 1e-8);
    const double total = oracle::simpson(dens, 1e-12, upper, 20000);
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("range prior: head probability, reciprocal change of variables, tail") {
  const PCPriorSpec spec{PCKind::range_lower, 300.0, 0.5};
  const auto dens = [&](double r) { return std::exp(pc_range_logpdf(r, spec)); };
  // P(range < threshold) = prob by quadrature
  const double head = oracle::simpson(dens, 1e-6, 300.0, 40000);
  CHECK(std::abs(head - 0.5) < 1e-6);

  // u = 1/range is exponential with the same rate
  const double lambda = spec.rate();
  for (double r : {50.0, 200.0, 700.0}) {
    const double exp_dens = lambda * std::exp(-lambda / r);  // density of u at 1/r
    CHECK(std::exp(pc_range_logpdf(r, spec)) ==
          doctest::Approx(exp_dens / (r * r)).epsilon(1e-12));
  }

  // integrable lambda / r^2 tail
  const double far = 1e7;
  CHECK(std::exp(pc_range_logpdf(far, spec)) ==
        doctest::Approx(lambda / (far * far)).epsilon(1e-4));
  CHECK_THROWS_AS(pc_range_logpdf(0.0, spec), validation_error);
}

TEST_CASE("autoregressive prior: uniform by default, normalized") {
  CHECK(ar_logprior(0.0) == doctest::Approx(-std::log(2.0)));
  CHECK(ar_logprior(0.9) == doctest::Approx(-std::log(2.0)));
  CHECK_THROWS_AS(ar_logprior(1.0), validation_error);
  const double mass = oracle::simpson(
      [](double c) { return std::exp(ar_logprior(c)); }, -1.0 + 1e-9, 1.0 - 1e-9, 2000);
  CHECK(std::abs(mass - 1.0) < 1e-6);

  // experimental correlation prior also integrates to one
  const ArPriorSpec pc{ArPriorKind::pc_correlation, 0.5, 0.5};
  const double mass_pc = oracle::simpson(
      [&](double c) { return std::exp(ar_logprior(c, pc)); }, -1.0 + 1e-12, 1.0 - 1e-12,
      200000);
  CHECK(std::abs(mass_pc - 1.0) < 1e-3);
}

TEST_CASE("bias-grid prior weights") {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.5 + 0.1 * i);
  const std::vector<double> lw = alpha1_log_prior(grid);
  REQUIRE(lw.size() == 11);
  for (double w : lw) CHECK(w == doctest::Approx(-std::log(11.0)));

  const std::vector<double> lw2 = alpha1_log_prior({0.9, 1.1}, {2.0, 2.0});
  CHECK(std::exp(lw2[0]) == doctest::Approx(0.5));
  CHECK(std::exp(lw2[1]) == doctest::Approx(0.5));

  CHECK_THROWS_AS(alpha1_log_prior({}), validation_error);
  CHECK_THROWS_AS(alpha1_log_prior({1.0, 0.9}), validation_error);
  CHECK_THROWS_AS(alpha1_log_prior({0.9, 1.1}, {1.0, -1.0}), validation_error);
}

TEST_CASE("prior set completeness") {
  HyperPriorSet p;
  p.noise_stations = {PCKind::sd_upper, 0.25, 0.5};
  p.noise_grid = {PCKind::sd_upper, 0.01, 0.5};
  p.latent_sd = {PCKind::sd_upper, 3.16, 0.5};
  p.latent_range = {PCKind::range_lower, 2.0, 0.5};
  p.bias_sd = {PCKind::sd_upper, 1.0, 0.5};
  p.bias_range = {PCKind::range_lower, 1.0, 0.5};
  CHECK_NOTHROW(p.validate());
  p.latent_range.kind = PCKind::sd_upper;  // wrong kind in a range slot
  CHECK_THROWS_AS(p.validate(), validation_error);
}
