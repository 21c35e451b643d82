#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixfit/gaussian.hpp"
#include "mixfit/model_selection.hpp"
#include "oracles.hpp"

using namespace mixfit;

namespace {

// Three well-separated unit-variance clusters at 0, 10, 20.
DataBatch three_clusters(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(1, n);
  for (Index i = 0; i < n; ++i) {
    double center = 10.0 * static_cast<double>(rng.uniform_int(0, 2));
    x(0, i) = center + rng.normal();
  }
  return DataBatch(x);
}

}  // namespace

TEST_CASE("aic and bic formulas") {
  CHECK(aic(0.0, 5, 7).value == doctest::Approx(10.0));
  CHECK(bic(0.0, 5, 100).value == doctest::Approx(5.0 * std::log(100.0)).epsilon(1e-14));
  CHECK(bic(-12.5, 3, 50).value ==
        doctest::Approx(25.0 + 3.0 * std::log(50.0)).epsilon(1e-14));

  // nested models with equal log-likelihood: fewer parameters win both
  CHECK(aic(-100.0, 5, 40).value < aic(-100.0, 9, 40).value);
  CHECK(bic(-100.0, 5, 40).value < bic(-100.0, 9, 40).value);

  CHECK(aic(0.0, 5, 1).num_params == 5);
  CHECK(bic(0.0, 5, 9).n == 9);
  CHECK_THROWS_AS(bic(0.0, 5, 0), ConfigError);
}

TEST_CASE("csm grows from one to three components on three clusters") {
  DataBatch data = three_clusters(1500, 3);
  CsmOptions options;
  options.k_init = 1;
  options.k_min = 1;
  options.k_max = 8;
  options.criterion = CriterionKind::bic;
  options.inner.solver = Solver::em;
  options.inner.max_iters = 300;
  options.inner.seed = 4;
  CsmReport report = csm_fit(gaussian_spec(1), data, options);
  CHECK(report.k_selected == 3);

  // accepted rounds improve the criterion strictly and monotonically
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& round : report.rounds) {
    if (!round.accepted) continue;
    CHECK(round.criterion < prev - options.accept_slack);
    prev = round.criterion;
    CHECK(round.k >= options.k_min);
    CHECK(round.k <= options.k_max);
  }
  // the selected model carries the best criterion among full fits
  CHECK(report.best_criterion.value == doctest::Approx(prev).epsilon(1e-12));
}

TEST_CASE("csm at the true K rejects every move") {
  DataBatch data = three_clusters(900, 5);
  CsmOptions options;
  options.k_init = 3;
  options.k_min = 1;
  options.k_max = 6;
  options.inner.solver = Solver::em;
  options.inner.max_iters = 300;
  options.inner.seed = 6;
  CsmReport report = csm_fit(gaussian_spec(1), data, options);
  CHECK(report.k_selected == 3);
  REQUIRE_FALSE(report.rounds.empty());
  CHECK_FALSE(report.rounds.back().accepted);
  CHECK(report.rounds.size() == 1);  // terminated on the first no-improvement round
}

TEST_CASE("degenerate search space equals a single fit") {
  DataBatch data = three_clusters(600, 7);
  CsmOptions options;
  options.k_init = 2;
  options.k_min = 2;
  options.k_max = 2;
  options.inner.solver = Solver::em;
  options.inner.max_iters = 150;
  options.inner.seed = 8;
  CsmReport constrained = csm_fit(gaussian_spec(1), data, options);
  CHECK(constrained.rounds.empty());
  CHECK(constrained.k_selected == 2);

  CsmOptions no_rounds = options;
  no_rounds.k_min = 1;
  no_rounds.k_max = 8;
  no_rounds.max_rounds = 0;
  CsmReport zero = csm_fit(gaussian_spec(1), data, no_rounds);

  auto spec = MixtureSpec::make(gaussian_spec(1), 2);
  FitReport plain = fit(spec, data, options.inner);
  CHECK(zero.fit.theta_hat.weights(0) == plain.theta_hat.weights(0));
  CHECK(point_to_gaussian(zero.fit.theta_hat.components[0]).mu(0) ==
        point_to_gaussian(plain.theta_hat.components[0]).mu(0));
  CHECK(constrained.fit.theta_hat.weights(0) == plain.theta_hat.weights(0));
}

TEST_CASE("csm under the validation criterion") {
  DataBatch data = three_clusters(1200, 9);
  CsmOptions options;
  options.k_init = 1;
  options.k_min = 1;
  options.k_max = 6;
  options.criterion = CriterionKind::validation_ll;
  options.inner.solver = Solver::em;
  options.inner.max_iters = 200;
  options.inner.validation_fraction = 0.25;
  options.inner.seed = 10;
  CsmReport report = csm_fit(gaussian_spec(1), data, options);
  CHECK(report.k_selected >= 3);
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& round : report.rounds) {
    if (!round.accepted) continue;
    CHECK(round.criterion > prev);
    prev = round.criterion;
  }

  CsmOptions missing = options;
  missing.inner.validation_fraction = 0.0;
  CHECK_THROWS_AS(csm_fit(gaussian_spec(1), data, missing), ConfigError);
}

TEST_CASE("csm option validation") {
  DataBatch data = three_clusters(100, 11);
  CsmOptions options;
  options.k_init = 3;
  options.k_min = 4;  // k_min > k_init
  CHECK_THROWS_AS(csm_fit(gaussian_spec(1), data, options), ConfigError);
  options.k_min = 1;
  options.k_max = 2;  // k_max < k_init
  CHECK_THROWS_AS(csm_fit(gaussian_spec(1), data, options), ConfigError);
}
