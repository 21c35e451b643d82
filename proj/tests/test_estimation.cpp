#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <climits>
#include <cmath>

#include "mixfit/estimation.hpp"
#include "mixfit/gaussian.hpp"
#include "oracles.hpp"

using namespace mixfit;

namespace {

MixtureSpec spec_1d(int k) { return MixtureSpec::make(gaussian_spec(1), k); }

// Seeded draw from the two-component benchmark model.
DataBatch benchmark_data(Index n, std::uint64_t seed) {
  auto spec = spec_1d(2);
  Rng rng(seed);
  return DataBatch(mix_sample(spec, oracle::benchmark_model(), n, rng).data);
}

std::vector<double> flatten(const ValueTree& t) {
  std::vector<double> out;
  std::function<void(const ValueTree&)> walk = [&](const ValueTree& v) {
    if (v.is_leaf()) {
      for (Index j = 0; j < v.leaf().cols(); ++j)
        for (Index i = 0; i < v.leaf().rows(); ++i) out.push_back(v.leaf()(i, j));
      return;
    }
    for (std::size_t i = 0; i < v.num_children(); ++i) walk(v.child(i));
  };
  walk(t);
  return out;
}

}  // namespace

TEST_CASE("em with one component converges to estimatedefault in one M-step") {
  auto spec = spec_1d(1);
  DataBatch data = benchmark_data(200, 1);
  FitOptions options;
  options.solver = Solver::em;
  options.max_iters = 1;
  options.seed = 3;
  FitReport report = fit_em(spec, data, options);
  auto direct = mvn_estimatedefault(data);
  GaussianParams fitted = point_to_gaussian(report.theta_hat.components[0]);
  CHECK(fitted.mu(0) == doctest::Approx(direct.params.mu(0)).epsilon(1e-14));
  CHECK(fitted.sigma(0, 0) == doctest::Approx(direct.params.sigma(0, 0)).epsilon(1e-14));
  CHECK(report.theta_hat.weights(0) == doctest::Approx(1.0));
}

TEST_CASE("em recovers the benchmark model") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(1000, 7);
  FitOptions options;
  options.solver = Solver::em;
  options.max_iters = 500;
  options.seed = 7;
  FitReport report = fit(spec, data, options);

  // match components by mean order
  GaussianParams a = point_to_gaussian(report.theta_hat.components[0]);
  GaussianParams b = point_to_gaussian(report.theta_hat.components[1]);
  double w0 = report.theta_hat.weights(0);
  if (a.mu(0) > b.mu(0)) {
    std::swap(a, b);
    w0 = report.theta_hat.weights(1);
  }
  CHECK(std::abs(a.mu(0) - 0.0) < 0.3);
  CHECK(std::abs(b.mu(0) - 5.0) < 0.3);
  CHECK(std::abs(std::sqrt(a.sigma(0, 0)) - 1.0) < 0.3);
  CHECK(std::abs(std::sqrt(b.sigma(0, 0)) - 2.0) < 0.3);
  CHECK(std::abs(w0 - 0.8) < 0.06);
}

TEST_CASE("em trace is monotone, penalized and unpenalized") {
  auto spec = spec_1d(2);
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    DataBatch data = benchmark_data(300, seed);
    for (bool penalize : {false, true}) {
      FitOptions options;
      options.solver = Solver::em;
      options.max_iters = 200;
      options.penalize = penalize;
      options.seed = seed;
      FitReport report = fit_em(spec, data, options);
      for (std::size_t t = 1; t < report.ll_trace.size(); ++t)
        CHECK(report.ll_trace[t] >=
              report.ll_trace[t - 1] - 1e-10 * std::abs(report.ll_trace[t - 1]));
      check_mixture(spec, report.theta_hat);
    }
  }
}

TEST_CASE("weight gradient vanishes on the simplex at an EM fixed point") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(400, 19);
  FitOptions options;
  options.solver = Solver::em;
  options.max_iters = 20000;
  options.tol_rel_ll = 0.0;  // run to the floating-point fixed point
  options.seed = 19;
  FitReport report = fit_em(spec, data, options);

  ValueTree grad = mix_llgrad(spec, report.theta_hat, data);
  auto simplex = ManifoldDescriptor::simplex_interior(2);
  ManifoldPoint p{ValueTree(Eigen::MatrixXd(report.theta_hat.weights))};
  TangentVector rgrad = egrad_to_rgrad(simplex, p, grad.child(2));
  // per-datum scale: the total objective is flat below float resolution long
  // before the raw gradient reaches zero
  double per_datum = rgrad.value.leaf().cwiseAbs().maxCoeff() /
                     static_cast<double>(data.size());
  CHECK(per_datum <= 1e-8);
}

TEST_CASE("em falls back to a Riemannian M-step without estimatedefault") {
  DataBatch data = benchmark_data(300, 21);
  auto closed = spec_1d(2);
  auto gradient_only = closed;
  gradient_only.component.estimatedefault = nullptr;

  FitOptions options;
  options.solver = Solver::em;
  options.max_iters = 60;
  options.seed = 5;
  FitReport with_closed = fit_em(closed, data, options);
  FitReport with_lbfgs = fit_em(gradient_only, data, options);

  // generalized EM stays monotone and lands near the closed-form optimum
  for (std::size_t t = 1; t < with_lbfgs.ll_trace.size(); ++t)
    CHECK(with_lbfgs.ll_trace[t] >=
          with_lbfgs.ll_trace[t - 1] - 1e-8 * std::abs(with_lbfgs.ll_trace[t - 1]));
  double n = static_cast<double>(data.size());
  CHECK(std::abs(with_lbfgs.ll_trace.back() - with_closed.ll_trace.back()) / n < 5e-3);
}

TEST_CASE("em re-initializes empty components") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(120, 31);
  MixtureParams warm = oracle::benchmark_model();
  // park one component so far away that it collects no responsibility
  Eigen::VectorXd far(1);
  far << 1e8;
  warm.components[1] =
      gaussian_to_point({far, 1e-4 * Eigen::MatrixXd::Identity(1, 1)});
  FitOptions options;
  options.solver = Solver::em;
  options.max_iters = 50;
  options.seed = 2;
  FitReport report = fit_em(spec, data, options, warm);
  bool saw_reinit = false;
  for (const auto& e : report.events) saw_reinit |= e.kind == "reinit";
  CHECK(saw_reinit);
  check_mixture(spec, report.theta_hat);
}

TEST_CASE("riemannian solvers stop quickly at an EM fixed point") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(400, 41);
  FitOptions em_opts;
  em_opts.solver = Solver::em;
  em_opts.max_iters = 3000;
  em_opts.tol_rel_ll = 1e-14;
  em_opts.seed = 41;
  FitReport em_report = fit_em(spec, data, em_opts);

  for (Solver s : {Solver::rsd, Solver::rlbfgs}) {
    FitOptions options;
    options.solver = s;
    options.max_iters = 100;
    options.tol_grad = 5e-4;  // gradient scale for N=400 totals
    options.seed = 41;
    FitReport warm = fit_riemannian(spec, data, options, em_report.theta_hat);
    CHECK(warm.iters <= 2);
  }
}

TEST_CASE("lbfgs solves a Euclidean quadratic within dim+5 iterations") {
  const Index dim = 8;
  Rng rng(43);
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) diag(i, i) = 1.0 + 3.0 * rng.uniform();
  // orthogonal rotation mixes the axes without changing the spectrum
  Eigen::MatrixXd noise(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < dim; ++i) noise(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(noise);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd a = q * diag * q.transpose();
  Eigen::VectorXd target = oracle::random_vector(dim, rng);

  auto m = ManifoldDescriptor::euclidean(dim, 1);
  auto f = [&](const ManifoldPoint& x) {
    Eigen::VectorXd d = x.value.leaf().col(0) - target;
    return -0.5 * d.dot(a * d);
  };
  auto egrad = [&](const ManifoldPoint& x) {
    Eigen::VectorXd d = x.value.leaf().col(0) - target;
    return ValueTree(Eigen::MatrixXd(-(a * d)));
  };
  SolveOptions so;
  so.direction = SolveDirection::lbfgs;
  so.max_iters = 100;
  so.tol_grad = 1e-6;
  so.tol_rel_f = 0.0;
  SolveResult res = riemannian_maximize(m, f, egrad, rand_point(m, rng), so);
  CHECK(res.converged);
  CHECK(res.reason == StopReason::tol_grad);
  CHECK(res.iters <= dim + 5);

  // conjugate gradients also get there, if less sharply
  SolveOptions cg = so;
  cg.direction = SolveDirection::conjugate;
  cg.max_iters = 200;
  SolveResult res_cg = riemannian_maximize(m, f, egrad, rand_point(m, rng), cg);
  CHECK(res_cg.converged);
  CHECK(res_cg.reason == StopReason::tol_grad);
}

TEST_CASE("line-searched traces are non-decreasing") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(250, 47);
  for (Solver s : {Solver::rsd, Solver::rcg, Solver::rlbfgs}) {
    FitOptions options;
    options.solver = s;
    options.max_iters = 120;
    options.seed = 47;
    FitReport report = fit_riemannian(spec, data, options);
    REQUIRE_FALSE(report.ll_trace.empty());
    for (std::size_t t = 1; t < report.ll_trace.size(); ++t)
      CHECK(report.ll_trace[t] >= report.ll_trace[t - 1] - 1e-12);
    check_mixture(spec, report.theta_hat);
  }
}

TEST_CASE("full-batch sgd with a constant step reproduces rsd bitwise") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(128, 53);

  FitOptions sgd_opts;
  sgd_opts.solver = Solver::sgd;
  sgd_opts.max_iters = 25;
  sgd_opts.batch_size = static_cast<int>(data.size());
  sgd_opts.step_schedule = StepSchedule{StepSchedule::Kind::constant, 2e-4, 0.0};
  sgd_opts.tol_rel_ll = 0.0;
  sgd_opts.tol_grad = 0.0;
  sgd_opts.seed = 9;
  FitReport sgd_report = fit_sgd(spec, data, sgd_opts);

  FitOptions rsd_opts = sgd_opts;
  rsd_opts.solver = Solver::rsd;
  rsd_opts.batch_size.reset();
  FitReport rsd_report = fit_riemannian(spec, data, rsd_opts);

  REQUIRE(sgd_report.ll_trace.size() == rsd_report.ll_trace.size());
  for (std::size_t t = 0; t < sgd_report.ll_trace.size(); ++t)
    CHECK(sgd_report.ll_trace[t] == rsd_report.ll_trace[t]);  // bitwise
  CHECK(point_to_gaussian(sgd_report.theta_hat.components[0]).mu(0) ==
        point_to_gaussian(rsd_report.theta_hat.components[0]).mu(0));
}

TEST_CASE("batch gradients are unbiased for the full gradient") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(100, 59);
  MixtureParams theta = oracle::benchmark_model();

  std::vector<double> full = flatten(mix_llgrad(spec, theta, data));
  std::vector<double> mean(full.size(), 0.0);
  Rng rng(61);
  const int reps = 10000;
  const Index batch = 10;
  const double scale = static_cast<double>(data.size()) / static_cast<double>(batch);
  for (int r = 0; r < reps; ++r) {
    std::vector<Index> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) i = rng.uniform_int(0, data.size() - 1);
    std::vector<double> g = flatten(mix_llgrad(spec, theta, data.with_subset(idx)));
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += scale * g[i] / reps;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    num += (mean[i] - full[i]) * (mean[i] - full[i]);
    den += full[i] * full[i];
  }
  CHECK(std::sqrt(num / den) < 0.01);
}

TEST_CASE("sgd makes progress on the benchmark") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(1000, 67);

  FitOptions em_opts;
  em_opts.solver = Solver::em;
  em_opts.max_iters = 800;
  em_opts.seed = 67;
  double em_ll = fit_em(spec, data, em_opts).ll_trace.back();

  FitOptions options;
  options.solver = Solver::sgd;
  options.max_iters = 50;
  options.batch_size = 100;
  options.step_schedule = StepSchedule{StepSchedule::Kind::decay, 2e-4, 200.0};
  options.tol_rel_ll = 0.0;
  options.seed = 67;
  FitReport report = fit_sgd(spec, data, options);
  double best = *std::max_element(report.ll_trace.begin(), report.ll_trace.end());
  CHECK((em_ll - best) / static_cast<double>(data.size()) < 0.05);
  check_mixture(spec, report.theta_hat);
}

TEST_CASE("early stopping") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(400, 71);

  FitOptions options;
  options.solver = Solver::em;
  options.max_iters = 150;
  options.validation_fraction = 0.25;
  options.patience = INT_MAX / 2;
  options.seed = 71;
  FitReport wrapped = fit(spec, data, options);

  // with effectively infinite patience the training trajectory matches the
  // plain fitter run on the train split
  auto [train, val] = validation_split(data, 0.25, options.seed);
  FitReport plain = fit_em(spec, train, options);
  REQUIRE(wrapped.ll_trace.size() == plain.ll_trace.size());
  for (std::size_t t = 0; t < plain.ll_trace.size(); ++t)
    CHECK(wrapped.ll_trace[t] == plain.ll_trace[t]);

  // the returned parameters attain the maximum of the validation trace
  REQUIRE_FALSE(wrapped.val_trace.empty());
  double best = *std::max_element(wrapped.val_trace.begin(), wrapped.val_trace.end());
  CHECK(mix_ll(spec, wrapped.theta_hat, val) == doctest::Approx(best).epsilon(1e-12));

  // an overparameterized fit triggers the patience rule before max_iters
  auto big = spec_1d(8);
  DataBatch small = benchmark_data(160, 73);
  FitOptions overfit;
  overfit.solver = Solver::em;
  overfit.max_iters = 400;
  overfit.tol_rel_ll = 0.0;  // disable the objective stop to isolate patience
  overfit.validation_fraction = 0.25;
  overfit.patience = 10;
  overfit.penalize = true;
  overfit.seed = 73;
  FitReport stopped = fit(big, small, overfit);
  CHECK(stopped.reason == StopReason::early_stop);
  CHECK(stopped.iters < overfit.max_iters);

  FitOptions bad = options;
  bad.validation_fraction = 0.0;
  CHECK_THROWS_AS(early_stopping_wrap(fit_em, spec, data, bad), ConfigError);
}

TEST_CASE("identical options and seed give bitwise-identical traces") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(300, 79);
  for (Solver s : {Solver::em, Solver::rlbfgs}) {
    FitOptions options;
    options.solver = s;
    options.max_iters = 40;
    options.seed = 79;
    FitReport a = fit(spec, data, options);
    FitReport b = fit(spec, data, options);
    REQUIRE(a.ll_trace.size() == b.ll_trace.size());
    for (std::size_t t = 0; t < a.ll_trace.size(); ++t)
      CHECK(a.ll_trace[t] == b.ll_trace[t]);
  }
}

TEST_CASE("option validation") {
  auto spec = spec_1d(2);
  DataBatch data = benchmark_data(50, 83);
  FitOptions options;
  options.solver = Solver::sgd;
  CHECK_THROWS_AS(fit_sgd(spec, data, options), ConfigError);  // no batch size
  options.batch_size = 10;
  CHECK_THROWS_AS(fit_sgd(spec, data, options), ConfigError);  // no schedule
  options.batch_size = 10000;
  options.step_schedule = StepSchedule{StepSchedule::Kind::constant, 1e-4, 0.0};
  CHECK_THROWS_AS(fit_sgd(spec, data, options), ConfigError);  // batch > N
  FitOptions bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(fit_em(spec, data, bad), ConfigError);
}
