#include "mixfit/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mixfit {

namespace {

constexpr double kEmptyComponentTol = 1e-8;

void validate_options(const FitOptions& o, Index n) {
  if (o.max_iters < 1) throw ConfigError("options: max_iters must be >= 1");
  if (!(o.validation_fraction >= 0.0) || o.validation_fraction >= 1.0)
    throw ConfigError("options: validation_fraction must be in [0, 1)");
  if (o.batch_size && (*o.batch_size < 1 || *o.batch_size > n))
    throw ConfigError("options: batch_size must be in [1, N]");
}

std::optional<PenalizerHyper> make_hyper(const MixtureSpec& spec,
                                         const DataBatch& data, const FitOptions& o) {
  if (!o.penalize) return std::nullopt;
  if (!spec.component.has_penalizer())
    throw ConfigError("options: penalize set but the component has no penalizer");
  return spec.component.penalizerparam(data);
}

// a + c*b over matching value trees.
ValueTree add_scaled(const ValueTree& a, const ValueTree& b, double c) {
  if (a.is_leaf()) return ValueTree(a.leaf() + c * b.leaf());
  std::vector<ValueTree> children;
  children.reserve(a.num_children());
  for (std::size_t i = 0; i < a.num_children(); ++i)
    children.push_back(add_scaled(a.child(i), b.child(i), c));
  return ValueTree(std::move(children));
}

ValueTree scale_tree(const ValueTree& a, double c) {
  if (a.is_leaf()) return ValueTree(c * a.leaf());
  std::vector<ValueTree> children;
  children.reserve(a.num_children());
  for (std::size_t i = 0; i < a.num_children(); ++i)
    children.push_back(scale_tree(a.child(i), c));
  return ValueTree(std::move(children));
}

bool rel_change_below(double f_new, double f_old, double tol) {
  return std::abs(f_new - f_old) <= tol * std::max(1.0, std::abs(f_old));
}

// Ambient objective gradient at a mixture point: mixture log-likelihood
// gradient (over the given batch, optionally rescaled) plus the penalizer
// gradient of every component.
ValueTree objective_egrad(const MixtureSpec& spec, const ManifoldPoint& x,
                          const DataBatch& batch, double scale,
                          const PenalizerHyper* hyper) {
  MixtureParams theta = point_to_mixture(spec, x);
  ValueTree g = mix_llgrad(spec, theta, batch);
  if (scale != 1.0) g = scale_tree(g, scale);
  if (hyper != nullptr) {
    std::vector<ValueTree> children;
    children.reserve(g.num_children());
    for (std::size_t j = 0; j < static_cast<std::size_t>(spec.k); ++j) {
      ValueTree pen = spec.component.penalizergrad(theta.components[j], *hyper);
      children.push_back(add_scaled(g.child(j), pen, 1.0));
    }
    children.push_back(g.child(static_cast<std::size_t>(spec.k)));
    g = ValueTree(std::move(children));
  }
  return g;
}

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  return idx;
}

}  // namespace

double mixture_objective(const MixtureSpec& spec, const MixtureParams& theta,
                         const DataBatch& data, const PenalizerHyper* hyper) {
  double v = mix_ll(spec, theta, data);
  if (hyper != nullptr)
    for (const auto& c : theta.components)
      v += spec.component.penalizercost(c, *hyper);
  return v;
}

FitReport fit_em(const MixtureSpec& spec, const DataBatch& data,
                 const FitOptions& options,
                 const std::optional<MixtureParams>& warm_start,
                 const FitCallback& callback) {
  if (data.size() < 1) throw InsufficientDataError("fit: data is empty");
  validate_options(options, data.size());

  Rng rng(options.seed);
  MixtureParams theta = warm_start ? *warm_start : mix_init(spec, data, rng);
  std::optional<PenalizerHyper> hyper = make_hyper(spec, data, options);
  const PenalizerHyper* hp = hyper ? &*hyper : nullptr;

  FitReport report;
  Eigen::VectorXd w = data.active_weights();
  const double total_w = w.sum();
  if (!(total_w > 0.0)) throw InsufficientDataError("fit: total weight must be > 0");

  double prev = mixture_objective(spec, theta, data, hp);
  for (int iter = 1; iter <= options.max_iters; ++iter) {
    Responsibilities resp = posteriors(spec, theta, data);

    Eigen::VectorXd mass(spec.k);
    for (int j = 0; j < spec.k; ++j) {
      Eigen::VectorXd eff = w.array() * resp.r.row(j).transpose().array();
      mass(j) = eff.sum();
      if (mass(j) < kEmptyComponentTol) {
        theta.components[j] = spec.component.init(data, rng);
        mass(j) = 1e-3 * total_w;  // give the revived component a foothold
        report.events.push_back({iter, "reinit", j, "empty component re-initialized"});
        continue;
      }
      DataBatch weighted = data.with_weights(eff);
      if (spec.component.has_estimatedefault()) {
        auto est = spec.component.estimatedefault(weighted, hp);
        theta.components[j] = est.point;
        if (est.degenerate)
          report.events.push_back(
              {iter, "degenerate_repair", j, "covariance repaired with jitter"});
      } else {
        // Generalized M-step: warm-started Riemannian LBFGS on the
        // component's weighted log-likelihood (plus penalizer).
        SolveOptions so;
        so.direction = SolveDirection::lbfgs;
        so.max_iters = 50;
        so.tol_grad = options.tol_grad;
        so.tol_rel_f = 1e-10;
        so.memory = options.lbfgs_memory;
        auto value = [&](const ManifoldPoint& p) {
          double v = spec.component.ll(p, weighted);
          if (hp != nullptr) v += spec.component.penalizercost(p, *hp);
          return v;
        };
        auto egrad = [&](const ManifoldPoint& p) {
          ValueTree g = spec.component.llgrad(p, weighted);
          if (hp != nullptr)
            g = add_scaled(g, spec.component.penalizergrad(p, *hp), 1.0);
          return g;
        };
        auto sub = riemannian_maximize(spec.component.manifold, value, egrad,
                                       theta.components[j], so);
        theta.components[j] = sub.x;
      }
    }
    theta.weights = mass / mass.sum();
    // keep weights strictly inside the simplex
    theta.weights = theta.weights.cwiseMax(default_tolerances().weight_floor);
    theta.weights /= theta.weights.sum();

    double obj = mixture_objective(spec, theta, data, hp);
    report.ll_trace.push_back(obj);
    report.iters = iter;
    if (callback && !callback(iter, theta, obj)) {
      report.converged = true;
      report.reason = StopReason::early_stop;
      break;
    }
    if (rel_change_below(obj, prev, options.tol_rel_ll)) {
      report.converged = true;
      report.reason = StopReason::tol_ll;
      break;
    }
    prev = obj;
  }
  report.theta_hat = std::move(theta);
  if (!report.converged) report.reason = StopReason::max_iters;
  return report;
}

FitReport fit_riemannian(const MixtureSpec& spec, const DataBatch& data,
                         const FitOptions& options,
                         const std::optional<MixtureParams>& warm_start,
                         const FitCallback& callback) {
  if (data.size() < 1) throw InsufficientDataError("fit: data is empty");
  validate_options(options, data.size());

  Rng rng(options.seed);
  MixtureParams theta0 = warm_start ? *warm_start : mix_init(spec, data, rng);
  std::optional<PenalizerHyper> hyper = make_hyper(spec, data, options);
  const PenalizerHyper* hp = hyper ? &*hyper : nullptr;

  SolveOptions so;
  switch (options.solver) {
    case Solver::rcg:
      so.direction = SolveDirection::conjugate;
      break;
    case Solver::rlbfgs:
      so.direction = SolveDirection::lbfgs;
      break;
    default:
      so.direction = SolveDirection::steepest;
      break;
  }
  so.max_iters = options.max_iters;
  so.tol_grad = options.tol_grad;
  so.tol_rel_f = options.tol_rel_ll;
  so.memory = options.lbfgs_memory;
  so.schedule = options.step_schedule;

  auto value = [&](const ManifoldPoint& x) {
    return mixture_objective(spec, point_to_mixture(spec, x), data, hp);
  };
  auto egrad = [&](const ManifoldPoint& x) {
    return objective_egrad(spec, x, data, 1.0, hp);
  };
  SolveCallback cb;
  if (callback)
    cb = [&](int iter, const ManifoldPoint& x, double f) {
      return callback(iter, point_to_mixture(spec, x), f);
    };

  SolveResult res = riemannian_maximize(spec.manifold, value, egrad,
                                        mixture_to_point(spec, theta0), so, cb);

  FitReport report;
  report.theta_hat = point_to_mixture(spec, res.x);
  report.ll_trace = std::move(res.trace);
  report.converged = res.converged;
  report.reason = res.reason;
  report.iters = res.iters;
  if (res.line_search_failed)
    report.events.push_back(
        {res.iters, "line_search_stall", -1, "no improving step after 50 backtracks"});
  return report;
}

FitReport fit_sgd(const MixtureSpec& spec, const DataBatch& data,
                  const FitOptions& options,
                  const std::optional<MixtureParams>& warm_start,
                  const FitCallback& callback) {
  if (data.size() < 1) throw InsufficientDataError("fit: data is empty");
  validate_options(options, data.size());
  if (!options.batch_size) throw ConfigError("sgd: batch_size is required");
  if (!options.step_schedule) throw ConfigError("sgd: step_schedule is required");

  const Index n = data.size();
  const Index batch = *options.batch_size;

  Rng rng(options.seed);
  MixtureParams theta = warm_start ? *warm_start : mix_init(spec, data, rng);
  std::optional<PenalizerHyper> hyper = make_hyper(spec, data, options);
  const PenalizerHyper* hp = hyper ? &*hyper : nullptr;

  ManifoldPoint x = mixture_to_point(spec, theta);
  FitReport report;
  long update_count = 0;
  const Index batches_per_epoch = (n + batch - 1) / batch;

  double prev = mixture_objective(spec, theta, data, hp);
  for (int epoch = 1; epoch <= options.max_iters; ++epoch) {
    std::vector<Index> perm = shuffled_indices(n, rng);
    for (Index b = 0; b < batches_per_epoch; ++b) {
      Index lo = b * batch;
      Index hi = std::min(lo + batch, n);
      std::vector<Index> idx(perm.begin() + lo, perm.begin() + hi);
      std::sort(idx.begin(), idx.end());  // fixed evaluation order per batch
      DataBatch slice = data.with_subset(idx);
      double scale = static_cast<double>(n) / static_cast<double>(hi - lo);
      ValueTree eg = objective_egrad(spec, x, slice, scale, hp);
      TangentVector g = egrad_to_rgrad(spec.manifold, x, eg);
      x = retract(spec.manifold, x, g, options.step_schedule->at(update_count));
      ++update_count;
    }
    theta = point_to_mixture(spec, x);
    double obj = mixture_objective(spec, theta, data, hp);
    report.ll_trace.push_back(obj);
    report.iters = epoch;
    if (callback && !callback(epoch, theta, obj)) {
      report.converged = true;
      report.reason = StopReason::early_stop;
      break;
    }
    if (rel_change_below(obj, prev, options.tol_rel_ll)) {
      report.converged = true;
      report.reason = StopReason::tol_ll;
      break;
    }
    prev = obj;
  }
  report.theta_hat = point_to_mixture(spec, x);
  if (!report.converged) report.reason = StopReason::max_iters;
  return report;
}

std::pair<DataBatch, DataBatch> validation_split(const DataBatch& data,
                                                 double fraction,
                                                 std::uint64_t seed) {
  const Index n = data.size();
  const Index n_val = static_cast<Index>(std::floor(fraction * n));
  if (n_val < 1 || n - n_val < 1)
    throw ConfigError("early stopping: validation split is empty");
  // distinct stream from the fitter's own rng
  Rng split_rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Index> perm = shuffled_indices(n, split_rng);
  std::vector<Index> val_idx(perm.begin(), perm.begin() + n_val);
  std::vector<Index> train_idx(perm.begin() + n_val, perm.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  return {data.with_subset(train_idx), data.with_subset(val_idx)};
}

FitReport early_stopping_wrap(const FitFn& fit_op, const MixtureSpec& spec,
                              const DataBatch& data, const FitOptions& options,
                              const std::optional<MixtureParams>& warm_start) {
  if (!(options.validation_fraction > 0.0))
    throw ConfigError("early stopping: validation_fraction must be > 0");
  auto [train, val] = validation_split(data, options.validation_fraction, options.seed);

  std::vector<double> val_trace;
  MixtureParams best_theta;
  double best_val = -std::numeric_limits<double>::infinity();
  int stale = 0;
  bool stopped_early = false;

  FitCallback cb = [&](int, const MixtureParams& theta, double) {
    double v = mix_ll(spec, theta, val);  // validation ll is unpenalized
    val_trace.push_back(v);
    if (v > best_val) {
      best_val = v;
      best_theta = theta;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= options.patience) {
      stopped_early = true;
      return false;
    }
    return true;
  };

  FitReport report = fit_op(spec, train, options, warm_start, cb);
  report.val_trace = std::move(val_trace);
  if (!report.val_trace.empty()) report.theta_hat = best_theta;
  if (stopped_early) {
    report.converged = true;
    report.reason = StopReason::early_stop;
  }
  return report;
}

FitReport fit(const MixtureSpec& spec, const DataBatch& data,
              const FitOptions& options,
              const std::optional<MixtureParams>& warm_start) {
  FitFn core;
  switch (options.solver) {
    case Solver::em:
      core = fit_em;
      break;
    case Solver::sgd:
      core = fit_sgd;
      break;
    default:
      core = fit_riemannian;
      break;
  }
  if (options.validation_fraction > 0.0)
    return early_stopping_wrap(core, spec, data, options, warm_start);
  return core(spec, data, options, warm_start, FitCallback{});
}

}  // namespace mixfit
