#include "mixfit/solvers.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace mixfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Objective evaluation that treats numeric failures as -inf so the line
// search backs away from invalid regions instead of aborting the fit.
double safe_eval(const ObjectiveFn& f, const ManifoldPoint& x) {
  try {
    double v = f(x);
    return std::isnan(v) ? kNegInf : v;
  } catch (const NotSpdError&) {
    return kNegInf;
  } catch (const NumericError&) {
    return kNegInf;
  }
}

struct CurvaturePair {
  TangentVector s;
  TangentVector y;  // minimization convention: T(g_old) - g_new
  double rho;
};

}  // namespace

SolveResult riemannian_maximize(const ManifoldDescriptor& m, const ObjectiveFn& f,
                                const EgradFn& egrad, ManifoldPoint x0,
                                const SolveOptions& opts,
                                const SolveCallback& callback) {
  SolveResult res;
  res.x = std::move(x0);
  res.f = f(res.x);
  if (!std::isfinite(res.f)) throw NumericError("solver: objective not finite at start");

  TangentVector grad = egrad_to_rgrad(m, res.x, egrad(res.x));
  double gnorm = norm(m, res.x, grad);

  std::deque<CurvaturePair> pairs;               // lbfgs memory, newest last
  std::optional<TangentVector> prev_dir;         // cg memory (at current x)
  std::optional<TangentVector> prev_grad;        // cg memory (at current x)
  double prev_step = 0.0;
  long update_count = 0;

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    if (gnorm < opts.tol_grad) {
      res.converged = true;
      res.reason = StopReason::tol_grad;
      return res;
    }

    // Ascent direction.
    TangentVector dir = grad;
    if (opts.direction == SolveDirection::conjugate && prev_dir) {
      TangentVector y = lincomb(m, res.x, 1.0, grad, -1.0, *prev_grad);
      double denom = inner(m, res.x, *prev_dir, y);
      if (std::abs(denom) > 1e-300) {
        double beta = std::max(0.0, -inner(m, res.x, grad, y) / denom);
        dir = lincomb(m, res.x, 1.0, grad, beta, *prev_dir);
      }
    } else if (opts.direction == SolveDirection::lbfgs && !pairs.empty()) {
      // Two-loop recursion on h = -f: q starts at -grad, direction is -H(-g) = Hg.
      TangentVector q = lincomb(m, res.x, -1.0, grad, 0.0, grad);
      std::vector<double> alpha(pairs.size());
      for (std::size_t i = pairs.size(); i-- > 0;) {
        alpha[i] = pairs[i].rho * inner(m, res.x, pairs[i].s, q);
        q = lincomb(m, res.x, 1.0, q, -alpha[i], pairs[i].y);
      }
      const CurvaturePair& last = pairs.back();
      double gamma = 1.0 / (last.rho * inner(m, res.x, last.y, last.y));
      q = lincomb(m, res.x, gamma, q, 0.0, q);
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        double beta = pairs[i].rho * inner(m, res.x, pairs[i].y, q);
        q = lincomb(m, res.x, 1.0, q, alpha[i] - beta, pairs[i].s);
      }
      dir = lincomb(m, res.x, -1.0, q, 0.0, q);  // Hg
    }

    double slope = inner(m, res.x, grad, dir);
    if (!(slope > 0.0)) {  // not an ascent direction: reset to the gradient
      dir = grad;
      slope = gnorm * gnorm;
      pairs.clear();
      prev_dir.reset();
    }

    // Step selection.
    ManifoldPoint x_new;
    double f_new = kNegInf;
    double step = 0.0;
    if (opts.schedule) {
      step = opts.schedule->at(update_count);
      x_new = retract(m, res.x, dir, step);
      f_new = f(x_new);
      if (std::isnan(f_new)) throw NumericError("solver: objective became NaN");
    } else {
      double trial = prev_step > 0.0 ? 2.0 * prev_step
                                     : 1.0 / (1.0 + std::sqrt(std::max(slope, 0.0)));
      if (opts.direction == SolveDirection::lbfgs)
        trial = prev_step > 0.0 ? std::min(1.0, 2.0 * prev_step) : 1.0;
      bool accepted = false;
      for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
        try {
          x_new = retract(m, res.x, dir, trial);
          f_new = safe_eval(f, x_new);
        } catch (const std::exception&) {
          f_new = kNegInf;
        }
        if (f_new >= res.f + opts.armijo_c1 * trial * slope) {
          accepted = true;
          step = trial;
          break;
        }
        trial *= opts.backtrack;
      }
      if (!accepted) {
        res.line_search_failed = true;
        res.converged = false;
        res.reason = StopReason::tol_ll;
        return res;  // best iterate so far
      }
    }

    // Update memories at the new point.
    if (opts.direction == SolveDirection::lbfgs) {
      TangentVector step_tangent = lincomb(m, res.x, step, dir, 0.0, dir);
      TangentVector s = transport(m, res.x, x_new, step_tangent);
      TangentVector g_moved = transport(m, res.x, x_new, grad);
      for (auto& p : pairs) {
        p.s = transport(m, res.x, x_new, p.s);
        p.y = transport(m, res.x, x_new, p.y);
      }
      TangentVector g_new = egrad_to_rgrad(m, x_new, egrad(x_new));
      TangentVector y = lincomb(m, x_new, 1.0, g_moved, -1.0, g_new);
      double sy = inner(m, x_new, s, y);
      double sn = norm(m, x_new, s), yn = norm(m, x_new, y);
      if (sy > opts.curvature_tol * sn * yn && sy > 0.0) {
        pairs.push_back({s, y, 1.0 / sy});
        if (static_cast<int>(pairs.size()) > opts.memory) pairs.pop_front();
      }
      grad = g_new;
    } else if (opts.direction == SolveDirection::conjugate) {
      prev_dir = transport(m, res.x, x_new, dir);
      prev_grad = transport(m, res.x, x_new, grad);
      grad = egrad_to_rgrad(m, x_new, egrad(x_new));
    } else {
      grad = egrad_to_rgrad(m, x_new, egrad(x_new));
    }
    gnorm = norm(m, x_new, grad);

    double f_old = res.f;
    res.x = std::move(x_new);
    res.f = f_new;
    res.trace.push_back(res.f);
    res.iters = iter;
    prev_step = step;
    ++update_count;

    if (callback && !callback(iter, res.x, res.f)) {
      res.converged = true;
      res.reason = StopReason::early_stop;
      return res;
    }
    if (std::abs(res.f - f_old) <= opts.tol_rel_f * std::max(1.0, std::abs(f_old))) {
      res.converged = true;
      res.reason = StopReason::tol_ll;
      return res;
    }
  }

  res.converged = false;
  res.reason = StopReason::max_iters;
  return res;
}

}  // namespace mixfit
