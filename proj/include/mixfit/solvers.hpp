#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mixfit/manifold.hpp"

namespace mixfit {

enum class StopReason { tol_ll, tol_grad, max_iters, early_stop };

// Per-update step size: constant c, or decaying c / (1 + t/tau).
struct StepSchedule {
  enum class Kind { constant, decay };
  Kind kind = Kind::constant;
  double c = 1e-3;
  double tau = 100.0;

  double at(long t) const {
    return kind == Kind::constant ? c : c / (1.0 + static_cast<double>(t) / tau);
  }
};

enum class SolveDirection { steepest, conjugate, lbfgs };

struct SolveOptions {
  SolveDirection direction = SolveDirection::steepest;
  int max_iters = 100;
  double tol_grad = 1e-6;
  double tol_rel_f = 1e-8;
  int memory = 10;                       // lbfgs history length
  std::optional<StepSchedule> schedule;  // set: raw scheduled steps, no line search
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 50;
  double curvature_tol = 1e-12;  // reject pairs with inner(s,y) <= tol*|s||y|
};

struct SolveResult {
  ManifoldPoint x;
  double f = 0.0;
  std::vector<double> trace;  // objective after each iteration
  int iters = 0;
  bool converged = false;
  StopReason reason = StopReason::max_iters;
  bool line_search_failed = false;
};

using ObjectiveFn = std::function<double(const ManifoldPoint&)>;
using EgradFn = std::function<ValueTree(const ManifoldPoint&)>;
// Called after each accepted iteration; returning false stops the solver.
using SolveCallback = std::function<bool(int iter, const ManifoldPoint&, double f)>;

// First-order Riemannian maximization of f over the manifold m. The ambient
// gradient from `egrad` is converted through egrad_to_rgrad; steps go through
// `retract`. Without a schedule, steps are found by Armijo backtracking
// (maximization form f_new >= f + c1 t <grad, dir>), with the initial trial
// step doubling the previously accepted one. Conjugate directions use
// Hestenes-Stiefel+ with vector transport; LBFGS runs the two-loop recursion
// over transported (s, y) pairs and skips pairs failing the curvature test.
SolveResult riemannian_maximize(const ManifoldDescriptor& m, const ObjectiveFn& f,
                                const EgradFn& egrad, ManifoldPoint x0,
                                const SolveOptions& opts,
                                const SolveCallback& callback = {});

}  // namespace mixfit
