#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mixfit/data_batch.hpp"
#include "mixfit/mixture.hpp"
#include "mixfit/solvers.hpp"

namespace mixfit {

enum class Solver { em, rsd, rcg, rlbfgs, sgd };

struct FitOptions {
  Solver solver = Solver::em;
  int max_iters = 200;
  double tol_rel_ll = 1e-8;
  double tol_grad = 1e-6;
  int lbfgs_memory = 10;
  std::optional<int> batch_size;              // required for sgd
  std::optional<StepSchedule> step_schedule;  // required for sgd; when set on
                                              // rsd/rcg/rlbfgs, raw scheduled
                                              // steps replace the line search
  double validation_fraction = 0.0;           // > 0 enables early stopping
  int patience = 20;
  bool penalize = false;
  std::uint64_t seed = 0;
};

struct FitEvent {
  int iter = 0;
  std::string kind;  // "reinit", "degenerate_repair", "line_search_stall", ...
  int component = -1;
  std::string note;
};

struct FitReport {
  MixtureParams theta_hat;
  std::vector<double> ll_trace;   // objective after each iteration (epoch for sgd)
  std::vector<double> val_trace;  // validation ll per iteration, when enabled
  bool converged = false;
  StopReason reason = StopReason::max_iters;
  int iters = 0;
  std::vector<FitEvent> events;
};

// Called after each iteration with the training objective; returning false
// stops the fit with reason early_stop.
using FitCallback = std::function<bool(int iter, const MixtureParams&, double objective)>;

using FitFn = std::function<FitReport(const MixtureSpec&, const DataBatch&,
                                      const FitOptions&,
                                      const std::optional<MixtureParams>&,
                                      const FitCallback&)>;

// Training objective: mixture log-likelihood plus the summed component
// penalizer cost when hyper is given.
double mixture_objective(const MixtureSpec& spec, const MixtureParams& theta,
                         const DataBatch& data, const PenalizerHyper* hyper);

// Expectation-maximization. The M-step calls the component's estimatedefault
// with effective weights w_i r_ij (plus the penalizer hyperparameters when
// options.penalize); components without estimatedefault get a warm-started
// Riemannian LBFGS M-step. Empty components (responsibility mass < 1e-8) are
// re-initialized from init and recorded as events.
FitReport fit_em(const MixtureSpec& spec, const DataBatch& data,
                 const FitOptions& options,
                 const std::optional<MixtureParams>& warm_start = {},
                 const FitCallback& callback = {});

// Riemannian first-order maximization over the mixture product manifold;
// covers rsd, rcg and rlbfgs via options.solver.
FitReport fit_riemannian(const MixtureSpec& spec, const DataBatch& data,
                         const FitOptions& options,
                         const std::optional<MixtureParams>& warm_start = {},
                         const FitCallback& callback = {});

// Mini-batch stochastic Riemannian gradient ascent. Each update draws the
// next shuffled batch, scales the batch gradient by N/|batch| and adds the
// full penalizer gradient; traces record epoch-level full-data objectives.
FitReport fit_sgd(const MixtureSpec& spec, const DataBatch& data,
                  const FitOptions& options,
                  const std::optional<MixtureParams>& warm_start = {},
                  const FitCallback& callback = {});

// Deterministic seeded-shuffle split into (train, validation) views.
std::pair<DataBatch, DataBatch> validation_split(const DataBatch& data,
                                                 double fraction,
                                                 std::uint64_t seed);

// Splits data into train/validation by a seeded shuffle, runs the wrapped
// fitter on the train part while tracking validation log-likelihood, stops
// after `patience` iterations without a new validation maximum, and returns
// the parameters of the best validation iteration.
FitReport early_stopping_wrap(const FitFn& fit_op, const MixtureSpec& spec,
                              const DataBatch& data, const FitOptions& options,
                              const std::optional<MixtureParams>& warm_start = {});

// Dispatch on options.solver, wrapped in early stopping when
// options.validation_fraction > 0.
FitReport fit(const MixtureSpec& spec, const DataBatch& data,
              const FitOptions& options,
              const std::optional<MixtureParams>& warm_start = {});

}  // namespace mixfit
