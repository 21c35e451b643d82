#pragma once

#include <Eigen/Dense>
#include <functional>

#include "mixfit/data_batch.hpp"
#include "mixfit/manifold.hpp"
#include "mixfit/rng.hpp"

namespace mixfit {

// Hyperparameters of the Normal-inverse-Wishart penalizer used for
// maximum-a-posteriori estimation: scale nu and matrix lambda for the
// covariance part, shrinkage strength kappa and prior mean m0 for the mean.
struct PenalizerHyper {
  double nu = 0.0;
  Eigen::MatrixXd lambda;
  double kappa = 0.0;
  Eigen::VectorXd m0;
};

// A distribution is a parameter manifold plus a table of operations. llvec and
// llgrad are always present; every optional operation is a null-checkable
// std::function so callers can branch (the EM driver falls back to manifold
// optimization when estimatedefault is absent).
//
// Parameters are points on `manifold`; gradients returned by llgrad and
// penalizergrad are ambient (Euclidean) and are converted downstream with
// egrad_to_rgrad.
struct DistributionSpec {
  ManifoldDescriptor manifold;
  Index data_dim = 0;

  struct Estimate {
    ManifoldPoint point;
    bool degenerate = false;  // covariance was repaired with jitter
  };

  // required
  std::function<Eigen::VectorXd(const ManifoldPoint&, const DataBatch&)> llvec;
  std::function<double(const ManifoldPoint&, const DataBatch&)> ll;
  std::function<ValueTree(const ManifoldPoint&, const DataBatch&)> llgrad;
  std::function<Eigen::MatrixXd(const ManifoldPoint&, Index, Rng&)> sample;
  std::function<ManifoldPoint(const DataBatch&, Rng&)> init;

  // optional
  std::function<Eigen::MatrixXd(const ManifoldPoint&, const DataBatch&)> llgraddata;
  std::function<Estimate(const DataBatch&, const PenalizerHyper*)> estimatedefault;
  std::function<double(const ManifoldPoint&, const ManifoldPoint&)> kl;
  std::function<double(const ManifoldPoint&)> entropy;
  std::function<PenalizerHyper(const DataBatch&)> penalizerparam;
  std::function<double(const ManifoldPoint&, const PenalizerHyper&)> penalizercost;
  std::function<ValueTree(const ManifoldPoint&, const PenalizerHyper&)> penalizergrad;

  Index num_free_params() const { return manifold.dim(); }
  bool has_estimatedefault() const { return static_cast<bool>(estimatedefault); }
  bool has_penalizer() const {
    return penalizerparam && penalizercost && penalizergrad;
  }
};

}  // namespace mixfit
