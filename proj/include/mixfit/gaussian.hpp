#pragma once

#include <Eigen/Dense>

#include "mixfit/data_batch.hpp"
#include "mixfit/distribution.hpp"
#include "mixfit/manifold.hpp"
#include "mixfit/rng.hpp"

namespace mixfit {

// Multivariate Gaussian parameters. The covariance lives on the SPD manifold;
// all linear algebra goes through its Cholesky factor (no explicit inverses
// or determinants).
struct GaussianParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  Index dim() const { return mu.size(); }
};

// Ambient gradient with respect to (mu, sigma); d_sigma is symmetric.
struct GaussianGrad {
  Eigen::VectorXd d_mu;
  Eigen::MatrixXd d_sigma;
};

struct GaussianEstimate {
  GaussianParams params;
  bool degenerate = false;  // covariance was rank-deficient and repaired with jitter
};

// Per-datum weighted log-likelihood: entry i is
//   w_i * ( -(d/2) ln 2pi - 1/2 ln|Sigma| - 1/2 (x_i-mu)' Sigma^-1 (x_i-mu) ).
Eigen::VectorXd mvn_llvec(const GaussianParams& theta, const DataBatch& data);

// Sum of mvn_llvec, computed in a single pass.
double mvn_ll(const GaussianParams& theta, const DataBatch& data);

// Ambient gradient of the summed weighted log-likelihood.
GaussianGrad mvn_llgrad(const GaussianParams& theta, const DataBatch& data);

// Gradient of the weighted log-likelihood with respect to the data; column i
// is -w_i Sigma^-1 (x_i - mu).
Eigen::MatrixXd mvn_llgraddata(const GaussianParams& theta, const DataBatch& data);

// n draws mu + L z with L the Cholesky factor of Sigma, one column per draw.
Eigen::MatrixXd mvn_sample(const GaussianParams& theta, Index n, Rng& rng);

// Moment-based initializer: weighted mean plus a small seeded jitter, weighted
// covariance plus a trace-scaled ridge. Requires at least two data points.
GaussianParams mvn_init(const DataBatch& data, Rng& rng);

// Weighted maximum likelihood (population convention, divide by total weight),
// or the maximum-a-posteriori estimate under the Normal-inverse-Wishart
// penalizer when hyper is given. A rank-deficient ML covariance is repaired
// with jitter and flagged instead of failing.
GaussianEstimate mvn_estimatedefault(const DataBatch& data,
                                     const PenalizerHyper* hyper = nullptr);

// Data-driven penalizer defaults: nu = d+2, kappa = 0.01, m0 = sample mean,
// lambda = 0.01 diag(sample covariance) + 1e-8 I.
PenalizerHyper mvn_penalizerparam(const DataBatch& data);

// Prior log-kernel, constants dropped:
//   -((nu+d+1)/2) ln|Sigma| - 1/2 tr(Lambda Sigma^-1)
//   - (kappa/2)(mu-m0)' Sigma^-1 (mu-m0).
double mvn_penalizercost(const GaussianParams& theta, const PenalizerHyper& hyper);

// Ambient gradient of mvn_penalizercost.
GaussianGrad mvn_penalizergrad(const GaussianParams& theta,
                               const PenalizerHyper& hyper);

// KL(N_p || N_q) in closed form.
double mvn_kl(const GaussianParams& p, const GaussianParams& q);

// Differential entropy 1/2 ln((2 pi e)^d |Sigma|).
double mvn_entropy(const GaussianParams& theta);

// --- manifold plumbing -------------------------------------------------------

// product(mu: euclidean(d,1), sigma: spd(d))
ManifoldDescriptor gaussian_manifold(Index d);

ManifoldPoint gaussian_to_point(const GaussianParams& theta);
GaussianParams point_to_gaussian(const ManifoldPoint& x);
ValueTree gaussian_grad_to_ambient(const GaussianGrad& g);

// Full operation table for the d-dimensional Gaussian.
DistributionSpec gaussian_spec(Index d);

}  // namespace mixfit
