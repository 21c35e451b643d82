#include "mixfit/gaussian.hpp"

#include <cmath>

namespace mixfit {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

void check_dims(const GaussianParams& theta, const DataBatch& data, const char* what) {
  if (theta.sigma.rows() != theta.mu.size() || theta.sigma.cols() != theta.mu.size())
    throw DimensionError(std::string(what) + ": sigma shape does not match mu");
  if (data.dim() != theta.mu.size())
    throw DimensionError(std::string(what) + ": data dimension does not match parameters");
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& sigma, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NotSpdError(std::string(what) + ": covariance is not positive definite");
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// Weighted mean and scatter about the mean of the active view.
struct Moments {
  double total_weight;
  Eigen::VectorXd mean;
  Eigen::MatrixXd scatter;  // sum_i w_i (x_i - mean)(x_i - mean)'
};

Moments weighted_moments(const DataBatch& data) {
  Eigen::MatrixXd x = data.active_matrix();
  Eigen::VectorXd w = data.active_weights();
  double total = w.sum();
  if (!(total > 0.0)) throw InsufficientDataError("moments: total weight must be > 0");
  Eigen::VectorXd mean = (x * w) / total;
  Eigen::MatrixXd centered = x.colwise() - mean;
  Eigen::MatrixXd scatter = centered * w.asDiagonal() * centered.transpose();
  scatter = 0.5 * (scatter + scatter.transpose().eval());
  return {total, std::move(mean), std::move(scatter)};
}

}  // namespace

Eigen::VectorXd mvn_llvec(const GaussianParams& theta, const DataBatch& data) {
  check_dims(theta, data, "llvec");
  auto llt = factor(theta.sigma, "llvec");
  const double d = static_cast<double>(theta.dim());
  const double base = -0.5 * (d * kLogTwoPi + log_det_from_llt(llt));

  Eigen::MatrixXd centered = data.active_matrix().colwise() - theta.mu;
  // z = L^-1 (x - mu); quadratic form is |z|^2.
  Eigen::MatrixXd z = llt.matrixL().solve(centered);
  Eigen::VectorXd quad = z.colwise().squaredNorm();

  Eigen::VectorXd out(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    double w = data.weight(i);
    out(i) = w == 0.0 ? 0.0 : w * (base - 0.5 * quad(i));
  }
  return out;
}

double mvn_ll(const GaussianParams& theta, const DataBatch& data) {
  check_dims(theta, data, "ll");
  auto llt = factor(theta.sigma, "ll");
  const double d = static_cast<double>(theta.dim());
  const double base = -0.5 * (d * kLogTwoPi + log_det_from_llt(llt));

  Eigen::MatrixXd centered = data.active_matrix().colwise() - theta.mu;
  Eigen::MatrixXd z = llt.matrixL().solve(centered);
  double total = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    double w = data.weight(i);
    if (w != 0.0) total += w * (base - 0.5 * z.col(i).squaredNorm());
  }
  return total;
}

GaussianGrad mvn_llgrad(const GaussianParams& theta, const DataBatch& data) {
  check_dims(theta, data, "llgrad");
  auto llt = factor(theta.sigma, "llgrad");
  Eigen::MatrixXd centered = data.active_matrix().colwise() - theta.mu;
  Eigen::VectorXd w = data.active_weights();
  double total_w = w.sum();

  Eigen::MatrixXd y = llt.solve(centered);  // Sigma^-1 (x_i - mu)
  GaussianGrad g;
  g.d_mu = y * w;
  Eigen::MatrixXd sigma_inv =
      llt.solve(Eigen::MatrixXd::Identity(theta.dim(), theta.dim()));
  g.d_sigma = 0.5 * (y * w.asDiagonal() * y.transpose() - total_w * sigma_inv);
  g.d_sigma = 0.5 * (g.d_sigma + g.d_sigma.transpose().eval());
  return g;
}

Eigen::MatrixXd mvn_llgraddata(const GaussianParams& theta, const DataBatch& data) {
  check_dims(theta, data, "llgraddata");
  auto llt = factor(theta.sigma, "llgraddata");
  Eigen::MatrixXd centered = data.active_matrix().colwise() - theta.mu;
  Eigen::MatrixXd y = llt.solve(centered);
  Eigen::VectorXd w = data.active_weights();
  return -(y * w.asDiagonal());
}

Eigen::MatrixXd mvn_sample(const GaussianParams& theta, Index n, Rng& rng) {
  if (n < 1) throw DimensionError("sample: n must be >= 1");
  auto llt = factor(theta.sigma, "sample");
  Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd z(theta.dim(), n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < theta.dim(); ++i) z(i, j) = rng.normal();
  return (l * z).colwise() + theta.mu;
}

GaussianParams mvn_init(const DataBatch& data, Rng& rng) {
  if (data.size() < 2) throw InsufficientDataError("init: need at least two data points");
  Moments m = weighted_moments(data);
  Eigen::MatrixXd cov = m.scatter / m.total_weight;
  const Index d = data.dim();

  // Jitter the mean by 0.1 per-coordinate standard deviations.
  Eigen::VectorXd stddev = cov.diagonal().array().max(0.0).sqrt();
  Eigen::VectorXd mu = m.mean;
  for (Index i = 0; i < d; ++i) mu(i) += 0.1 * stddev(i) * rng.normal();

  cov += (1e-6 * cov.trace() / static_cast<double>(d) + 1e-12) *
         Eigen::MatrixXd::Identity(d, d);
  return {std::move(mu), std::move(cov)};
}

GaussianEstimate mvn_estimatedefault(const DataBatch& data, const PenalizerHyper* hyper) {
  Moments m = weighted_moments(data);
  const Index d = data.dim();
  const double total_w = m.total_weight;

  GaussianEstimate est;
  if (hyper == nullptr) {
    est.params.mu = m.mean;
    est.params.sigma = m.scatter / total_w;
  } else {
    if (hyper->m0.size() != d || hyper->lambda.rows() != d || hyper->lambda.cols() != d)
      throw DimensionError("estimatedefault: penalizer hyperparameter shape mismatch");
    const double kappa = hyper->kappa;
    est.params.mu = (total_w * m.mean + kappa * hyper->m0) / (total_w + kappa);
    Eigen::VectorXd delta = m.mean - hyper->m0;
    // Argmax of ll + penalizercost. The divisor matches the penalizer's
    // |Sigma| exponent, so the pair stays a consistent stationary point.
    est.params.sigma =
        (m.scatter + hyper->lambda +
         (total_w * kappa / (total_w + kappa)) * (delta * delta.transpose())) /
        (total_w + hyper->nu + static_cast<double>(d) + 1.0);
    est.params.sigma = 0.5 * (est.params.sigma + est.params.sigma.transpose().eval());
  }

  Eigen::LLT<Eigen::MatrixXd> llt(est.params.sigma);
  if (llt.info() != Eigen::Success || !est.params.sigma.allFinite()) {
    double ridge = 1e-6 * std::max(0.0, est.params.sigma.trace()) / static_cast<double>(d) + 1e-12;
    est.params.sigma += ridge * Eigen::MatrixXd::Identity(d, d);
    est.degenerate = true;
    Eigen::LLT<Eigen::MatrixXd> retry(est.params.sigma);
    if (retry.info() != Eigen::Success)
      throw NotSpdError("estimatedefault: covariance not repairable");
  }
  return est;
}

PenalizerHyper mvn_penalizerparam(const DataBatch& data) {
  if (data.size() < 1) throw InsufficientDataError("penalizerparam: data is empty");
  Moments m = weighted_moments(data);
  const Index d = data.dim();
  PenalizerHyper hyper;
  hyper.nu = static_cast<double>(d) + 2.0;
  hyper.kappa = 0.01;
  hyper.m0 = m.mean;
  Eigen::VectorXd cov_diag = (m.scatter / m.total_weight).diagonal();
  hyper.lambda = (0.01 * cov_diag.array() + 1e-8).matrix().asDiagonal();
  return hyper;
}

double mvn_penalizercost(const GaussianParams& theta, const PenalizerHyper& hyper) {
  auto llt = factor(theta.sigma, "penalizercost");
  const double d = static_cast<double>(theta.dim());
  Eigen::VectorXd delta = theta.mu - hyper.m0;
  Eigen::VectorXd z = llt.matrixL().solve(delta);
  double trace_term = llt.solve(hyper.lambda).trace();
  return -0.5 * (hyper.nu + d + 1.0) * log_det_from_llt(llt) - 0.5 * trace_term -
         0.5 * hyper.kappa * z.squaredNorm();
}

GaussianGrad mvn_penalizergrad(const GaussianParams& theta, const PenalizerHyper& hyper) {
  auto llt = factor(theta.sigma, "penalizergrad");
  const Index d = theta.dim();
  Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::VectorXd delta = theta.mu - hyper.m0;
  Eigen::VectorXd si_delta = llt.solve(delta);

  GaussianGrad g;
  g.d_mu = -hyper.kappa * si_delta;
  g.d_sigma = -0.5 * (hyper.nu + static_cast<double>(d) + 1.0) * sigma_inv +
              0.5 * sigma_inv * hyper.lambda * sigma_inv +
              0.5 * hyper.kappa * (si_delta * si_delta.transpose());
  g.d_sigma = 0.5 * (g.d_sigma + g.d_sigma.transpose().eval());
  return g;
}

double mvn_kl(const GaussianParams& p, const GaussianParams& q) {
  if (p.dim() != q.dim()) throw DimensionError("kl: dimension mismatch");
  auto llt_q = factor(q.sigma, "kl");
  auto llt_p = factor(p.sigma, "kl");
  const double d = static_cast<double>(p.dim());
  double trace_term = llt_q.solve(p.sigma).trace();
  Eigen::VectorXd delta = q.mu - p.mu;
  double quad = llt_q.matrixL().solve(delta).squaredNorm();
  return 0.5 * (trace_term + quad - d + log_det_from_llt(llt_q) - log_det_from_llt(llt_p));
}

double mvn_entropy(const GaussianParams& theta) {
  auto llt = factor(theta.sigma, "entropy");
  const double d = static_cast<double>(theta.dim());
  return 0.5 * (d * (kLogTwoPi + 1.0) + log_det_from_llt(llt));
}

// --- manifold plumbing -------------------------------------------------------

ManifoldDescriptor gaussian_manifold(Index d) {
  return ManifoldDescriptor::product({{"mu", ManifoldDescriptor::euclidean(d, 1)},
                                      {"sigma", ManifoldDescriptor::spd(d)}});
}

ManifoldPoint gaussian_to_point(const GaussianParams& theta) {
  std::vector<ValueTree> children;
  children.emplace_back(Eigen::MatrixXd(theta.mu));
  children.emplace_back(theta.sigma);
  return ManifoldPoint{ValueTree(std::move(children))};
}

GaussianParams point_to_gaussian(const ManifoldPoint& x) {
  GaussianParams theta;
  theta.mu = x.value.child(0).leaf();
  theta.sigma = x.value.child(1).leaf();
  return theta;
}

ValueTree gaussian_grad_to_ambient(const GaussianGrad& g) {
  std::vector<ValueTree> children;
  children.emplace_back(Eigen::MatrixXd(g.d_mu));
  children.emplace_back(g.d_sigma);
  return ValueTree(std::move(children));
}

DistributionSpec gaussian_spec(Index d) {
  DistributionSpec spec;
  spec.manifold = gaussian_manifold(d);
  spec.data_dim = d;
  spec.llvec = [](const ManifoldPoint& x, const DataBatch& data) {
    return mvn_llvec(point_to_gaussian(x), data);
  };
  spec.ll = [](const ManifoldPoint& x, const DataBatch& data) {
    return mvn_ll(point_to_gaussian(x), data);
  };
  spec.llgrad = [](const ManifoldPoint& x, const DataBatch& data) {
    return gaussian_grad_to_ambient(mvn_llgrad(point_to_gaussian(x), data));
  };
  spec.llgraddata = [](const ManifoldPoint& x, const DataBatch& data) {
    return mvn_llgraddata(point_to_gaussian(x), data);
  };
  spec.sample = [](const ManifoldPoint& x, Index n, Rng& rng) {
    return mvn_sample(point_to_gaussian(x), n, rng);
  };
  spec.init = [](const DataBatch& data, Rng& rng) {
    return gaussian_to_point(mvn_init(data, rng));
  };
  spec.estimatedefault = [](const DataBatch& data, const PenalizerHyper* hyper) {
    GaussianEstimate est = mvn_estimatedefault(data, hyper);
    return DistributionSpec::Estimate{gaussian_to_point(est.params), est.degenerate};
  };
  spec.kl = [](const ManifoldPoint& p, const ManifoldPoint& q) {
    return mvn_kl(point_to_gaussian(p), point_to_gaussian(q));
  };
  spec.entropy = [](const ManifoldPoint& x) {
    return mvn_entropy(point_to_gaussian(x));
  };
  spec.penalizerparam = [](const DataBatch& data) { return mvn_penalizerparam(data); };
  spec.penalizercost = [](const ManifoldPoint& x, const PenalizerHyper& hyper) {
    return mvn_penalizercost(point_to_gaussian(x), hyper);
  };
  spec.penalizergrad = [](const ManifoldPoint& x, const PenalizerHyper& hyper) {
    return gaussian_grad_to_ambient(mvn_penalizergrad(point_to_gaussian(x), hyper));
  };
  return spec;
}

}  // namespace mixfit
