#include "mixfit/mixture.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "mixfit/gaussian.hpp"

namespace mixfit {

namespace {

void check_indices(const MixtureParams& theta, int j, const char* what) {
  if (j < 0 || j >= theta.k())
    throw DimensionError(std::string(what) + ": component index out of range");
}

// logsumexp over column entries with max shift; -inf stays -inf.
double logsumexp(const Eigen::VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd log_weights(const MixtureParams& theta) {
  return theta.weights.array().log();
}

}  // namespace

MixtureSpec MixtureSpec::make(DistributionSpec component, int k) {
  if (k < 1) throw DimensionError("mixture: k must be >= 1");
  std::vector<std::pair<std::string, ManifoldDescriptor>> children;
  children.reserve(static_cast<std::size_t>(k) + 1);
  for (int j = 0; j < k; ++j)
    children.emplace_back("c" + std::to_string(j), component.manifold);
  children.emplace_back("p", ManifoldDescriptor::simplex_interior(k));
  MixtureSpec spec{std::move(component), k,
                   ManifoldDescriptor::product(std::move(children))};
  return spec;
}

void check_mixture(const MixtureSpec& spec, const MixtureParams& theta,
                   const Tolerances& tol) {
  if (theta.k() != spec.k || theta.weights.size() != spec.k)
    throw DimensionError("mixture: component count mismatch");
  if ((theta.weights.array() <= 0.0).any())
    throw NumericError("mixture: weights must be strictly positive");
  if (std::abs(theta.weights.sum() - 1.0) > tol.check_tol)
    throw NumericError("mixture: weights must sum to 1");
  for (const auto& c : theta.components) check_point(spec.component.manifold, c, tol);
}

Eigen::MatrixXd component_ll_matrix(const MixtureSpec& spec,
                                    const MixtureParams& theta,
                                    const DataBatch& data) {
  if (theta.k() != spec.k) throw DimensionError("mixture: component count mismatch");
  const int k = spec.k;
  Eigen::MatrixXd ll(k, data.size());
  DataBatch unweighted = data.without_weights();

  int threads = std::min(thread_cap(), k);
  if (threads > 1 && static_cast<long>(data.size()) * k >= 16384) {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int j = next.fetch_add(1); j < k; j = next.fetch_add(1)) {
          try {
            ll.row(j) = spec.component.llvec(theta.components[j], unweighted).transpose();
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  } else {
    for (int j = 0; j < k; ++j)
      ll.row(j) = spec.component.llvec(theta.components[j], unweighted).transpose();
  }
  return ll;
}

Eigen::VectorXd mix_llvec(const MixtureSpec& spec, const MixtureParams& theta,
                          const DataBatch& data) {
  Eigen::MatrixXd ll = component_ll_matrix(spec, theta, data);
  Eigen::VectorXd logp = log_weights(theta);
  Eigen::VectorXd out(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    double w = data.weight(i);
    out(i) = w == 0.0 ? 0.0 : w * logsumexp(ll.col(i) + logp);
  }
  return out;
}

double mix_ll(const MixtureSpec& spec, const MixtureParams& theta,
              const DataBatch& data) {
  return mix_llvec(spec, theta, data).sum();
}

Responsibilities posteriors(const MixtureSpec& spec, const MixtureParams& theta,
                            const DataBatch& data) {
  Eigen::MatrixXd ll = component_ll_matrix(spec, theta, data);
  Eigen::VectorXd logp = log_weights(theta);
  Responsibilities resp;
  resp.r.resize(spec.k, data.size());
  for (Index i = 0; i < data.size(); ++i) {
    Eigen::VectorXd joint = ll.col(i) + logp;
    double lse = logsumexp(joint);
    resp.r.col(i) = (joint.array() - lse).exp();
    resp.r.col(i) /= resp.r.col(i).sum();  // exact column normalization
  }
  return resp;
}

ValueTree mix_llgrad(const MixtureSpec& spec, const MixtureParams& theta,
                     const DataBatch& data) {
  Responsibilities resp = posteriors(spec, theta, data);
  Eigen::VectorXd w = data.active_weights();

  std::vector<ValueTree> children;
  children.reserve(static_cast<std::size_t>(spec.k) + 1);
  Eigen::VectorXd dp(spec.k);
  for (int j = 0; j < spec.k; ++j) {
    Eigen::VectorXd eff = w.array() * resp.r.row(j).transpose().array();
    children.push_back(spec.component.llgrad(theta.components[j], data.with_weights(eff)));
    dp(j) = eff.sum() / theta.weights(j);
  }
  children.emplace_back(Eigen::MatrixXd(dp));
  return ValueTree(std::move(children));
}

MixSample mix_sample(const MixtureSpec& spec, const MixtureParams& theta,
                     Index n, Rng& rng) {
  if (n < 1) throw DimensionError("sample: n must be >= 1");
  MixSample out;
  out.data.resize(spec.component.data_dim, n);
  out.labels.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd cum(theta.weights.size());
  double acc = 0.0;
  for (Index j = 0; j < theta.weights.size(); ++j) {
    acc += theta.weights(j);
    cum(j) = acc;
  }
  for (Index i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    int label = 0;
    while (label + 1 < spec.k && u > cum(label)) ++label;
    out.labels[static_cast<std::size_t>(i)] = label;
    out.data.col(i) = spec.component.sample(theta.components[label], 1, rng);
  }
  return out;
}

MixtureParams split_component(const MixtureSpec& spec, const MixtureParams& theta,
                              int j, Rng& rng) {
  if (theta.k() != spec.k) throw DimensionError("split: component count mismatch");
  check_indices(theta, j, "split");
  GaussianParams parent = point_to_gaussian(theta.components[j]);
  const Index d = parent.dim();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(parent.sigma);
  if (es.info() != Eigen::Success)
    throw NumericError("split: eigendecomposition did not converge");
  Index top = d - 1;  // eigenvalues ascending
  double lambda1 = es.eigenvalues()(top);
  Eigen::VectorXd v1 = es.eigenvectors().col(top);
  // Tie-break: perturb the direction when the top eigenvalue is not isolated.
  if (d > 1 && lambda1 - es.eigenvalues()(top - 1) < 1e-9 * std::max(1.0, lambda1)) {
    Eigen::VectorXd z(d);
    for (Index i = 0; i < d; ++i) z(i) = rng.normal();
    v1 = (v1 + 0.1 * z).normalized();
  }

  Eigen::VectorXd offset = 0.5 * std::sqrt(std::max(lambda1, 0.0)) * v1;
  Eigen::MatrixXd child_sigma =
      parent.sigma - 0.5 * lambda1 * (v1 * v1.transpose());
  child_sigma = 0.5 * (child_sigma + child_sigma.transpose().eval());
  Eigen::LLT<Eigen::MatrixXd> llt(child_sigma);
  if (llt.info() != Eigen::Success) {
    child_sigma += (1e-9 * std::max(1.0, parent.sigma.trace() / static_cast<double>(d))) *
                   Eigen::MatrixXd::Identity(d, d);
  }

  GaussianParams left{parent.mu - offset, child_sigma};
  GaussianParams right{parent.mu + offset, child_sigma};

  MixtureParams out;
  out.weights.resize(theta.k() + 1);
  for (int c = 0; c < theta.k(); ++c) {
    if (c == j) continue;
    out.components.push_back(theta.components[c]);
  }
  out.components.push_back(gaussian_to_point(left));
  out.components.push_back(gaussian_to_point(right));

  int idx = 0;
  for (int c = 0; c < theta.k(); ++c) {
    if (c == j) continue;
    out.weights(idx++) = theta.weights(c);
  }
  out.weights(idx++) = 0.5 * theta.weights(j);
  out.weights(idx) = 0.5 * theta.weights(j);
  out.weights /= out.weights.sum();
  return out;
}

MixtureParams merge_components(const MixtureSpec& spec, const MixtureParams& theta,
                               int i, int j) {
  if (theta.k() != spec.k) throw DimensionError("merge: component count mismatch");
  check_indices(theta, i, "merge");
  check_indices(theta, j, "merge");
  if (i == j) throw DimensionError("merge: indices must differ");
  if (theta.k() < 2) throw DimensionError("merge: need at least two components");

  GaussianParams a = point_to_gaussian(theta.components[i]);
  GaussianParams b = point_to_gaussian(theta.components[j]);
  double pa = theta.weights(i), pb = theta.weights(j);
  double p = pa + pb;
  Eigen::VectorXd mu = (pa * a.mu + pb * b.mu) / p;
  Eigen::VectorXd da = a.mu - mu, db = b.mu - mu;
  Eigen::MatrixXd sigma = (pa * (a.sigma + da * da.transpose()) +
                           pb * (b.sigma + db * db.transpose())) /
                          p;
  sigma = 0.5 * (sigma + sigma.transpose().eval());

  MixtureParams out;
  out.weights.resize(theta.k() - 1);
  int idx = 0;
  for (int c = 0; c < theta.k(); ++c) {
    if (c == i || c == j) continue;
    out.components.push_back(theta.components[c]);
    out.weights(idx++) = theta.weights(c);
  }
  out.components.push_back(gaussian_to_point({std::move(mu), std::move(sigma)}));
  out.weights(idx) = p;
  out.weights /= out.weights.sum();
  return out;
}

std::vector<std::pair<int, double>> split_candidates(const MixtureSpec& spec,
                                                     const MixtureParams& theta,
                                                     const DataBatch& data) {
  if (data.size() < 1) throw InsufficientDataError("split_candidates: data is empty");
  if (!spec.component.estimatedefault || !spec.component.kl)
    throw ConfigError("split_candidates: component lacks estimatedefault or kl");
  Responsibilities resp = posteriors(spec, theta, data);
  Eigen::VectorXd w = data.active_weights();
  const double total_w = w.sum();

  std::vector<std::pair<int, double>> scores;
  scores.reserve(static_cast<std::size_t>(spec.k));
  for (int j = 0; j < spec.k; ++j) {
    Eigen::VectorXd eff = w.array() * resp.r.row(j).transpose().array();
    double score = 0.0;
    // starved components have no meaningful local moment fit and are never
    // worth splitting
    if (eff.sum() >= 1e-8 * total_w) {
      try {
        auto local = spec.component.estimatedefault(data.with_weights(eff), nullptr);
        score = spec.component.kl(local.point, theta.components[j]);
      } catch (const std::exception&) {
        score = 0.0;
      }
    }
    scores.emplace_back(j, score);
  }
  std::stable_sort(scores.begin(), scores.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return scores;
}

std::vector<MergeCandidate> merge_candidates(const MixtureSpec& spec,
                                             const MixtureParams& theta,
                                             const DataBatch& data,
                                             bool use_sym_kl) {
  if (data.size() < 1) throw InsufficientDataError("merge_candidates: data is empty");
  std::vector<MergeCandidate> out;
  if (spec.k < 2) return out;

  if (use_sym_kl) {
    if (!spec.component.kl) throw ConfigError("merge_candidates: component lacks kl");
    for (int i = 0; i < spec.k; ++i)
      for (int j = i + 1; j < spec.k; ++j) {
        double skl = spec.component.kl(theta.components[i], theta.components[j]) +
                     spec.component.kl(theta.components[j], theta.components[i]);
        out.push_back({i, j, -skl});  // least-divergent pairs first
      }
  } else {
    Responsibilities resp = posteriors(spec, theta, data);
    for (int i = 0; i < spec.k; ++i)
      for (int j = i + 1; j < spec.k; ++j) {
        double ni = resp.r.row(i).norm(), nj = resp.r.row(j).norm();
        double cos = (ni > 0.0 && nj > 0.0)
                         ? resp.r.row(i).dot(resp.r.row(j)) / (ni * nj)
                         : 0.0;
        out.push_back({i, j, cos});
      }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const MergeCandidate& a, const MergeCandidate& b) {
                     return a.score > b.score;
                   });
  return out;
}

double mix_entropy_bound(const MixtureSpec& spec, const MixtureParams& theta) {
  if (!spec.component.entropy) throw ConfigError("entropy_bound: component lacks entropy");
  double h = 0.0;
  for (int j = 0; j < spec.k; ++j) {
    double p = theta.weights(j);
    h += p * (-std::log(p) + spec.component.entropy(theta.components[j]));
  }
  return h;
}

Index mix_num_free_params(const MixtureSpec& spec) {
  return static_cast<Index>(spec.k) * spec.component.num_free_params() + (spec.k - 1);
}

MixtureParams mix_init(const MixtureSpec& spec, const DataBatch& data, Rng& rng) {
  const Index n = data.size();
  if (n < 1) throw InsufficientDataError("init: data is empty");
  MixtureParams theta;
  theta.components.reserve(static_cast<std::size_t>(spec.k));

  // Distance-weighted anchor seeding over data columns, then one hard
  // assignment pass; each cell seeds its component through estimatedefault.
  Eigen::MatrixXd x = data.active_matrix();
  Eigen::VectorXd w = data.active_weights();
  auto sample_index = [&](const Eigen::VectorXd& p) -> Index {
    double total = p.sum();
    if (!(total > 0.0)) return static_cast<Index>(rng.uniform_int(0, n - 1));
    double u = rng.uniform() * total;
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      acc += p(i);
      if (u <= acc) return i;
    }
    return n - 1;
  };

  std::vector<Index> anchors;
  Eigen::VectorXd dist =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int j = 0; j < spec.k; ++j) {
    Index pick = anchors.empty()
                     ? sample_index(w)
                     : sample_index((w.array() * dist.array()).matrix());
    anchors.push_back(pick);
    for (Index i = 0; i < n; ++i)
      dist(i) = std::min(dist(i), (x.col(i) - x.col(pick)).squaredNorm());
  }

  std::vector<std::vector<Index>> cells(static_cast<std::size_t>(spec.k));
  for (Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < spec.k; ++j) {
      double d = (x.col(i) - x.col(anchors[static_cast<std::size_t>(j)])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    cells[static_cast<std::size_t>(best)].push_back(i);
  }

  Eigen::VectorXd mass(spec.k);
  for (int j = 0; j < spec.k; ++j) {
    const auto& cell = cells[static_cast<std::size_t>(j)];
    double cell_w = 0.0;
    for (Index i : cell) cell_w += w(i);
    mass(j) = cell_w;
    if (cell.size() >= 2 && cell_w > 0.0 && spec.component.has_estimatedefault()) {
      theta.components.push_back(
          spec.component.estimatedefault(data.with_subset(cell), nullptr).point);
    } else {
      theta.components.push_back(spec.component.init(data, rng));
    }
  }
  theta.weights =
      (mass / mass.sum()).cwiseMax(default_tolerances().weight_floor);
  theta.weights /= theta.weights.sum();
  return theta;
}

ManifoldPoint mixture_to_point(const MixtureSpec& spec, const MixtureParams& theta) {
  if (theta.k() != spec.k) throw DimensionError("mixture: component count mismatch");
  std::vector<ValueTree> children;
  children.reserve(static_cast<std::size_t>(spec.k) + 1);
  for (const auto& c : theta.components) children.push_back(c.value);
  children.emplace_back(Eigen::MatrixXd(theta.weights));
  return ManifoldPoint{ValueTree(std::move(children))};
}

MixtureParams point_to_mixture(const MixtureSpec& spec, const ManifoldPoint& x) {
  MixtureParams theta;
  theta.components.reserve(static_cast<std::size_t>(spec.k));
  for (int j = 0; j < spec.k; ++j)
    theta.components.push_back(ManifoldPoint{x.value.child(static_cast<std::size_t>(j))});
  theta.weights = x.value.child(static_cast<std::size_t>(spec.k)).leaf();
  return theta;
}

}  // namespace mixfit
