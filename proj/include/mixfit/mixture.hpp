#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "mixfit/data_batch.hpp"
#include "mixfit/distribution.hpp"
#include "mixfit/manifold.hpp"

namespace mixfit {

// Weighted combination of K components sharing one DistributionSpec.
// Component parameters are points on the component manifold; the weight
// vector lives on the interior of the simplex.
struct MixtureParams {
  std::vector<ManifoldPoint> components;
  Eigen::VectorXd weights;
  int k() const { return static_cast<int>(components.size()); }
};

// Component spec plus K; the parameter manifold is the product of K component
// manifolds ("c0".."c{K-1}") and one simplex_interior(K) named "p".
struct MixtureSpec {
  DistributionSpec component;
  int k = 0;
  ManifoldDescriptor manifold;

  static MixtureSpec make(DistributionSpec component, int k);
};

// Per-datum posterior over components; column i sums to 1.
struct Responsibilities {
  Eigen::MatrixXd r;  // K x N_active
};

struct MixSample {
  Eigen::MatrixXd data;     // d x n
  std::vector<int> labels;  // component index per draw
};

struct MergeCandidate {
  int i = 0;
  int j = 0;
  double score = 0.0;
};

// Matrix of unweighted component log-likelihoods, row j = component j,
// column i = active datum i. Shared building block for llvec, posteriors and
// gradients; evaluates components in parallel up to the MIXFIT_THREADS cap.
Eigen::MatrixXd component_ll_matrix(const MixtureSpec& spec,
                                    const MixtureParams& theta,
                                    const DataBatch& data);

// Entry i = w_i * logsumexp_j( ln p_j + ll_j(x_i) ), max-shifted.
Eigen::VectorXd mix_llvec(const MixtureSpec& spec, const MixtureParams& theta,
                          const DataBatch& data);
double mix_ll(const MixtureSpec& spec, const MixtureParams& theta,
              const DataBatch& data);

// Ambient gradient over the mixture product manifold: component j's slot
// carries the component gradient under effective weights w_i r_ij; the "p"
// slot carries d/dp_j = sum_i w_i r_ij / p_j.
ValueTree mix_llgrad(const MixtureSpec& spec, const MixtureParams& theta,
                     const DataBatch& data);

Responsibilities posteriors(const MixtureSpec& spec, const MixtureParams& theta,
                            const DataBatch& data);

MixSample mix_sample(const MixtureSpec& spec, const MixtureParams& theta,
                     Index n, Rng& rng);

// Replaces component j by two offspring displaced along the principal axis of
// its covariance, each carrying half of its weight. Requires gaussian-shaped
// component parameters.
MixtureParams split_component(const MixtureSpec& spec, const MixtureParams& theta,
                              int j, Rng& rng);

// Moment-preserving merge of components i and j.
MixtureParams merge_components(const MixtureSpec& spec, const MixtureParams& theta,
                               int i, int j);

// Components ranked by KL(local moment fit || current component), descending.
std::vector<std::pair<int, double>> split_candidates(const MixtureSpec& spec,
                                                     const MixtureParams& theta,
                                                     const DataBatch& data);

// Pairs ranked by responsibility-row cosine similarity (descending), or by
// ascending symmetric KL when use_sym_kl is set.
std::vector<MergeCandidate> merge_candidates(const MixtureSpec& spec,
                                             const MixtureParams& theta,
                                             const DataBatch& data,
                                             bool use_sym_kl = false);

// sum_j p_j (-ln p_j + entropy_j): the label-entropy-plus-conditional-entropy
// bound on the (intractable) mixture entropy. Exact for K = 1.
double mix_entropy_bound(const MixtureSpec& spec, const MixtureParams& theta);

// K * component free params + (K-1).
Index mix_num_free_params(const MixtureSpec& spec);

// K seeded component initializers plus uniform weights.
MixtureParams mix_init(const MixtureSpec& spec, const DataBatch& data, Rng& rng);

// --- product-manifold plumbing ------------------------------------------------

ManifoldPoint mixture_to_point(const MixtureSpec& spec, const MixtureParams& theta);
MixtureParams point_to_mixture(const MixtureSpec& spec, const ManifoldPoint& x);

void check_mixture(const MixtureSpec& spec, const MixtureParams& theta,
                   const Tolerances& tol = default_tolerances());

}  // namespace mixfit
