#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "mixfit/config.hpp"
#include "mixfit/errors.hpp"
#include "mixfit/rng.hpp"

namespace mixfit {

using Index = Eigen::Index;

// Parameter-space geometry: Euclidean matrices, symmetric positive-definite
// matrices, the open probability simplex, and named products of these.
// A descriptor is an immutable value; every operation below is a pure
// function of its inputs.
class ManifoldDescriptor {
 public:
  enum class Kind { euclidean, spd, simplex_interior, product };

  static ManifoldDescriptor euclidean(Index rows, Index cols = 1);
  static ManifoldDescriptor spd(Index n);
  static ManifoldDescriptor simplex_interior(Index k);
  static ManifoldDescriptor product(
      std::vector<std::pair<std::string, ManifoldDescriptor>> children);

  Kind kind() const { return kind_; }

  // Leaf value shape: euclidean r x c, spd n x n, simplex k x 1.
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  // Intrinsic dimension: r*c, n(n+1)/2, k-1, or the sum over children.
  Index dim() const;

  std::size_t num_children() const { return children_.size(); }
  const std::string& child_name(std::size_t i) const;
  const ManifoldDescriptor& child(std::size_t i) const;
  std::size_t child_index(const std::string& name) const;

  // Placeholder state; use the factories above to build real descriptors.
  ManifoldDescriptor() = default;

 private:
  Kind kind_ = Kind::euclidean;
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<std::pair<std::string, ManifoldDescriptor>> children_;
};

// Value storage shared by points, tangents and ambient gradients: a matrix
// leaf, or an ordered list of children matching a product descriptor.
class ValueTree {
 public:
  ValueTree() = default;
  explicit ValueTree(Eigen::MatrixXd leaf) : mat_(std::move(leaf)), leaf_(true) {}
  explicit ValueTree(std::vector<ValueTree> children)
      : children_(std::move(children)), leaf_(false) {}

  bool is_leaf() const { return leaf_; }

  const Eigen::MatrixXd& leaf() const;
  Eigen::MatrixXd& leaf();

  std::size_t num_children() const { return children_.size(); }
  const ValueTree& child(std::size_t i) const;
  ValueTree& child(std::size_t i);

 private:
  Eigen::MatrixXd mat_;
  std::vector<ValueTree> children_;
  bool leaf_ = true;
};

struct ManifoldPoint {
  ValueTree value;
};

struct TangentVector {
  ValueTree value;
};

// --- validity -------------------------------------------------------------

// Throws DimensionError / NotSpdError / NumericError when the value violates
// the descriptor's type invariants.
void check_point(const ManifoldDescriptor& m, const ManifoldPoint& x,
                 const Tolerances& tol = default_tolerances());
void check_tangent(const ManifoldDescriptor& m, const ManifoldPoint& x,
                   const TangentVector& u,
                   const Tolerances& tol = default_tolerances());
bool is_valid_point(const ManifoldDescriptor& m, const ManifoldPoint& x,
                    const Tolerances& tol = default_tolerances());

// --- metric and tangent arithmetic -----------------------------------------

// Riemannian inner product at x. Euclidean: Frobenius. SPD: affine-invariant
// tr(X^-1 U X^-1 V). Simplex interior: Fisher metric sum_i u_i v_i / p_i.
double inner(const ManifoldDescriptor& m, const ManifoldPoint& x,
             const TangentVector& u, const TangentVector& v);

double norm(const ManifoldDescriptor& m, const ManifoldPoint& x,
            const TangentVector& u);

// Componentwise a*u + b*v.
TangentVector lincomb(const ManifoldDescriptor& m, const ManifoldPoint& x,
                      double a, const TangentVector& u, double b,
                      const TangentVector& v);

TangentVector zero_tangent(const ManifoldDescriptor& m, const ManifoldPoint& x);

// --- retraction, gradient conversion, transport ----------------------------

// Euclidean: X + tU. SPD: second-order polynomial retraction
// X + tU + (t^2/2) U X^-1 U, positive definite for every t. Simplex interior:
// exponentiate componentwise along tU/p, renormalize, clamp to the weight
// floor and renormalize again.
ManifoldPoint retract(const ManifoldDescriptor& m, const ManifoldPoint& x,
                      const TangentVector& u, double step,
                      const Tolerances& tol = default_tolerances());

// Converts an ambient (Euclidean) gradient into the Riemannian gradient.
// Euclidean: identity. SPD: X sym(G) X. Simplex: (p o g) - (p'g) p.
TangentVector egrad_to_rgrad(const ManifoldDescriptor& m,
                             const ManifoldPoint& x, const ValueTree& egrad);

// Moves a tangent at `from` to a tangent at `to`. Euclidean: identity.
// SPD: E U E' with E = (X2 X1^-1)^(1/2); falls back to the symmetrized
// identity transport when the matrix root fails to converge. Simplex:
// re-center to sum zero.
TangentVector transport(const ManifoldDescriptor& m, const ManifoldPoint& from,
                        const ManifoldPoint& to, const TangentVector& u);

// --- random elements --------------------------------------------------------

ManifoldPoint rand_point(const ManifoldDescriptor& m, Rng& rng,
                         const Tolerances& tol = default_tolerances());
TangentVector rand_tangent(const ManifoldDescriptor& m, const ManifoldPoint& x,
                           Rng& rng);

}  // namespace mixfit
