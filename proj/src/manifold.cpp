#include "mixfit/manifold.hpp"

#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

namespace mixfit {

const Tolerances& default_tolerances() {
  static const Tolerances tol{};
  return tol;
}

int thread_cap() {
  if (const char* env = std::getenv("MIXFIT_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// --- descriptor -------------------------------------------------------------

ManifoldDescriptor ManifoldDescriptor::euclidean(Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw DimensionError("euclidean: rows and cols must be >= 1");
  ManifoldDescriptor m;
  m.kind_ = Kind::euclidean;
  m.rows_ = rows;
  m.cols_ = cols;
  return m;
}

ManifoldDescriptor ManifoldDescriptor::spd(Index n) {
  if (n < 1) throw DimensionError("spd: order must be >= 1");
  ManifoldDescriptor m;
  m.kind_ = Kind::spd;
  m.rows_ = n;
  m.cols_ = n;
  return m;
}

ManifoldDescriptor ManifoldDescriptor::simplex_interior(Index k) {
  if (k < 1) throw DimensionError("simplex_interior: length must be >= 1");
  ManifoldDescriptor m;
  m.kind_ = Kind::simplex_interior;
  m.rows_ = k;
  m.cols_ = 1;
  return m;
}

ManifoldDescriptor ManifoldDescriptor::product(
    std::vector<std::pair<std::string, ManifoldDescriptor>> children) {
  if (children.empty()) throw DimensionError("product: needs at least one child");
  std::set<std::string> names;
  for (const auto& [name, child] : children) {
    if (name.empty()) throw DimensionError("product: child names must be nonempty");
    if (!names.insert(name).second)
      throw DimensionError("product: duplicate child name '" + name + "'");
  }
  ManifoldDescriptor m;
  m.kind_ = Kind::product;
  m.children_ = std::move(children);
  return m;
}

Index ManifoldDescriptor::dim() const {
  switch (kind_) {
    case Kind::euclidean:
      return rows_ * cols_;
    case Kind::spd:
      return rows_ * (rows_ + 1) / 2;
    case Kind::simplex_interior:
      return rows_ - 1;
    case Kind::product: {
      Index d = 0;
      for (const auto& [name, child] : children_) d += child.dim();
      return d;
    }
  }
  return 0;
}

const std::string& ManifoldDescriptor::child_name(std::size_t i) const {
  return children_.at(i).first;
}

const ManifoldDescriptor& ManifoldDescriptor::child(std::size_t i) const {
  return children_.at(i).second;
}

std::size_t ManifoldDescriptor::child_index(const std::string& name) const {
  for (std::size_t i = 0; i < children_.size(); ++i)
    if (children_[i].first == name) return i;
  throw DimensionError("product: no child named '" + name + "'");
}

// --- value tree -------------------------------------------------------------

const Eigen::MatrixXd& ValueTree::leaf() const {
  if (!leaf_) throw DimensionError("value: expected a leaf, found a product");
  return mat_;
}

Eigen::MatrixXd& ValueTree::leaf() {
  if (!leaf_) throw DimensionError("value: expected a leaf, found a product");
  return mat_;
}

const ValueTree& ValueTree::child(std::size_t i) const {
  if (leaf_) throw DimensionError("value: expected a product, found a leaf");
  return children_.at(i);
}

ValueTree& ValueTree::child(std::size_t i) {
  if (leaf_) throw DimensionError("value: expected a product, found a leaf");
  return children_.at(i);
}

// --- helpers ---------------------------------------------------------------

namespace {

void check_leaf_shape(const ManifoldDescriptor& m, const ValueTree& v,
                      const char* what) {
  if (m.kind() == ManifoldDescriptor::Kind::product) {
    if (v.is_leaf() || v.num_children() != m.num_children())
      throw DimensionError(std::string(what) + ": product arity mismatch");
    return;
  }
  if (!v.is_leaf()) throw DimensionError(std::string(what) + ": expected a leaf value");
  if (v.leaf().rows() != m.rows() || v.leaf().cols() != m.cols())
    throw DimensionError(std::string(what) + ": leaf shape mismatch");
}

// Relative infinity-norm asymmetry.
double asymmetry(const Eigen::MatrixXd& a) {
  double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

Eigen::LLT<Eigen::MatrixXd> cholesky_or_throw(const Eigen::MatrixXd& x,
                                              const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(x);
  if (llt.info() != Eigen::Success)
    throw NotSpdError(std::string(what) + ": Cholesky factorization failed");
  return llt;
}

// Principal square root of an SPD matrix via eigendecomposition; throws
// NumericError when the solver does not converge.
Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& x, bool inverse = false) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x);
  if (es.info() != Eigen::Success)
    throw NumericError("spd_sqrt: eigendecomposition did not converge");
  Eigen::VectorXd ev = es.eigenvalues();
  if ((ev.array() <= 0.0).any())
    throw NotSpdError("spd_sqrt: nonpositive eigenvalue");
  Eigen::VectorXd root = ev.array().sqrt();
  if (inverse) root = root.cwiseInverse();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Fn>
ValueTree map_product(const ManifoldDescriptor& m, Fn&& leaf_op) {
  std::vector<ValueTree> out;
  out.reserve(m.num_children());
  for (std::size_t i = 0; i < m.num_children(); ++i) out.push_back(leaf_op(i));
  return ValueTree(std::move(out));
}

}  // namespace

// --- validity ---------------------------------------------------------------

void check_point(const ManifoldDescriptor& m, const ManifoldPoint& x,
                 const Tolerances& tol) {
  check_leaf_shape(m, x.value, "point");
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      if (!x.value.leaf().allFinite()) throw NumericError("point: non-finite entries");
      break;
    case ManifoldDescriptor::Kind::spd: {
      const Eigen::MatrixXd& s = x.value.leaf();
      if (!s.allFinite()) throw NumericError("point: non-finite entries");
      if (asymmetry(s) > tol.check_tol) throw NotSpdError("point: matrix is not symmetric");
      cholesky_or_throw(s, "point");
      break;
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      const Eigen::MatrixXd& p = x.value.leaf();
      if (!p.allFinite()) throw NumericError("point: non-finite entries");
      if ((p.array() <= 0.0).any())
        throw NumericError("point: simplex entries must be strictly positive");
      if (std::abs(p.sum() - 1.0) > tol.check_tol)
        throw NumericError("point: simplex entries must sum to 1");
      break;
    }
    case ManifoldDescriptor::Kind::product:
      for (std::size_t i = 0; i < m.num_children(); ++i)
        check_point(m.child(i), ManifoldPoint{x.value.child(i)}, tol);
      break;
  }
}

bool is_valid_point(const ManifoldDescriptor& m, const ManifoldPoint& x,
                    const Tolerances& tol) {
  try {
    check_point(m, x, tol);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void check_tangent(const ManifoldDescriptor& m, const ManifoldPoint& x,
                   const TangentVector& u, const Tolerances& tol) {
  check_leaf_shape(m, x.value, "point");
  check_leaf_shape(m, u.value, "tangent");
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      if (!u.value.leaf().allFinite()) throw NumericError("tangent: non-finite entries");
      break;
    case ManifoldDescriptor::Kind::spd:
      if (!u.value.leaf().allFinite()) throw NumericError("tangent: non-finite entries");
      if (asymmetry(u.value.leaf()) > tol.check_tol)
        throw NotSpdError("tangent: matrix is not symmetric");
      break;
    case ManifoldDescriptor::Kind::simplex_interior: {
      const Eigen::MatrixXd& t = u.value.leaf();
      if (!t.allFinite()) throw NumericError("tangent: non-finite entries");
      double scale = std::max(1.0, t.cwiseAbs().sum());
      if (std::abs(t.sum()) > tol.check_tol * scale)
        throw NumericError("tangent: simplex tangent must sum to 0");
      break;
    }
    case ManifoldDescriptor::Kind::product:
      for (std::size_t i = 0; i < m.num_children(); ++i)
        check_tangent(m.child(i), ManifoldPoint{x.value.child(i)},
                      TangentVector{u.value.child(i)}, tol);
      break;
  }
}

// --- metric -----------------------------------------------------------------

double inner(const ManifoldDescriptor& m, const ManifoldPoint& x,
             const TangentVector& u, const TangentVector& v) {
  check_leaf_shape(m, x.value, "point");
  check_leaf_shape(m, u.value, "tangent");
  check_leaf_shape(m, v.value, "tangent");
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      return u.value.leaf().cwiseProduct(v.value.leaf()).sum();
    case ManifoldDescriptor::Kind::spd: {
      auto llt = cholesky_or_throw(x.value.leaf(), "inner");
      Eigen::MatrixXd a = llt.solve(u.value.leaf());
      Eigen::MatrixXd b = llt.solve(v.value.leaf());
      return a.cwiseProduct(b.transpose()).sum();  // tr(AB)
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      const auto& p = x.value.leaf().array();
      return (u.value.leaf().array() * v.value.leaf().array() / p).sum();
    }
    case ManifoldDescriptor::Kind::product: {
      double s = 0.0;
      for (std::size_t i = 0; i < m.num_children(); ++i)
        s += inner(m.child(i), ManifoldPoint{x.value.child(i)},
                   TangentVector{u.value.child(i)}, TangentVector{v.value.child(i)});
      return s;
    }
  }
  return 0.0;
}

double norm(const ManifoldDescriptor& m, const ManifoldPoint& x,
            const TangentVector& u) {
  return std::sqrt(std::max(0.0, inner(m, x, u, u)));
}

TangentVector lincomb(const ManifoldDescriptor& m, const ManifoldPoint& x,
                      double a, const TangentVector& u, double b,
                      const TangentVector& v) {
  check_leaf_shape(m, u.value, "tangent");
  check_leaf_shape(m, v.value, "tangent");
  if (m.kind() == ManifoldDescriptor::Kind::product) {
    ValueTree out = map_product(m, [&](std::size_t i) {
      return lincomb(m.child(i), ManifoldPoint{x.value.child(i)}, a,
                     TangentVector{u.value.child(i)}, b, TangentVector{v.value.child(i)})
          .value;
    });
    return TangentVector{std::move(out)};
  }
  return TangentVector{ValueTree(a * u.value.leaf() + b * v.value.leaf())};
}

TangentVector zero_tangent(const ManifoldDescriptor& m, const ManifoldPoint& x) {
  check_leaf_shape(m, x.value, "point");
  if (m.kind() == ManifoldDescriptor::Kind::product) {
    ValueTree out = map_product(m, [&](std::size_t i) {
      return zero_tangent(m.child(i), ManifoldPoint{x.value.child(i)}).value;
    });
    return TangentVector{std::move(out)};
  }
  return TangentVector{ValueTree(Eigen::MatrixXd::Zero(m.rows(), m.cols()))};
}

// --- retraction --------------------------------------------------------------

ManifoldPoint retract(const ManifoldDescriptor& m, const ManifoldPoint& x,
                      const TangentVector& u, double step, const Tolerances& tol) {
  check_leaf_shape(m, x.value, "point");
  check_leaf_shape(m, u.value, "tangent");
  if (!std::isfinite(step)) throw NumericError("retract: step must be finite");
  if (step == 0.0) return x;  // retraction axiom, exact

  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean: {
      Eigen::MatrixXd r = x.value.leaf() + step * u.value.leaf();
      if (!r.allFinite()) throw NumericError("retract: non-finite result");
      return ManifoldPoint{ValueTree(std::move(r))};
    }
    case ManifoldDescriptor::Kind::spd: {
      const Eigen::MatrixXd& X = x.value.leaf();
      const Eigen::MatrixXd& U = u.value.leaf();
      auto llt = cholesky_or_throw(X, "retract");
      Eigen::MatrixXd XinvU = llt.solve(U);
      Eigen::MatrixXd r = X + step * U + (0.5 * step * step) * (U * XinvU);
      r = 0.5 * (r + r.transpose().eval());
      if (!r.allFinite()) throw NumericError("retract: non-finite result");
      return ManifoldPoint{ValueTree(std::move(r))};
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      const auto& p = x.value.leaf().array();
      Eigen::ArrayXd e = step * u.value.leaf().array() / p;
      e -= e.maxCoeff();  // shift cancels in normalization
      Eigen::ArrayXd q = p * e.exp();
      double z = q.sum();
      if (!(z > 0.0) || !std::isfinite(z)) throw NumericError("retract: non-finite result");
      q /= z;
      q = q.max(tol.weight_floor);
      q /= q.sum();
      return ManifoldPoint{ValueTree(Eigen::MatrixXd(q.matrix()))};
    }
    case ManifoldDescriptor::Kind::product: {
      ValueTree out = map_product(m, [&](std::size_t i) {
        return retract(m.child(i), ManifoldPoint{x.value.child(i)},
                       TangentVector{u.value.child(i)}, step, tol)
            .value;
      });
      return ManifoldPoint{std::move(out)};
    }
  }
  return x;
}

// --- gradient conversion ------------------------------------------------------

TangentVector egrad_to_rgrad(const ManifoldDescriptor& m, const ManifoldPoint& x,
                             const ValueTree& egrad) {
  check_leaf_shape(m, x.value, "point");
  check_leaf_shape(m, egrad, "gradient");
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      return TangentVector{egrad};
    case ManifoldDescriptor::Kind::spd: {
      const Eigen::MatrixXd& X = x.value.leaf();
      const Eigen::MatrixXd& G = egrad.leaf();
      Eigen::MatrixXd sym = 0.5 * (G + G.transpose());
      return TangentVector{ValueTree(X * sym * X)};
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      const auto& p = x.value.leaf().array();
      const auto& g = egrad.leaf().array();
      double dot = (p * g).sum();
      Eigen::ArrayXd r = p * g - dot * p;
      return TangentVector{ValueTree(Eigen::MatrixXd(r.matrix()))};
    }
    case ManifoldDescriptor::Kind::product: {
      ValueTree out = map_product(m, [&](std::size_t i) {
        return egrad_to_rgrad(m.child(i), ManifoldPoint{x.value.child(i)},
                              egrad.child(i))
            .value;
      });
      return TangentVector{std::move(out)};
    }
  }
  return TangentVector{egrad};
}

// --- transport ----------------------------------------------------------------

TangentVector transport(const ManifoldDescriptor& m, const ManifoldPoint& from,
                        const ManifoldPoint& to, const TangentVector& u) {
  check_leaf_shape(m, from.value, "point");
  check_leaf_shape(m, to.value, "point");
  check_leaf_shape(m, u.value, "tangent");
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      return u;
    case ManifoldDescriptor::Kind::spd: {
      const Eigen::MatrixXd& X1 = from.value.leaf();
      const Eigen::MatrixXd& X2 = to.value.leaf();
      try {
        // E = X1^(1/2) (X1^(-1/2) X2 X1^(-1/2))^(1/2) X1^(-1/2) solves E X1 E' = X2.
        Eigen::MatrixXd r1 = spd_sqrt(X1);
        Eigen::MatrixXd r1i = spd_sqrt(X1, /*inverse=*/true);
        Eigen::MatrixXd mid = spd_sqrt(r1i * X2 * r1i);
        Eigen::MatrixXd e = r1 * mid * r1i;
        Eigen::MatrixXd t = e * u.value.leaf() * e.transpose();
        t = 0.5 * (t + t.transpose().eval());
        if (!t.allFinite()) throw NumericError("transport: non-finite result");
        return TangentVector{ValueTree(std::move(t))};
      } catch (const std::exception&) {
        // Projection transport: identity then symmetrize.
        Eigen::MatrixXd t = 0.5 * (u.value.leaf() + u.value.leaf().transpose());
        return TangentVector{ValueTree(std::move(t))};
      }
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      Eigen::MatrixXd t = u.value.leaf();
      t.array() -= t.sum() / static_cast<double>(t.rows());
      return TangentVector{ValueTree(std::move(t))};
    }
    case ManifoldDescriptor::Kind::product: {
      ValueTree out = map_product(m, [&](std::size_t i) {
        return transport(m.child(i), ManifoldPoint{from.value.child(i)},
                         ManifoldPoint{to.value.child(i)},
                         TangentVector{u.value.child(i)})
            .value;
      });
      return TangentVector{std::move(out)};
    }
  }
  return u;
}

// --- random elements ------------------------------------------------------------

namespace {

Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Eigen::MatrixXd a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = rng.normal();
  return a;
}

}  // namespace

ManifoldPoint rand_point(const ManifoldDescriptor& m, Rng& rng, const Tolerances& tol) {
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      return ManifoldPoint{ValueTree(gaussian_matrix(m.rows(), m.cols(), rng))};
    case ManifoldDescriptor::Kind::spd: {
      Eigen::MatrixXd a = gaussian_matrix(m.rows(), m.rows(), rng);
      Eigen::MatrixXd x = a * a.transpose();
      x += tol.spd_jitter * Eigen::MatrixXd::Identity(m.rows(), m.rows());
      return ManifoldPoint{ValueTree(std::move(x))};
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      // Dirichlet(1,..,1) via normalized exponentials, then floor clamp.
      Eigen::ArrayXd e(m.rows());
      for (Index i = 0; i < m.rows(); ++i) e(i) = -std::log(1.0 - rng.uniform());
      e /= e.sum();
      e = e.max(tol.weight_floor);
      e /= e.sum();
      return ManifoldPoint{ValueTree(Eigen::MatrixXd(e.matrix()))};
    }
    case ManifoldDescriptor::Kind::product: {
      ValueTree out = map_product(m, [&](std::size_t i) {
        return rand_point(m.child(i), rng, tol).value;
      });
      return ManifoldPoint{std::move(out)};
    }
  }
  throw DimensionError("rand_point: unknown manifold kind");
}

TangentVector rand_tangent(const ManifoldDescriptor& m, const ManifoldPoint& x,
                           Rng& rng) {
  check_leaf_shape(m, x.value, "point");
  switch (m.kind()) {
    case ManifoldDescriptor::Kind::euclidean:
      return TangentVector{ValueTree(gaussian_matrix(m.rows(), m.cols(), rng))};
    case ManifoldDescriptor::Kind::spd: {
      Eigen::MatrixXd a = gaussian_matrix(m.rows(), m.rows(), rng);
      return TangentVector{ValueTree(Eigen::MatrixXd(0.5 * (a + a.transpose())))};
    }
    case ManifoldDescriptor::Kind::simplex_interior: {
      Eigen::MatrixXd t = gaussian_matrix(m.rows(), 1, rng);
      t.array() -= t.sum() / static_cast<double>(m.rows());
      return TangentVector{ValueTree(std::move(t))};
    }
    case ManifoldDescriptor::Kind::product: {
      ValueTree out = map_product(m, [&](std::size_t i) {
        return rand_tangent(m.child(i), ManifoldPoint{x.value.child(i)}, rng).value;
      });
      return TangentVector{std::move(out)};
    }
  }
  throw DimensionError("rand_tangent: unknown manifold kind");
}

}  // namespace mixfit
