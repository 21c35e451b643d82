#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "mixfit/errors.hpp"

namespace mixfit {

using Index = Eigen::Index;

// Column-oriented data: a d x N matrix whose columns are data points, an
// optional per-datum weight vector, and an optional index subset selecting a
// view of the columns. Views share the underlying storage, so mini-batching
// never copies the data matrix. Immutable; safe to share across threads.
class DataBatch {
 public:
  explicit DataBatch(Eigen::MatrixXd matrix);
  DataBatch(Eigen::MatrixXd matrix, Eigen::VectorXd weights);

  // View over a subset of the currently active columns (indices are relative
  // to the active view, composing with any existing subset).
  DataBatch with_subset(const std::vector<Index>& active_indices) const;
  // Same storage and subset, new weights (one per active column).
  DataBatch with_weights(const Eigen::VectorXd& active_weights) const;
  // Same storage and subset, unit weights.
  DataBatch without_weights() const;

  Index dim() const { return matrix_->rows(); }
  Index size() const;  // number of active columns
  bool has_weights() const { return weights_ != nullptr; }
  bool has_subset() const { return subset_ != nullptr; }

  // Absolute column index of active column i.
  Index col_index(Index i) const;
  double weight(Index i) const;  // weight of active column i (1 when unweighted)
  Eigen::VectorXd col(Index i) const;

  // Gathered copies of the active view. When no subset is present,
  // active_matrix() returns the underlying matrix without copying.
  const Eigen::MatrixXd& storage() const { return *matrix_; }
  Eigen::MatrixXd active_matrix() const;
  Eigen::VectorXd active_weights() const;  // all ones when unweighted
  double total_weight() const;

 private:
  DataBatch() = default;
  std::shared_ptr<const Eigen::MatrixXd> matrix_;
  std::shared_ptr<const Eigen::VectorXd> weights_;          // length N, absolute
  std::shared_ptr<const std::vector<Index>> subset_;        // absolute indices
};

}  // namespace mixfit
