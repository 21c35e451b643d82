#include "mixfit/data_batch.hpp"

#include <cmath>

namespace mixfit {

namespace {

void validate_weights(const Eigen::MatrixXd& m, const Eigen::VectorXd& w) {
  if (w.size() != m.cols())
    throw DimensionError("data: weights length must equal the number of columns");
  for (Index i = 0; i < w.size(); ++i)
    if (!std::isfinite(w(i)) || w(i) < 0.0)
      throw NumericError("data: weights must be finite and >= 0");
}

}  // namespace

DataBatch::DataBatch(Eigen::MatrixXd matrix)
    : matrix_(std::make_shared<Eigen::MatrixXd>(std::move(matrix))) {
  if (matrix_->rows() < 1) throw DimensionError("data: dimension must be >= 1");
}

DataBatch::DataBatch(Eigen::MatrixXd matrix, Eigen::VectorXd weights)
    : matrix_(std::make_shared<Eigen::MatrixXd>(std::move(matrix))) {
  if (matrix_->rows() < 1) throw DimensionError("data: dimension must be >= 1");
  validate_weights(*matrix_, weights);
  weights_ = std::make_shared<Eigen::VectorXd>(std::move(weights));
}

Index DataBatch::size() const {
  return subset_ ? static_cast<Index>(subset_->size()) : matrix_->cols();
}

Index DataBatch::col_index(Index i) const {
  if (i < 0 || i >= size()) throw DimensionError("data: active index out of range");
  return subset_ ? (*subset_)[static_cast<std::size_t>(i)] : i;
}

double DataBatch::weight(Index i) const {
  Index abs = col_index(i);
  return weights_ ? (*weights_)(abs) : 1.0;
}

Eigen::VectorXd DataBatch::col(Index i) const { return matrix_->col(col_index(i)); }

DataBatch DataBatch::with_subset(const std::vector<Index>& active_indices) const {
  auto abs = std::make_shared<std::vector<Index>>();
  abs->reserve(active_indices.size());
  for (Index i : active_indices) abs->push_back(col_index(i));
  DataBatch out;
  out.matrix_ = matrix_;
  out.weights_ = weights_;
  out.subset_ = std::move(abs);
  return out;
}

DataBatch DataBatch::with_weights(const Eigen::VectorXd& active_weights) const {
  if (active_weights.size() != size())
    throw DimensionError("data: weights length must equal the active column count");
  for (Index i = 0; i < active_weights.size(); ++i)
    if (!std::isfinite(active_weights(i)) || active_weights(i) < 0.0)
      throw NumericError("data: weights must be finite and >= 0");
  // Scatter into an absolute-length vector; inactive columns get weight 0.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(matrix_->cols());
  for (Index i = 0; i < size(); ++i) w(col_index(i)) = active_weights(i);
  DataBatch out;
  out.matrix_ = matrix_;
  out.weights_ = std::make_shared<Eigen::VectorXd>(std::move(w));
  out.subset_ = subset_;
  return out;
}

DataBatch DataBatch::without_weights() const {
  DataBatch out;
  out.matrix_ = matrix_;
  out.subset_ = subset_;
  return out;
}

Eigen::MatrixXd DataBatch::active_matrix() const {
  if (!subset_) return *matrix_;
  Eigen::MatrixXd out(matrix_->rows(), size());
  for (Index i = 0; i < size(); ++i) out.col(i) = matrix_->col((*subset_)[i]);
  return out;
}

Eigen::VectorXd DataBatch::active_weights() const {
  Eigen::VectorXd out(size());
  for (Index i = 0; i < size(); ++i) out(i) = weight(i);
  return out;
}

double DataBatch::total_weight() const {
  if (!weights_) return static_cast<double>(size());
  double s = 0.0;
  for (Index i = 0; i < size(); ++i) s += weight(i);
  return s;
}

}  // namespace mixfit
