#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "mixfit/errors.hpp"

namespace mixfit {

using Index = Eigen::Index;

// Strict numeric CSV (RFC-4180 subset: comma-separated, '.' decimal, LF or
// CRLF line ends, no quoting). One row per record; every row must have the
// same number of fields. Throws CsvError with a line number on bad input.
Eigen::MatrixXd read_csv_matrix(const std::string& path);

// Writes with 17 significant digits so values round-trip exactly.
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& rows);

struct CsvData {
  Eigen::MatrixXd data;  // d x N, one column per datum
  std::optional<Eigen::VectorXd> weights;
};

// Loads row-per-datum CSV into the column-per-datum layout; weights_column
// (0-based) extracts one column as per-datum weights.
CsvData load_data_csv(const std::string& path, std::optional<int> weights_column = {});

}  // namespace mixfit
