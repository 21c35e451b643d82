#include "mixfit/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <vector>

namespace mixfit {

namespace {

double parse_field(const std::string& field, std::size_t line_no) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw CsvError("csv: non-numeric value '" + field + "' at line " +
                   std::to_string(line_no));
  return value;
}

}  // namespace

Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("csv: cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      // allow a trailing blank line only
      if (in.peek() != EOF)
        throw CsvError("csv: blank line at line " + std::to_string(line_no));
      break;
    }
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      std::string field = line.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      row.push_back(parse_field(field, line_no));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw CsvError("csv: ragged row at line " + std::to_string(line_no) +
                     " (expected " + std::to_string(width) + " fields, got " +
                     std::to_string(row.size()) + ")");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CsvError("csv: '" + path + "' contains no data");

  Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& rows) {
  std::ofstream out(path);
  if (!out) throw CsvError("csv: cannot write '" + path + "'");
  char buf[64];
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", rows(i, j));
      out << buf;
      if (j + 1 < rows.cols()) out << ',';
    }
    out << '\n';
  }
  if (!out) throw CsvError("csv: write to '" + path + "' failed");
}

CsvData load_data_csv(const std::string& path, std::optional<int> weights_column) {
  Eigen::MatrixXd rows = read_csv_matrix(path);
  CsvData out;
  if (!weights_column) {
    out.data = rows.transpose();
    return out;
  }
  int wc = *weights_column;
  if (wc < 0 || wc >= rows.cols())
    throw CsvError("csv: weights column " + std::to_string(wc) + " out of range");
  if (rows.cols() < 2)
    throw CsvError("csv: no data columns besides the weights column");
  out.weights = rows.col(wc);
  Eigen::MatrixXd data(rows.rows(), rows.cols() - 1);
  Index k = 0;
  for (Index j = 0; j < rows.cols(); ++j) {
    if (j == wc) continue;
    data.col(k++) = rows.col(j);
  }
  out.data = data.transpose();
  return out;
}

}  // namespace mixfit
