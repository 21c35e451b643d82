#pragma once

#include <stdexcept>
#include <string>

namespace mixfit {

// Shape disagreement between an argument and a descriptor or data matrix.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// A matrix required to be symmetric positive definite failed its Cholesky test.
class NotSpdError : public std::runtime_error {
 public:
  explicit NotSpdError(const std::string& what) : std::runtime_error(what) {}
};

// A non-finite value was produced where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Too few observations (or too little total weight) for the requested estimate.
class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or mutually exclusive option settings.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class CsvError : public std::runtime_error {
 public:
  explicit CsvError(const std::string& what) : std::runtime_error(what) {}
};

class ModelFileError : public std::runtime_error {
 public:
  explicit ModelFileError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mixfit
