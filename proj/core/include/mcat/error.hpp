#pragma once

#include <stdexcept>
#include <string>

namespace mcat {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not conform for the requested primitive.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf reached a check barrier.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (backward on a non-scalar, updating a
/// frozen generator, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `path()` names the offending field when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string path = {})
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Input data violates a precondition (empty class, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file. `row()` is 1-based, 0 when the error is not row-specific.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message, std::size_t row = 0)
      : Error(row == 0 ? message : "row " + std::to_string(row) + ": " + message), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (missing input, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcat
