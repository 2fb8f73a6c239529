#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bbgp {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures (exit code 3 in the CLI).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(std::size_t pivot)
      : NumericalError("matrix is not positive definite (pivot " +
                       std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  std::size_t pivot() const { return pivot_; }

 private:
  std::size_t pivot_;
};

class NoConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// CG search direction with non-positive curvature, or a Lanczos step
// requested after an invariant subspace was found.
class Breakdown : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularShift : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonPositiveRitzValue : public NumericalError {
 public:
  explicit NonPositiveRitzValue(double value)
      : NumericalError("non-positive Ritz value " + std::to_string(value)),
        value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

// Data errors (exit code 2 in the CLI).
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : DataError("parse error at row " + std::to_string(row) + ", column " +
                  std::to_string(column) + ": " + what),
        row_(row),
        column_(column) {}
  // 1-based data row (header excluded) and 1-based column.
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class MissingTarget : public DataError {
 public:
  using DataError::DataError;
};

class ConstantColumn : public DataError {
 public:
  explicit ConstantColumn(const std::string& column)
      : DataError("constant column '" + column + "'"), column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : Error("length mismatch: " + std::to_string(a) + " vs " +
              std::to_string(b)) {}
};

}  // namespace bbgp
