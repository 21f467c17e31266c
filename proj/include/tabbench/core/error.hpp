#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tabbench {

/// Root of every error the harness throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV structure, JSON syntax, ISO dates).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A cell that failed to parse as its declared kind.
class TypedCellError : public ParseError {
 public:
  TypedCellError(std::size_t row, std::string column, const std::string& what)
      : ParseError("row " + std::to_string(row) + ", column '" + column + "': " + what),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Manifest or table layout does not match what was declared.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class AdapterError : public Error {
 public:
  using Error::Error;
};

class StudyError : public Error {
 public:
  using Error::Error;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabbench
