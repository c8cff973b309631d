#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metagate {

/// Base for every domain error raised by the library. The CLI maps these to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV content. `row` is 1-based and counts the header as row 1.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// A candle or series invariant does not hold.
class ValidationError : public Error {
 public:
  ValidationError(std::size_t index, std::string invariant, const std::string& where)
      : Error(where + ": invariant violated: " + invariant),
        index_(index),
        invariant_(std::move(invariant)) {}
  std::size_t index() const noexcept { return index_; }
  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::size_t index_;
  std::string invariant_;
};

/// Precondition failures on otherwise well-formed data (index range, window length...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class InsufficientHistoryError : public DomainError {
 public:
  using DomainError::DomainError;
};

class FeatureError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace metagate
