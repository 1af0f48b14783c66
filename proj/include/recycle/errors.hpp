#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recycle {

// Base of every error raised by the library. Callers that only need a message
// can catch this; the subclasses exist so tests and the CLI can tell the
// failure classes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or insufficient input data (CSV contents, series lengths, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor or sample shapes that do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A cycle row lacks enough same-category history for a profile.
class WarmupError : public InputError {
 public:
  WarmupError(const std::string& what, std::size_t earliest_valid_row)
      : InputError(what), earliest_valid_row_(earliest_valid_row) {}

  std::size_t earliest_valid_row() const noexcept { return earliest_valid_row_; }

 private:
  std::size_t earliest_valid_row_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace recycle
