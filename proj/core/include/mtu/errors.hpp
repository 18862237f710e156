#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mtu {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Symmetric factorization broke down; `pivot()` is the offending row.
class NotSpdError : public Error {
 public:
  NotSpdError(std::size_t pivot, double value)
      : Error("matrix is not symmetric positive-definite: pivot " +
              std::to_string(pivot) + " = " + std::to_string(value)),
        pivot_(pivot),
        value_(value) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

/// Invalid configuration; `field()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)), message_(message) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Parameters became NaN/Inf during a run.
class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(int step)
      : Error("non-finite parameters at step " + std::to_string(step)),
        step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace mtu
