#pragma once

#include <stdexcept>
#include <string>

namespace cslab {

// Shape or dimension mismatch between tensors.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid user-facing configuration (bad sizes, unknown keys, missing files
// the user was supposed to provide).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure inside an algorithm.
class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Iterative method failed to converge; carries the last estimate so callers
// can inspect how far it got.
class ConvergenceError : public NumericsError {
 public:
  ConvergenceError(const std::string& msg, double last_estimate)
      : NumericsError(msg), last_estimate_(last_estimate) {}
  double last_estimate() const { return last_estimate_; }

 private:
  double last_estimate_;
};

// File format, checksum, or serialization failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training aborted (non-finite loss, mismatched artifacts).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cslab
