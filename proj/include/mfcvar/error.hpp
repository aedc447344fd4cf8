#pragma once

#include <stdexcept>
#include <string>

namespace mfcvar {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on a caller-supplied argument was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A factorization or solve could not be carried out to working precision.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Cholesky failed; carries the zero-based pivot where positivity was lost.
class NotPositiveDefiniteError : public NumericalError {
 public:
  NotPositiveDefiniteError(const std::string& what, long pivot)
      : NumericalError(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  long pivot() const noexcept { return pivot_; }

 private:
  long pivot_;
};

/// Weighted outputs do not carry enough probability mass for the requested risk level.
class InsufficientMassError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimensionError : public Error {
 public:
  using Error::Error;
};

/// Dataset-backed model queried at an input it does not contain.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// External model failed: nonzero exit, timeout or unparsable output.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Serialized artifact has the wrong format tag or version.
class IncompatibleArtifactError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfcvar
