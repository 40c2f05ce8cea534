#pragma once

#include <stdexcept>
#include <string>

namespace fmu {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument values or mismatched dimensions.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (matrix bundle, measurement CSV, model dump, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Singular or ill-conditioned dynamic stiffness matrix.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: indefinite mass matrix, rank-deficient regression,
/// covariance that cannot be factorized even after maximum jitter.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Division by a zero measured amplitude and similar domain violations.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Optimizer could not produce a finite objective.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fmu
