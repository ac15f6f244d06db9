#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coherence {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, missing or mistyped field).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a model invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Newton iteration did not reach tolerance. Carries the residual trace.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residual_history);

  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, double condition_estimate);

  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

/// A numerical precondition of an analysis step does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace coherence
