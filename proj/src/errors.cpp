#include "coherence/errors.hpp"

#include <sstream>
#include <utility>

namespace coherence {

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << "; ";
    os << v[i];
  }
  return os.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error("validation failed: " + join_violations(violations)), violations_(std::move(violations)) {}

ConvergenceError::ConvergenceError(const std::string& what, std::vector<double> residual_history)
    : Error(what), history_(std::move(residual_history)) {}

SingularMatrixError::SingularMatrixError(const std::string& what, double condition_estimate)
    : Error(what), condition_(condition_estimate) {}

}  // namespace coherence
