#pragma once

#include <stdexcept>
#include <string>

namespace beamsched {

// Raised when a user-supplied value violates a type invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures of the single-user solvers.
class SolverError : public std::runtime_error {
 public:
  enum class Kind { NoConvergence, SingularSystem, DegenerateChain, BracketFailure };

  SolverError(Kind kind, const std::string& what, double residual = 0.0)
      : std::runtime_error(what), kind_(kind), residual_(residual) {}

  Kind kind() const noexcept { return kind_; }
  // Last residual (NoConvergence) or pivot magnitude (SingularSystem).
  double residual() const noexcept { return residual_; }

 private:
  Kind kind_;
  double residual_;
};

inline const char* to_string(SolverError::Kind k) {
  switch (k) {
    case SolverError::Kind::NoConvergence: return "NoConvergence";
    case SolverError::Kind::SingularSystem: return "SingularSystem";
    case SolverError::Kind::DegenerateChain: return "DegenerateChain";
    case SolverError::Kind::BracketFailure: return "BracketFailure";
  }
  return "?";
}

}  // namespace beamsched
