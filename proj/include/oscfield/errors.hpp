#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace oscfield {

/// Invalid configuration or arguments (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure at run time (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Iterative solver failed to reach the requested residual.
struct SolverError : NumericalError {
  SolverError(const std::string& what, std::vector<double> history)
      : NumericalError(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

/// Circulant embedding could not be made positive definite.
struct EmbeddingError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace oscfield
