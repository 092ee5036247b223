#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bpinn {

/// Invalid dimensions, malformed configuration, out-of-range settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// API misuse (backward before forward, mismatched evaluation grids).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// File read/write failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient encountered while training.
struct TrainingError : std::runtime_error {
  std::size_t epoch = 0;
  std::ptrdiff_t parameter_index = -1;  // -1 when the loss itself blew up

  TrainingError(const std::string& what, std::size_t epoch_, std::ptrdiff_t param_idx = -1)
      : std::runtime_error(what), epoch(epoch_), parameter_index(param_idx) {}
};

/// Quadrature failed its node-doubling convergence check.
struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Newton iteration diverged inside the finite-difference reference solver.
struct NewtonError : std::runtime_error {
  std::size_t step = 0;
  double last_residual = 0.0;

  NewtonError(const std::string& what, std::size_t step_, double residual)
      : std::runtime_error(what), step(step_), last_residual(residual) {}
};

}  // namespace bpinn
