#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/network.hpp"

namespace bpinn {

/// Sampled (x, u) pairs at a fixed time; the interchange format between
/// solver, oracles, and metrics.
struct SolutionField {
  std::vector<double> x;
  std::vector<double> u;
};

/// n points on [0,1] including both endpoints.
inline std::vector<double> uniform_grid(std::size_t n) {
  if (n < 2) throw ConfigError("uniform_grid: need at least 2 points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = double(i) / double(n - 1);
  return g;
}

template <class Scalar>
SolutionField sample_network(const MlpParams<Scalar>& p, std::span<const double> grid) {
  SolutionField f;
  f.x.assign(grid.begin(), grid.end());
  f.u.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    f.u[i] = static_cast<double>(forward_value(p, static_cast<Scalar>(grid[i])));
  return f;
}

/// L2 relative error ||a - ref||_2 / ||ref||_2 on a shared grid.
inline double rel_error(const SolutionField& field, const SolutionField& reference) {
  if (field.x.size() != reference.x.size())
    throw UsageError("rel_error: grids have different sizes (" +
                     std::to_string(field.x.size()) + " vs " +
                     std::to_string(reference.x.size()) + ")");
  for (std::size_t i = 0; i < field.x.size(); ++i)
    if (field.x[i] != reference.x[i])
      throw UsageError("rel_error: grids differ at row " + std::to_string(i) +
                       " (x=" + std::to_string(field.x[i]) + " vs x=" +
                       std::to_string(reference.x[i]) + ")");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    const double d = field.u[i] - reference.u[i];
    num += d * d;
    den += reference.u[i] * reference.u[i];
  }
  if (den == 0.0)
    throw ConfigError("rel_error: reference field has zero norm; comparison is degenerate");
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace bpinn
