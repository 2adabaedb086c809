#pragma once

#include <cstdint>

#include "rieszlab/geometry.hpp"
#include "rieszlab/types.hpp"

namespace rieszlab {

// N-point Riesz configuration on one component, stored as chart parameters.
struct PointConfiguration {
  int component = 0;
  Matrix params;  // m x N
  Real s = 2.0;   // Riesz exponent, s > m
  std::uint64_t seed = 0;
  Real energy = 0;
  Real restart_spread = 0;  // (worst - best)/|best| over restarts
  Real grad_norm = 0;       // final optimizer gradient sup-norm
};

/// Discrete Riesz s-energy with self-interactions removed.
/// Coincident points raise NumericError.
Real discrete_energy(const ManifoldSpec& spec, int component,
                     const Matrix& params, Real s);

struct OptimizeOptions {
  int max_gd_iterations = 3000;
  int max_newton_iterations = 60;
  Real grad_tol = 1e-12;
};

/// Gradient descent with backtracking in chart parameters, polished by a
/// damped Newton phase; `restarts` seeded random initializations run
/// independently and the best energy wins (ties by restart index).
PointConfiguration optimize_points(const ManifoldSpec& spec, int component,
                                   int n_points, Real s, std::uint64_t seed,
                                   int restarts,
                                   const OptimizeOptions& opts = {});

/// Rows (N, s, energy, scaled_energy = E N^-(1+s/d), gap, restart_spread,
/// seed); fitted: Richardson limit and decay order of the scaled energies.
SweepResult scaling_fit(const ManifoldSpec& spec, int component, Real s,
                        const std::vector<int>& n_list, std::uint64_t seed,
                        int restarts, const OptimizeOptions& opts = {});

/// Worst deviation of the configuration average from the surface mean over
/// a fixed bank of 20 smooth chart harmonics.
Real equidistribution_gap(const ManifoldSpec& spec, int component,
                          const Matrix& params);

}  // namespace rieszlab
