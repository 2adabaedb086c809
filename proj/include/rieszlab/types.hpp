#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rieszlab {

using Real = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised for invalid configuration (bad shapes, grid sizes, radii).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised for invalid arguments to numerical kernels.
struct ArgumentError : std::invalid_argument {
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Raised when a computation cannot proceed (indefinite system, no convergence).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Order-3 tensor with tiny inline storage, indices in [0, m) with m <= 2.
// Used for Christoffel symbols Gamma^l_{jk} (l,j,k) and their derivatives.
struct Tensor3 {
  int m = 0;
  std::array<Real, 8> v{};
  Tensor3() = default;
  explicit Tensor3(int dim) : m(dim) { v.fill(0.0); }
  Real& operator()(int a, int b, int c) { return v[(a * m + b) * m + c]; }
  Real operator()(int a, int b, int c) const { return v[(a * m + b) * m + c]; }
};

// Order-4 tensor, same storage idea: e.g. Gamma^l_{jk|q} as (l,j,k,q).
struct Tensor4 {
  int m = 0;
  std::array<Real, 16> v{};
  Tensor4() = default;
  explicit Tensor4(int dim) : m(dim) { v.fill(0.0); }
  Real& operator()(int a, int b, int c, int d) {
    return v[((a * m + b) * m + c) * m + d];
  }
  Real operator()(int a, int b, int c, int d) const {
    return v[((a * m + b) * m + c) * m + d];
  }
};

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

/// Tabulated sweep output: one named column set, numeric rows, and named
/// fitted quantities (slopes, limits) extracted from the sweep.
struct SweepResult {
  std::vector<std::string> columns;
  std::vector<std::vector<Real>> rows;
  std::vector<std::pair<std::string, Real>> fitted;

  Real fit(const std::string& name) const {
    for (const auto& [k, v] : fitted)
      if (k == name) return v;
    throw ArgumentError("no fitted quantity '" + name + "'");
  }
};

}  // namespace rieszlab
