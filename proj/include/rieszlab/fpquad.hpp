#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rieszlab/geometry.hpp"
#include "rieszlab/martensen.hpp"
#include "rieszlab/types.hpp"

namespace rieszlab {

// Riesz kernel |x-y|^(alpha-n) parameters.  beta = 1 - alpha in (0, 2) is
// the operator order; c_m = 1/|S^(m-1)| is the angular measure constant
// (1/2 for m = 1, 1/(2 pi) for m = 2); split_radius is the near/far
// splitting radius c, which must stay below the injectivity limit of the
// chord coordinate and below half the inter-component gap.
struct KernelSpec {
  int n = 2;
  int m = 1;
  Real alpha = 0.0;
  Real beta = 1.0;
  Real c_m = 0.5;
  Real split_radius = 0.0;

  static KernelSpec make(const ManifoldSpec& spec, Real alpha,
                         Real split_radius);
};

enum class OperatorVariant {
  FpFull,
  Punched,
  Compensator,
  CompensatorPrime,
  HypersingularD,
};

std::string variant_name(OperatorVariant v);

// Dense symmetric matrix over grid nodes in quadrature-weighted form: the
// quadratic form value is phi^T A phi for nodal values phi, and the operator
// action in the L2 sense is diag(W)^-1 A phi.
struct OperatorMatrix {
  Matrix A;
  OperatorVariant variant = OperatorVariant::FpFull;
  KernelSpec kernel;
  Real delta = 0.0;
  int grid_nodes = 0;

  Real form(const Vector& phi) const { return phi.dot(A * phi); }
  Real form(const Vector& phi, const Vector& psi) const {
    return phi.dot(A * psi);
  }
};

/// Principal symbol constant C(n-1, beta); requires beta in (0, 2).
Real symbol_constant(int n, Real beta);

/// Finite part of int_0^delta r^(k - beta - 1) dr  =  delta^(k-beta)/(k-beta).
/// k = beta would need a logarithmic finite part and is rejected.
Real fp_radial_moment(Real beta, Real delta, int k);

struct AssemblyParams {
  int n_omega = 16;        // angular quadrature points (m = 2)
  int gauss_order = 10;    // radial Gauss points per panel
  Real panel_floor_frac = 1e-3;   // first (singular) panel ends near this * c
  Real panel_cap_frac = 0.75;     // cap panel width at this * min mesh step
  Real cutoff_inner_frac = 0.5;   // psi == 1 below this * c
  int stencil = 10;        // local interpolation points per direction
  bool allow_coarse = false;  // downgrade the h <= c/8 check to a warning
  RayOptions ray;
};

// Assembles the finite-part family on one grid.  Polar patches (one fan of
// rays per node) are built once and shared by every operator variant.
class Assembler {
 public:
  Assembler(Grid grid, KernelSpec kernel, AssemblyParams params = {});
  ~Assembler();
  Assembler(Assembler&&) noexcept;

  const Grid& grid() const;
  const KernelSpec& kernel() const;

  /// h(x) at every node (scalar finite-part constant of the splitting).
  const Vector& h_scalar_nodes();
  /// Vector-valued finite part (the alpha < 0 branch data), n x N.
  const Matrix& h_vector_nodes();

  /// The full finite-part energy matrix.
  const OperatorMatrix& fp_full();
  /// Energy with the set |x-y| <= delta removed.  Requires roughly
  /// 4 h_grid <= delta <= c (delta past the diameter gives the zero matrix).
  OperatorMatrix punched(Real delta);
  /// (compensator, compensator_prime):  P_delta = fp_full - punched(delta)
  /// and P'_delta = P_delta + (beta c_m)^-1 delta^-beta M.
  std::pair<OperatorMatrix, OperatorMatrix> compensators(Real delta);
  /// Hypersingular Laplace operator D (spheres in R^3 only).
  OperatorMatrix hypersingular_D();

  /// L2 mass matrix diagonal (the quadrature weights).
  const Vector& mass() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Operator action in the L2 sense: diag(W)^-1 A phi.
Vector apply_operator(const OperatorMatrix& op, const Vector& W,
                      const Vector& phi);

/// Gradient operator of the quadratic form of a (compensator-prime) matrix:
/// G = A + A^T, so that phi^T G psi is the directional derivative.
OperatorMatrix compensator_gradient(const OperatorMatrix& comp_prime);

/// Convenience: h at a single point (assembles a one-node view).
Real h_scalar_at(Assembler& assembler, int node);

}  // namespace rieszlab
