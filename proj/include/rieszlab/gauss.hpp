#pragma once

#include <functional>
#include <optional>

#include "rieszlab/fpquad.hpp"
#include "rieszlab/geometry.hpp"
#include "rieszlab/types.hpp"

namespace rieszlab {

// Constraint data of the Gauss problem: nodal external field f, strictly
// positive weight g, and one positive mass value a per component.  Densities
// are stored unsigned (sigma^l >= 0); component signs come from the
// manifold and enter the quadratic forms by conjugation.
struct GaussData {
  Vector f, g;
  std::vector<Real> a;
  void validate(const Grid& grid) const;
};

struct SolverOptions {
  Real kkt_tol = 1e-9;
  Real constraint_tol = 1e-12;
  int max_iterations = 40000;
  bool check_convexity = true;
  std::optional<Vector> start;  // feasible start for the cone path
};

struct MinimizerReport {
  Vector sigma;              // unsigned densities
  std::vector<Real> lambda;  // multipliers in the eps-scaled convention
  std::vector<int> active;   // nodes where sigma = 0
  bool interior = true;      // solved on the interior saddle path
  int orientation = 0;
  Real eps = std::numeric_limits<Real>::quiet_NaN();
  Real delta = std::numeric_limits<Real>::quiet_NaN();
  Real energy_raw = 0;     // (sigma, V_beta sigma) with the raw fp matrix
  Real gauss_objective = 0;  // (sigma,V sigma) - 2(f,sigma), raw orientation
  Real j_delta = std::numeric_limits<Real>::quiet_NaN();
  int iterations = 0;
  Real kkt_residual = 0;
  Real feasibility = 0;

  Vector signed_density(const Grid& grid) const;
};

/// The Gauss functional value (phi, A phi) - 2 (f, phi)_{L2} for the given
/// operator matrix.
Real gauss_value(const OperatorMatrix& op, const Grid& grid, const Vector& f,
                 const Vector& phi);

struct PunchedValue {
  Real j_delta = 0;        // punched form - 2 (f, phi)
  Real j_decomposed = 0;   // (1/eps)||phi||^2 + (V phi,phi) - 2(f,phi) - P'
  Real eps = 0;
  Real mismatch = 0;
};

/// Both evaluations of J_delta; they must agree to ~1e-8 relative.
PunchedValue punched_value(Assembler& assembler, Real delta, const Vector& f,
                           const Vector& phi);

/// Leading expansion data: lambda0^k = a^k/(g_k,g_k), sigma0^k = g_k lambda0^k.
std::pair<Vector, std::vector<Real>> sigma0_lambda0(const Grid& grid,
                                                    const GaussData& data);

using LinOp = std::function<Vector(const Vector&)>;  // L2-sense operator

/// First-order expansion data for the operator A (V for the perturbed
/// problem, V - P''_delta for the punched problem):
///   lambda1^k = (g,g)^-1 (A sigma0 - f, g),  sigma1^k = g lambda1^k + f - A sigma0.
std::pair<Vector, std::vector<Real>> sigma1_lambda1(const Grid& grid,
                                                    const GaussData& data,
                                                    const Vector& sigma0,
                                                    const LinOp& apply_A);

/// Cone-constrained quadratic program: minimize sigma^T Q sigma - 2 b^T sigma
/// over {sigma >= 0, (W g, sigma)_l = a_l per component}.  Q must carry any
/// component-sign conjugation already.  Accelerated projected gradient with
/// exact simplex projection, polished by an equality solve on the active set.
MinimizerReport solve_cone_qp(const Matrix& Q, const Vector& b,
                              const Grid& grid, const GaussData& data,
                              const SolverOptions& opts = {});

/// Dual Gauss problem over the affine cone with the oriented energy matrix.
MinimizerReport solve_gauss(const OperatorMatrix& V, int orientation,
                            const Grid& grid, const GaussData& data,
                            const SolverOptions& opts = {});

/// Perturbed problem: minimize (V sigma, sigma) + (1/eps)||sigma||^2 - 2(f,sigma)
/// with the orientation applied to V.  Interior saddle first, cone fallback.
MinimizerReport solve_perturbed(const OperatorMatrix& V, int orientation,
                                const Grid& grid, const GaussData& data,
                                Real eps, const SolverOptions& opts = {});

/// Punched problem at cut delta; eps = beta c_m delta^beta is derived, never
/// free.  Uses the raw punched matrix (the kernel is positive as printed).
MinimizerReport solve_punched(Assembler& assembler, const Grid& grid,
                              const GaussData& data, Real delta,
                              const SolverOptions& opts = {});

struct ExpansionFamily {
  enum Kind { Perturbed, Punched } kind = Perturbed;
  std::vector<Real> sweep;  // eps values (perturbed) or delta values (punched)
};

/// Sweep the minimizer family and tabulate the expansion remainders
/// (eps, delta, J_delta, ||s*-s0||, ||s*-s0-eps s1||, |||s2_implied|||, ...).
SweepResult expansion_check(Assembler& assembler, int orientation,
                            const Grid& grid, const GaussData& data,
                            const ExpansionFamily& family,
                            const SolverOptions& opts = {});

/// L2 norm of a nodal function.
Real l2_norm(const Grid& grid, const Vector& phi);

}  // namespace rieszlab
