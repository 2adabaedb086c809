#pragma once

#include "rieszlab/fpquad.hpp"
#include "rieszlab/geometry.hpp"
#include "rieszlab/types.hpp"

namespace rieszlab {

// Discrete H^s Gram matrix: phi^T S phi = ||phi||^2_{H^s} in the flat
// Fourier-multiplier convention (1 + |k|^2)^s per chart mode, weighted by
// |Gamma_l| / N_l per component.  This is an equivalent norm on the uniform
// periodic charts; at s = 0 it coincides with the quadrature mass matrix on
// constant-density grids (circle, any torus direction sampled uniformly in
// the flat measure sense).
struct SobolevGram {
  Real order = 0;
  Matrix S;
};

/// Circle/ellipse/torus grids only; spheres are rejected (the D-operator
/// tests need no Sobolev Gram there).
SobolevGram gram(const Grid& grid, Real s);

/// Nodal Fourier mode on one (m = 1) component: cos(k u) or sin(k u).
Vector fourier_mode(const Grid& grid, int comp, int k, bool sine = false);

/// Rayleigh quotient of the operator on a nodal vector in the L2 pairing.
Real rayleigh(const OperatorMatrix& op, const Vector& W, const Vector& phi);

struct HepsValue {
  Real value = 0;       // eps (V phi, phi) + ||phi||^2_{L2}
  bool degenerate = false;  // non-positive on a nonzero phi
};

/// The eps-dependent energy norm squared; V must carry the orientation.
HepsValue h_eps_norm_sq(const Matrix& V_oriented, const Vector& W,
                        const Vector& phi, Real eps);

/// Orientation sign: +1 or -1, chosen so the extreme generalized eigenvalue
/// of (sign * V) against the H^(beta/2) Gram is positive (the measured sign
/// of the operator's spectrum; recorded in every report).
int select_orientation(const OperatorMatrix& V, const SobolevGram& S_half);

struct GardingFit {
  int orientation = 0;
  Real c0 = 0;  // pencil minimum eigenvalue at the fitted c1
  Real c1 = 0;  // L2 shift
  Real c2 = 0;  // upper bound: max eigenvalue of (s V) against S
};

/// Minimum generalized eigenvalue of (sign V + c1 M) against S_half.
Real garding_min_eig(const OperatorMatrix& V, const SobolevGram& S_half,
                     const Vector& W, int orientation, Real c1);

/// Fit (c0, c1) at the given resolution: the smallest doubling c1 that makes
/// the pencil positive, and the resulting minimum eigenvalue as c0.
GardingFit fit_garding(const OperatorMatrix& V, const SobolevGram& S_half,
                       const Vector& W, int orientation = 0);

}  // namespace rieszlab
