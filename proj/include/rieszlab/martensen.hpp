#pragma once

#include <vector>

#include "rieszlab/geometry.hpp"
#include "rieszlab/types.hpp"

namespace rieszlab {

struct RayOptions {
  Real tol = 3e-13;  // ODE tolerance; defining-identity target
  // Series start radius s0 = frac * min(diameter, 4 * curvature radius);
  // the cubic remainder of the quadratic start then stays below ~1e-12.
  Real series_start_frac = 5e-5;
  Real degeneracy_floor = 0.01;  // stop when 1 - G^2/A^2 drops below this
  int cheb_points = 49;          // Chebyshev-Lobatto samples per ray
};

// One chord-radius ray u(rho, Theta) solved from the surface-polar ODE.
// Samples are stored at Chebyshev-Lobatto points of [0, rho_max] and
// evaluated by barycentric interpolation.  Chart coordinates are the
// component's own chart except for spheres, where rays are integrated in a
// base-point-rotated frame; eval_* then reports rotated-chart coordinates
// while embedded points are always in ambient coordinates.
struct PolarRay {
  int component = 0;
  Vector u0;        // base parameter (chart of integration)
  Vector theta;     // metric-unit direction in that chart
  Real rho_max = 0;
  bool truncated = false;  // hit the injectivity monitor before the request
  Vector rho_nodes;        // K
  Matrix u_samples;        // m x K
  Matrix dudrho;           // m x K
  Matrix dudomega;         // m x K ray-family derivative (patch rays, m = 2)

  Vector eval_u(Real rho) const;
  Vector eval_dudrho(Real rho) const;
  Vector eval_dudomega(Real rho) const;
  /// max over samples of | |x(u(rho)) - x0| - rho | (defining identity).
  Real identity_residual(const ComponentSpec& c) const;
};

// The fan of rays around one base point, with angular weights and a spectral
// differentiation matrix in the ray angle (used for the polar Jacobian when
// m = 2).  For m = 1 the two rays are the directions +Theta and -Theta with
// unit counting weights.
class PolarPatch {
 public:
  PolarPatch() = default;

  int n_omega() const { return static_cast<int>(rays_.size()); }
  Real rho_max() const { return rho_max_; }
  bool truncated() const { return truncated_; }
  const std::vector<Real>& omega_weights() const { return w_omega_; }
  const PolarRay& ray(int i) const { return rays_[i]; }
  int manifold_dim() const { return m_; }
  /// 1/c_m consistency: sum of angular weights (2 for m=1, 2*pi for m=2).
  Real angular_measure() const;

  struct Row {
    Matrix y;        // n x n_omega embedded points
    Matrix u_chart;  // m x n_omega coordinates in the component's own chart
    Vector jpol;     // polar surface Jacobian ds/(d rho ^ d omega)
    // interpolation scratch, reused across evaluations
    Vector scratch_u, scratch_x;
    Matrix scratch_T;
  };
  /// All rays evaluated at one radius.
  Row row(Real rho) const;
  /// Allocation-free variant: out is shaped on first use and reused.
  void row_into(Real rho, Row& out) const;

  /// Polar Jacobian of a single ray at one radius.
  Real jacobian(Real rho, int ray_index) const;

  /// Embedded base point.
  const Vector& base_point() const { return x0_; }
  const Vector& base_param() const { return u0_chart_; }

 private:
  friend PolarPatch build_patch(const ManifoldSpec&, int, const Vector&, int,
                                Real, const RayOptions&);
  void fill_point(Real rho, int ray_index, Row& out, int col) const;

  int m_ = 1;
  int component_ = 0;
  ComponentSpec cspec_work_;  // chart used for ray integration (spheres)
  ComponentSpec cspec_true_;  // the component as specified
  bool rotated_ = false;      // sphere: each ray runs in its own frame
  std::vector<Eigen::Matrix3d> rots_;
  Vector x0_, u0_chart_;
  std::vector<PolarRay> rays_;
  std::vector<Real> w_omega_;
  Real rho_max_ = 0;
  bool truncated_ = false;
};

/// Solve the ray ODE for a single direction.  theta must be metric-unit.
PolarRay ray_solve(const ManifoldSpec& spec, int component, const Vector& u0,
                   const Vector& theta, Real rho_cap,
                   const RayOptions& opts = {});

/// Build the fan of n_omega rays around a base point (n_omega ignored for
/// m = 1, where it is always 2).  rho_cap is the requested patch radius; the
/// achieved radius is min over rays and may be smaller (truncated() reports
/// whether the injectivity monitor fired).
PolarPatch build_patch(const ManifoldSpec& spec, int component,
                       const Vector& u0, int n_omega, Real rho_cap,
                       const RayOptions& opts = {});

// Taylor data of the coordinate transform at a base point, evaluated in the
// orthonormalized tangent frame.  c1 and c2 are asserted against the numeric
// ray; the third-order coefficient and the rho^n surface-measure coefficient
// are evaluated literally from their printed formulas and only compared
// (both groupings of the 3/4 factor are carried along).
struct ExpansionCoefficients {
  Vector c1, c2, c3_printed;
  Real a_statement = 0;  // a(Theta), 3/4 applied to both quadratic terms
  Real a_proof = 0;      // a(Theta), 3/4 applied to the first term only
};

/// theta_frame: direction in the orthonormalized tangent frame (unit 2-norm).
ExpansionCoefficients ray_expansion(const GeometryJet& jet,
                                    const Vector& theta_frame);

struct ExpansionComparison {
  std::string quantity;  // "u_order1", "u_order2", "u_order3", "a_theta"
  int frame_component;   // which u-component (or -1 for a_theta)
  Real printed;
  Real numeric;
  Real abs_diff;
  bool asserted;  // true for orders 1 and 2
};

/// Solve a ray, fit its Taylor coefficients numerically, and tabulate the
/// comparison against the printed formulas.
std::vector<ExpansionComparison> compare_expansion(const ManifoldSpec& spec,
                                                   int component,
                                                   const Vector& u0,
                                                   const Vector& theta_frame,
                                                   const RayOptions& opts = {});

// Quadrature rule over the chord disk {y : |y - x0| <= rho_cut}: composite
// Gauss-Legendre panels in rho against the polar Jacobian, angular weights in
// omega.  Integrates smooth f via sum of wq * f(y_q).
struct PolarRule {
  Matrix y;        // n x Q embedded points
  Matrix u_chart;  // m x Q chart coordinates
  Vector rho;      // Q
  Vector weight;   // Q, includes jpol and angular weight
};

PolarRule polar_quadrature(const PolarPatch& patch, Real rho_cut,
                           int points_per_panel = 12, int n_panels = 8);

}  // namespace rieszlab
