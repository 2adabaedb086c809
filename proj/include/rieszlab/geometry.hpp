#pragma once

#include <string>
#include <vector>

#include "rieszlab/types.hpp"

namespace rieszlab {

enum class ShapeKind { Circle, Ellipse, Torus, Sphere };

std::string shape_name(ShapeKind k);
ShapeKind shape_from_name(const std::string& name);

/// One closed component of the manifold with its prescribed sign.
struct ComponentSpec {
  ShapeKind kind = ShapeKind::Circle;
  // circle/sphere: p0 = radius; ellipse: (p0, p1) = (a, b); torus: (R0, r).
  Real p0 = 1.0;
  Real p1 = 0.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  int sign = +1;  // alpha_l in {-1, +1}

  int ambient_dim() const;   // 2 or 3
  int manifold_dim() const;  // ambient_dim() - 1
  Real diameter() const;
  /// Smallest principal curvature radius (series-start and step scaling).
  Real curvature_scale() const;
  // Sphere chart order is (theta, phi): u covers (0, pi), v is 2*pi periodic.
  Real period_u() const;
  Real period_v() const;
};

/// A closed parametric manifold: a finite union of disjoint components.
struct ManifoldSpec {
  std::vector<ComponentSpec> components;

  int ambient_dim() const;
  int manifold_dim() const { return ambient_dim() - 1; }
  Real diameter() const;
  /// Minimum Euclidean gap between distinct components (sampled densely).
  Real min_component_gap() const;
  /// Throws ConfigError on inconsistent dimensions, bad parameters or
  /// overlapping components.
  void validate() const;

  static ManifoldSpec single(ComponentSpec c) {
    ManifoldSpec s;
    s.components.push_back(c);
    s.validate();
    return s;
  }
};

// All local differential-geometry data at one parameter point.  Index
// conventions: tangents column j is x_{|j}; christoffel(l,j,k) is
// Gamma^l_{jk}; dchristoffel(l,j,k,q) its derivative in u^q; sff(j,k) is
// L_{jk} with the outward normal in x_{|j|k} = Gamma^l_{jk} x_{|l} + L_{jk} n,
// so convex shapes carry negative definite L.  sff_mixed(l,j) = L^l_j =
// g^{lk} L_{kj}; dsff(j,k,l) = L_{jk|l}.
struct GeometryJet {
  int m = 1, n = 2;
  Vector x;          // n
  Matrix tangents;   // n x m
  Vector normal;     // n, outward unit
  Matrix metric;     // m x m
  Matrix metric_inv; // m x m
  Real surface_density = 0.0;  // J = sqrt(det metric)
  Tensor3 christoffel;
  Tensor4 dchristoffel;
  Matrix sff;        // L_{jk}
  Matrix sff_mixed;  // L^l_j
  Tensor3 dsff;      // L_{jk|l}
};

/// Full jet at parameter point u (size m) on the given component.
GeometryJet jet(const ManifoldSpec& spec, int component, const Vector& u);
/// Same, for a standalone component.
GeometryJet component_jet(const ComponentSpec& c, const Vector& u);
/// Allocation-free variant for hot loops: out is resized once and reused.
void component_jet_into(const ComponentSpec& c, const Vector& u,
                        GeometryJet& out);

/// Embedded position only (cheap path used by ray integration).
Vector embed(const ComponentSpec& c, const Vector& u);
/// Position and tangents without curvature data.
void embed_frame(const ComponentSpec& c, const Vector& u, Vector& x,
                 Matrix& tangents);
/// Outward unit normal.
Vector outward_normal(const ComponentSpec& c, const Vector& u);
void outward_normal_into(const ComponentSpec& c, const Vector& u, Vector& n);

/// Euclidean chord distance |x(u) - x(v)| between embedded points.
Real chord(const ManifoldSpec& spec, int comp_u, const Vector& u, int comp_v,
           const Vector& v);

// Quadrature grid: uniform periodic nodes per component, trapezoidal weights
// (sphere charts get analytically pole-weighted theta weights instead), and
// surface densities so that  int f ds  ~=  sum_i w_i J_i f_i.
struct Grid {
  struct Component {
    int index = 0;    // into spec.components
    int n_u = 0;      // nodes in u
    int n_v = 1;      // nodes in v (1 when m = 1)
    std::vector<Real> u, v;   // parameter values per direction
    Vector w;         // parameter quadrature weight per node
    Vector J;         // surface density per node
    Matrix nodes;     // n x N embedded node coordinates
    Real h_u = 0, h_v = 0;  // max embedded spacing per direction
    Real area = 0;    // sum w_i J_i

    int size() const { return n_u * n_v; }
    int flat(int iu, int iv) const { return iu * n_v + iv; }
    Vector param(int i) const;
  };

  ManifoldSpec spec;
  std::vector<Component> comps;
  std::vector<int> offsets;  // node offset per component
  int total = 0;
  Vector W;       // global quadrature weights w_i * J_i
  Real h_grid = 0;  // max embedded node spacing over all components

  int component_of(int global_node) const;
  int local_of(int global_node) const;
  const Component& comp_of_node(int global_node) const;
  Vector node(int global_node) const;  // embedded coordinates
  Real area(int component) const { return comps[component].area; }
  Real total_area() const;
  /// Per-component slice of a global nodal vector.
  Eigen::VectorBlock<const Vector> slice(const Vector& phi, int component) const;
};

/// Uniform periodic grid with N nodes per direction on every component.
/// N must be a power of two and at least 16 (Fourier-based norms rely on it).
Grid build_grid(const ManifoldSpec& spec, const std::vector<int>& n_per_comp);
Grid build_grid(const ManifoldSpec& spec, int n_all);

}  // namespace rieszlab
