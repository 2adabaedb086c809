#include "rieszlab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace rieszlab {

namespace {

constexpr Real kPi = EIGEN_PI;

// 6th-order central difference of a scalar function of one variable.
template <typename F>
Real fd6(F&& f, Real u, Real h) {
  return (45.0 * (f(u + h) - f(u - h)) - 9.0 * (f(u + 2 * h) - f(u - 2 * h)) +
          (f(u + 3 * h) - f(u - 3 * h))) /
         (60.0 * h);
}

}  // namespace

std::string shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Sphere: return "sphere";
  }
  return "?";
}

ShapeKind shape_from_name(const std::string& name) {
  if (name == "circle") return ShapeKind::Circle;
  if (name == "ellipse") return ShapeKind::Ellipse;
  if (name == "torus") return ShapeKind::Torus;
  if (name == "sphere") return ShapeKind::Sphere;
  throw ConfigError("unknown shape kind: '" + name + "'");
}

int ComponentSpec::ambient_dim() const {
  return (kind == ShapeKind::Circle || kind == ShapeKind::Ellipse) ? 2 : 3;
}

int ComponentSpec::manifold_dim() const { return ambient_dim() - 1; }

Real ComponentSpec::diameter() const {
  switch (kind) {
    case ShapeKind::Circle: return 2 * p0;
    case ShapeKind::Ellipse: return 2 * std::max(p0, p1);
    case ShapeKind::Torus: return 2 * (p0 + p1);
    case ShapeKind::Sphere: return 2 * p0;
  }
  return 0;
}

Real ComponentSpec::curvature_scale() const {
  switch (kind) {
    case ShapeKind::Circle:
    case ShapeKind::Sphere: return p0;
    case ShapeKind::Ellipse: {
      const Real lo = std::min(p0, p1), hi = std::max(p0, p1);
      return lo * lo / hi;
    }
    case ShapeKind::Torus: return p1;
  }
  return p0;
}

Real ComponentSpec::period_u() const {
  return (kind == ShapeKind::Sphere) ? kPi : 2 * kPi;
}

Real ComponentSpec::period_v() const {
  switch (kind) {
    case ShapeKind::Torus:
    case ShapeKind::Sphere: return 2 * kPi;
    default: return 0;
  }
}

int ManifoldSpec::ambient_dim() const {
  if (components.empty()) throw ConfigError("manifold has no components");
  return components.front().ambient_dim();
}

Real ManifoldSpec::diameter() const {
  // Upper bound: pairwise center distances plus component diameters.
  Real d = 0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    d = std::max(d, components[i].diameter());
    for (std::size_t j = i + 1; j < components.size(); ++j) {
      const Real cc = (components[i].center - components[j].center).norm();
      d = std::max(d, cc + 0.5 * components[i].diameter() +
                          0.5 * components[j].diameter());
    }
  }
  return d;
}

namespace {

Matrix sample_points(const ComponentSpec& c, int per_dir) {
  const int m = c.manifold_dim();
  const int total = (m == 1) ? per_dir : per_dir * per_dir;
  Matrix pts(c.ambient_dim(), total);
  int k = 0;
  for (int i = 0; i < per_dir; ++i) {
    if (m == 1) {
      Vector u(1);
      u[0] = c.period_u() * i / per_dir;
      pts.col(k++) = embed(c, u);
    } else {
      for (int j = 0; j < per_dir; ++j) {
        Vector u(2);
        u[0] = (c.kind == ShapeKind::Sphere) ? kPi * (i + 0.5) / per_dir
                                             : c.period_u() * i / per_dir;
        u[1] = c.period_v() * j / per_dir;
        pts.col(k++) = embed(c, u);
      }
    }
  }
  return pts;
}

}  // namespace

namespace {

Vector sample_param(const ComponentSpec& c, int per_dir, Index flat) {
  const int m = c.manifold_dim();
  Vector u(m);
  if (m == 1) {
    u[0] = c.period_u() * Real(flat) / per_dir;
  } else {
    const Index i = flat / per_dir, j = flat % per_dir;
    u[0] = (c.kind == ShapeKind::Sphere) ? kPi * (i + 0.5) / per_dir
                                         : c.period_u() * Real(i) / per_dir;
    u[1] = c.period_v() * Real(j) / per_dir;
  }
  return u;
}

// Local refinement of the closest pair: gradient descent with backtracking
// on the squared distance (smooth even where the curves intersect).
Real refine_gap(const ComponentSpec& a, Vector ua, const ComponentSpec& b,
                Vector ub) {
  const int ma = a.manifold_dim(), mb = b.manifold_dim();
  Vector xa, xb;
  Matrix Ta, Tb;
  auto value_grad = [&](const Vector& pa, const Vector& pb, Vector& grad) {
    embed_frame(a, pa, xa, Ta);
    embed_frame(b, pb, xb, Tb);
    const Vector d = xa - xb;
    grad.resize(ma + mb);
    grad.head(ma) = 2.0 * Ta.transpose() * d;
    grad.tail(mb) = -2.0 * Tb.transpose() * d;
    return d.squaredNorm();
  };
  Vector grad;
  Real f = value_grad(ua, ub, grad);
  Real step = 0.1;
  for (int it = 0; it < 300 && f > 0; ++it) {
    const Vector ga = grad.head(ma), gb = grad.tail(mb);
    Vector ta = ua - step * ga, tb = ub - step * gb;
    Vector grad_new;
    const Real f_new = value_grad(ta, tb, grad_new);
    if (f_new < f) {
      ua = ta;
      ub = tb;
      f = f_new;
      grad = grad_new;
      step *= 1.4;
    } else {
      step *= 0.4;
      if (step < 1e-14) break;
    }
  }
  return std::sqrt(std::max(0.0, f));
}

}  // namespace

Real ManifoldSpec::min_component_gap() const {
  if (components.size() < 2) return std::numeric_limits<Real>::infinity();
  Real gap = std::numeric_limits<Real>::infinity();
  std::vector<Matrix> samples;
  for (const auto& c : components) samples.push_back(sample_points(c, 48));
  for (std::size_t i = 0; i < components.size(); ++i)
    for (std::size_t j = i + 1; j < components.size(); ++j) {
      Real best = std::numeric_limits<Real>::infinity();
      Index best_a = 0, best_b = 0;
      for (Index a = 0; a < samples[i].cols(); ++a)
        for (Index b = 0; b < samples[j].cols(); ++b) {
          const Real d = (samples[i].col(a) - samples[j].col(b)).norm();
          if (d < best) {
            best = d;
            best_a = a;
            best_b = b;
          }
        }
      const Real refined =
          refine_gap(components[i], sample_param(components[i], 48, best_a),
                     components[j], sample_param(components[j], 48, best_b));
      gap = std::min(gap, std::min(best, refined));
    }
  return gap;
}

void ManifoldSpec::validate() const {
  if (components.empty()) throw ConfigError("manifold has no components");
  const int n = components.front().ambient_dim();
  for (const auto& c : components) {
    if (c.ambient_dim() != n)
      throw ConfigError("components live in different ambient dimensions");
    if (c.sign != 1 && c.sign != -1)
      throw ConfigError("component sign must be +1 or -1");
    switch (c.kind) {
      case ShapeKind::Circle:
      case ShapeKind::Sphere:
        if (c.p0 <= 0) throw ConfigError("radius must be positive");
        break;
      case ShapeKind::Ellipse:
        if (c.p0 <= 0 || c.p1 <= 0)
          throw ConfigError("ellipse semi-axes must be positive");
        break;
      case ShapeKind::Torus:
        if (c.p1 <= 0 || c.p0 <= c.p1)
          throw ConfigError("torus needs R0 > r > 0");
        break;
    }
  }
  const Real gap = min_component_gap();
  if (!(gap > 1e-6 * diameter()))
    throw ConfigError("components are not pairwise disjoint");
}

Vector embed(const ComponentSpec& c, const Vector& u) {
  Vector x(c.ambient_dim());
  switch (c.kind) {
    case ShapeKind::Circle:
      x[0] = c.p0 * std::cos(u[0]);
      x[1] = c.p0 * std::sin(u[0]);
      break;
    case ShapeKind::Ellipse:
      x[0] = c.p0 * std::cos(u[0]);
      x[1] = c.p1 * std::sin(u[0]);
      break;
    case ShapeKind::Torus: {
      const Real s = c.p0 + c.p1 * std::cos(u[1]);
      x[0] = s * std::cos(u[0]);
      x[1] = s * std::sin(u[0]);
      x[2] = c.p1 * std::sin(u[1]);
      break;
    }
    case ShapeKind::Sphere: {
      const Real st = std::sin(u[0]), ct = std::cos(u[0]);
      x[0] = c.p0 * st * std::cos(u[1]);
      x[1] = c.p0 * st * std::sin(u[1]);
      x[2] = c.p0 * ct;
      break;
    }
  }
  for (int i = 0; i < c.ambient_dim(); ++i) x[i] += c.center[i];
  return x;
}

void embed_frame(const ComponentSpec& c, const Vector& u, Vector& x,
                 Matrix& tangents) {
  const int n = c.ambient_dim(), m = c.manifold_dim();
  x = embed(c, u);
  tangents.resize(n, m);
  switch (c.kind) {
    case ShapeKind::Circle:
      tangents(0, 0) = -c.p0 * std::sin(u[0]);
      tangents(1, 0) = c.p0 * std::cos(u[0]);
      break;
    case ShapeKind::Ellipse:
      tangents(0, 0) = -c.p0 * std::sin(u[0]);
      tangents(1, 0) = c.p1 * std::cos(u[0]);
      break;
    case ShapeKind::Torus: {
      const Real cu = std::cos(u[0]), su = std::sin(u[0]);
      const Real cv = std::cos(u[1]), sv = std::sin(u[1]);
      const Real s = c.p0 + c.p1 * cv;
      tangents(0, 0) = -s * su;
      tangents(1, 0) = s * cu;
      tangents(2, 0) = 0;
      tangents(0, 1) = -c.p1 * sv * cu;
      tangents(1, 1) = -c.p1 * sv * su;
      tangents(2, 1) = c.p1 * cv;
      break;
    }
    case ShapeKind::Sphere: {
      const Real st = std::sin(u[0]), ct = std::cos(u[0]);
      const Real cp = std::cos(u[1]), sp = std::sin(u[1]);
      tangents(0, 0) = c.p0 * ct * cp;
      tangents(1, 0) = c.p0 * ct * sp;
      tangents(2, 0) = -c.p0 * st;
      tangents(0, 1) = -c.p0 * st * sp;
      tangents(1, 1) = c.p0 * st * cp;
      tangents(2, 1) = 0;
      break;
    }
  }
}

Vector outward_normal(const ComponentSpec& c, const Vector& u) {
  Vector n;
  outward_normal_into(c, u, n);
  return n;
}

void outward_normal_into(const ComponentSpec& c, const Vector& u, Vector& n) {
  n.resize(c.ambient_dim());
  switch (c.kind) {
    case ShapeKind::Circle:
      n[0] = std::cos(u[0]);
      n[1] = std::sin(u[0]);
      break;
    case ShapeKind::Ellipse: {
      const Real q = std::hypot(c.p1 * std::cos(u[0]), c.p0 * std::sin(u[0]));
      n[0] = c.p1 * std::cos(u[0]) / q;
      n[1] = c.p0 * std::sin(u[0]) / q;
      break;
    }
    case ShapeKind::Torus: {
      const Real cv = std::cos(u[1]), sv = std::sin(u[1]);
      n[0] = cv * std::cos(u[0]);
      n[1] = cv * std::sin(u[0]);
      n[2] = sv;
      break;
    }
    case ShapeKind::Sphere: {
      const Real st = std::sin(u[0]), ct = std::cos(u[0]);
      n[0] = st * std::cos(u[1]);
      n[1] = st * std::sin(u[1]);
      n[2] = ct;
      break;
    }
  }
}

GeometryJet jet(const ManifoldSpec& spec, int component, const Vector& u) {
  if (component < 0 || component >= static_cast<int>(spec.components.size()))
    throw ArgumentError("component index out of range");
  return component_jet(spec.components[component], u);
}

GeometryJet component_jet(const ComponentSpec& c, const Vector& u) {
  GeometryJet J;
  component_jet_into(c, u, J);
  return J;
}

void component_jet_into(const ComponentSpec& c, const Vector& u,
                        GeometryJet& J) {
  const int m = c.manifold_dim(), n = c.ambient_dim();
  J.m = m;
  J.n = n;
  embed_frame(c, u, J.x, J.tangents);
  outward_normal_into(c, u, J.normal);
  J.metric = J.tangents.transpose() * J.tangents;
  if (m == 1) {
    J.metric_inv.resize(1, 1);
    J.metric_inv(0, 0) = 1.0 / J.metric(0, 0);
    J.surface_density = std::sqrt(J.metric(0, 0));
  } else {
    const Real det = J.metric(0, 0) * J.metric(1, 1) -
                     J.metric(0, 1) * J.metric(1, 0);
    J.metric_inv.resize(2, 2);
    J.metric_inv(0, 0) = J.metric(1, 1) / det;
    J.metric_inv(1, 1) = J.metric(0, 0) / det;
    J.metric_inv(0, 1) = -J.metric(0, 1) / det;
    J.metric_inv(1, 0) = -J.metric(1, 0) / det;
    J.surface_density = std::sqrt(det);
  }
  J.christoffel = Tensor3(m);
  J.dchristoffel = Tensor4(m);
  if (J.sff.rows() != m) J.sff = Matrix::Zero(m, m);
  else J.sff.setZero();
  J.dsff = Tensor3(m);

  switch (c.kind) {
    case ShapeKind::Circle: {
      J.sff(0, 0) = -c.p0;
      break;
    }
    case ShapeKind::Ellipse: {
      const Real a = c.p0, b = c.p1;
      auto gamma = [a, b](Real t) {
        const Real q = a * a * std::sin(t) * std::sin(t) +
                       b * b * std::cos(t) * std::cos(t);
        return (a * a - b * b) * std::sin(t) * std::cos(t) / q;
      };
      auto sff = [a, b](Real t) {
        const Real q = a * a * std::sin(t) * std::sin(t) +
                       b * b * std::cos(t) * std::cos(t);
        return -a * b / std::sqrt(q);
      };
      J.christoffel(0, 0, 0) = gamma(u[0]);
      J.sff(0, 0) = sff(u[0]);
      // Curvature derivatives by 6th-order differences of the analytic
      // fields; only third-order expansion terms consume them.
      const Real h = 1e-2;
      J.dchristoffel(0, 0, 0, 0) = fd6(gamma, u[0], h);
      J.dsff(0, 0, 0) = fd6(sff, u[0], h);
      break;
    }
    case ShapeKind::Torus: {
      const Real R0 = c.p0, r = c.p1;
      const Real cv = std::cos(u[1]), sv = std::sin(u[1]);
      const Real s = R0 + r * cv;
      J.sff(0, 0) = -s * cv;
      J.sff(1, 1) = -r;
      J.christoffel(0, 0, 1) = J.christoffel(0, 1, 0) = -r * sv / s;
      J.christoffel(1, 0, 0) = s * sv / r;
      // d/dv of the nonzero Christoffel symbols (u-derivatives vanish).
      J.dchristoffel(0, 0, 1, 1) = J.dchristoffel(0, 1, 0, 1) =
          -r * cv / s - r * r * sv * sv / (s * s);
      J.dchristoffel(1, 0, 0, 1) = (-r * sv * sv + s * cv) / r;
      J.dsff(0, 0, 1) = r * sv * cv + s * sv;
      break;
    }
    case ShapeKind::Sphere: {
      const Real R = c.p0;
      const Real st = std::sin(u[0]), ct = std::cos(u[0]);
      J.sff = -J.metric / R;
      J.christoffel(0, 1, 1) = -st * ct;
      J.christoffel(1, 0, 1) = J.christoffel(1, 1, 0) = ct / st;
      J.dchristoffel(0, 1, 1, 0) = -(ct * ct - st * st);
      J.dchristoffel(1, 0, 1, 0) = J.dchristoffel(1, 1, 0, 0) =
          -1.0 / (st * st);
      J.dsff(1, 1, 0) = -2.0 * R * st * ct;
      break;
    }
  }
  J.sff_mixed = J.metric_inv * J.sff;
}

Real chord(const ManifoldSpec& spec, int comp_u, const Vector& u, int comp_v,
           const Vector& v) {
  const Vector a = embed(spec.components.at(comp_u), u);
  const Vector b = embed(spec.components.at(comp_v), v);
  return (a - b).norm();
}

Vector Grid::Component::param(int i) const {
  const int iu = i / n_v, iv = i % n_v;
  Vector p(n_v > 1 ? 2 : 1);
  p[0] = u[iu];
  if (n_v > 1) p[1] = v[iv];
  return p;
}

int Grid::component_of(int g) const {
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c)
    if (g < offsets[c + 1]) return static_cast<int>(c);
  return static_cast<int>(comps.size()) - 1;
}

int Grid::local_of(int g) const { return g - offsets[component_of(g)]; }

const Grid::Component& Grid::comp_of_node(int g) const {
  return comps[component_of(g)];
}

Vector Grid::node(int g) const {
  const Component& c = comp_of_node(g);
  return c.nodes.col(g - offsets[c.index]);
}

Real Grid::total_area() const {
  Real a = 0;
  for (const auto& c : comps) a += c.area;
  return a;
}

Eigen::VectorBlock<const Vector> Grid::slice(const Vector& phi,
                                             int component) const {
  return phi.segment(offsets[component], comps[component].size());
}

namespace {

// Pole-weighted theta rule for the sphere chart: midpoint nodes
// theta_j = pi (j + 1/2) / N with weights matched to the exact moments
// int_0^pi cos(k theta) sin(theta) dtheta for k < N.  Smooth functions on the
// sphere reduce to cosine polynomials of theta after the phi average, so the
// rule converges spectrally and integrates constants exactly.
std::vector<Real> sphere_theta_weights(int n) {
  std::vector<Real> mk(n);
  for (int k = 0; k < n; ++k) {
    if (k == 1)
      mk[k] = 0.0;
    else if (k % 2 == 0)
      mk[k] = 2.0 / (1.0 - Real(k) * Real(k));
    else
      mk[k] = 0.0;
  }
  std::vector<Real> w(n, 0.0);
  for (int j = 0; j < n; ++j) {
    const Real theta = kPi * (j + 0.5) / n;
    Real acc = mk[0];
    for (int k = 1; k < n; ++k) acc += 2.0 * mk[k] * std::cos(k * theta);
    w[j] = acc / n;
  }
  return w;
}

}  // namespace

Grid build_grid(const ManifoldSpec& spec, const std::vector<int>& n_per_comp) {
  spec.validate();
  if (n_per_comp.size() != spec.components.size())
    throw ConfigError("grid sizes: one N per component required");
  Grid grid;
  grid.spec = spec;
  grid.offsets.push_back(0);
  for (std::size_t ci = 0; ci < spec.components.size(); ++ci) {
    const ComponentSpec& c = spec.components[ci];
    const int n = n_per_comp[ci];
    if (n < 16 || !is_power_of_two(n))
      throw ConfigError("grid N must be a power of two >= 16, got " +
                        std::to_string(n));
    Grid::Component gc;
    gc.index = static_cast<int>(ci);
    const int m = c.manifold_dim();
    gc.n_u = n;
    gc.n_v = (m == 2) ? n : 1;
    const int total = gc.n_u * gc.n_v;
    gc.u.resize(gc.n_u);
    gc.w.resize(total);
    gc.J.resize(total);
    gc.nodes.resize(c.ambient_dim(), total);

    if (c.kind == ShapeKind::Sphere) {
      const auto wt = sphere_theta_weights(gc.n_u);
      gc.v.resize(gc.n_v);
      for (int j = 0; j < gc.n_u; ++j) gc.u[j] = kPi * (j + 0.5) / gc.n_u;
      for (int k = 0; k < gc.n_v; ++k) gc.v[k] = 2 * kPi * k / gc.n_v;
      for (int j = 0; j < gc.n_u; ++j)
        for (int k = 0; k < gc.n_v; ++k) {
          const int i = gc.flat(j, k);
          Vector u(2);
          u[0] = gc.u[j];
          u[1] = gc.v[k];
          const GeometryJet J = jet(spec, gc.index, u);
          gc.nodes.col(i) = J.x;
          gc.J[i] = J.surface_density;
          gc.w[i] = (wt[j] / std::sin(gc.u[j])) * (2 * kPi / gc.n_v);
        }
    } else {
      for (int j = 0; j < gc.n_u; ++j) gc.u[j] = 2 * kPi * j / gc.n_u;
      if (m == 2) {
        gc.v.resize(gc.n_v);
        for (int k = 0; k < gc.n_v; ++k) gc.v[k] = 2 * kPi * k / gc.n_v;
      }
      const Real wu = 2 * kPi / gc.n_u;
      const Real wv = (m == 2) ? 2 * kPi / gc.n_v : 1.0;
      for (int j = 0; j < gc.n_u; ++j)
        for (int k = 0; k < gc.n_v; ++k) {
          const int i = gc.flat(j, k);
          Vector u(m);
          u[0] = gc.u[j];
          if (m == 2) u[1] = gc.v[k];
          const GeometryJet J = jet(spec, gc.index, u);
          gc.nodes.col(i) = J.x;
          gc.J[i] = J.surface_density;
          gc.w[i] = wu * wv;
        }
    }

    // Embedded mesh sizes per direction (the sphere chart's theta direction
    // does not wrap).
    const bool u_wraps = c.kind != ShapeKind::Sphere;
    for (int j = 0; j < gc.n_u; ++j)
      for (int k = 0; k < gc.n_v; ++k) {
        const int i = gc.flat(j, k);
        if (u_wraps || j + 1 < gc.n_u) {
          const int ju = gc.flat((j + 1) % gc.n_u, k);
          gc.h_u =
              std::max(gc.h_u, (gc.nodes.col(i) - gc.nodes.col(ju)).norm());
        }
        if (gc.n_v > 1) {
          const int jv = gc.flat(j, (k + 1) % gc.n_v);
          gc.h_v =
              std::max(gc.h_v, (gc.nodes.col(i) - gc.nodes.col(jv)).norm());
        }
      }
    gc.area = gc.w.dot(gc.J);
    grid.comps.push_back(std::move(gc));
    grid.offsets.push_back(grid.offsets.back() + total);
  }
  grid.total = grid.offsets.back();
  grid.W.resize(grid.total);
  for (const auto& gc : grid.comps)
    grid.W.segment(grid.offsets[gc.index], gc.size()) =
        gc.w.cwiseProduct(gc.J);
  grid.h_grid = 0;
  for (const auto& gc : grid.comps)
    grid.h_grid = std::max({grid.h_grid, gc.h_u, gc.h_v});
  return grid;
}

Grid build_grid(const ManifoldSpec& spec, int n_all) {
  return build_grid(spec,
                    std::vector<int>(spec.components.size(), n_all));
}

}  // namespace rieszlab
