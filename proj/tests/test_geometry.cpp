#include "rieszlab/geometry.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rieszlab/rng.hpp"

using namespace rieszlab;

namespace {

constexpr Real kPi = EIGEN_PI;

// x_{|j|k} by 6th-order differences of the analytic tangent fields.
Matrix fd_xjk(const ComponentSpec& c, const Vector& u, int j, int k) {
  const Real h = 1e-2;
  auto tangent_j = [&](Real t) -> Vector {
    Vector uu = u;
    uu[k] += t;
    Vector x;
    Matrix T;
    embed_frame(c, uu, x, T);
    return T.col(j);
  };
  Vector d = (45.0 * (tangent_j(h) - tangent_j(-h)) -
              9.0 * (tangent_j(2 * h) - tangent_j(-2 * h)) +
              (tangent_j(3 * h) - tangent_j(-3 * h))) /
             (60.0 * h);
  return d;
}

Real gaussian_equation_residual(const ManifoldSpec& spec, int comp,
                                const Vector& u) {
  const ComponentSpec& c = spec.components[comp];
  const GeometryJet J = jet(spec, comp, u);
  Real worst = 0;
  for (int j = 0; j < J.m; ++j)
    for (int k = 0; k < J.m; ++k) {
      Vector xjk = fd_xjk(c, u, j, k);
      Vector model = J.sff(j, k) * J.normal;
      for (int l = 0; l < J.m; ++l)
        model += J.christoffel(l, j, k) * J.tangents.col(l);
      worst = std::max(worst, (xjk - model).norm());
    }
  return worst;
}

ManifoldSpec circle(Real R) {
  ComponentSpec c;
  c.kind = ShapeKind::Circle;
  c.p0 = R;
  return ManifoldSpec::single(c);
}

}  // namespace

TEST_CASE("unit circle jet at angle zero") {
  auto spec = circle(1.0);
  Vector u(1);
  u[0] = 0.0;
  const GeometryJet J = jet(spec, 0, u);
  CHECK(J.x[0] == doctest::Approx(1.0));
  CHECK(J.x[1] == doctest::Approx(0.0));
  CHECK(J.normal[0] == doctest::Approx(1.0));
  CHECK(J.normal[1] == doctest::Approx(0.0));
  CHECK(J.metric(0, 0) == doctest::Approx(1.0));
  CHECK(J.christoffel(0, 0, 0) == doctest::Approx(0.0));
  CHECK(J.sff(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("sphere of radius 2 is umbilic with L = -g/2") {
  ComponentSpec c;
  c.kind = ShapeKind::Sphere;
  c.p0 = 2.0;
  auto spec = ManifoldSpec::single(c);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Vector u(2);
    u[0] = rng.uniform(0.3, kPi - 0.3);
    u[1] = rng.uniform(0.0, 2 * kPi);
    const GeometryJet J = jet(spec, 0, u);
    CHECK((J.sff + 0.5 * J.metric).norm() <= 1e-12 * J.metric.norm());
  }
}

TEST_CASE("torus Gaussian curvature at the outer equator") {
  ComponentSpec c;
  c.kind = ShapeKind::Torus;
  c.p0 = 2.0;
  c.p1 = 0.5;
  auto spec = ManifoldSpec::single(c);
  Vector u(2);
  u[0] = 0.7;
  u[1] = 0.0;  // outer equator
  const GeometryJet J = jet(spec, 0, u);
  CHECK(J.sff_mixed.determinant() == doctest::Approx(0.8).epsilon(1e-12));
  // Finite-difference oracle on the embedding before trusting the formulas.
  CHECK(gaussian_equation_residual(spec, 0, u) <= 1e-8);
}

TEST_CASE("Gaussian equation residual over random shapes and points") {
  std::vector<ManifoldSpec> shapes;
  shapes.push_back(circle(1.0));
  shapes.push_back(circle(2.5));
  {
    ComponentSpec c;
    c.kind = ShapeKind::Ellipse;
    c.p0 = 1.5;
    c.p1 = 0.7;
    shapes.push_back(ManifoldSpec::single(c));
  }
  {
    ComponentSpec c;
    c.kind = ShapeKind::Torus;
    c.p0 = 2.0;
    c.p1 = 0.5;
    shapes.push_back(ManifoldSpec::single(c));
  }
  {
    ComponentSpec c;
    c.kind = ShapeKind::Sphere;
    c.p0 = 1.0;
    shapes.push_back(ManifoldSpec::single(c));
  }
  Rng rng(20240901);
  int samples = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto& spec = shapes[trial % shapes.size()];
    const ComponentSpec& c = spec.components[0];
    Vector u(c.manifold_dim());
    u[0] = (c.kind == ShapeKind::Sphere) ? rng.uniform(0.4, kPi - 0.4)
                                         : rng.uniform(0.0, 2 * kPi);
    if (c.manifold_dim() == 2) u[1] = rng.uniform(0.0, 2 * kPi);
    CHECK(gaussian_equation_residual(spec, 0, u) <= 1e-8);
    ++samples;
  }
  CHECK(samples == 1000);
}

TEST_CASE("chord distances") {
  auto spec = circle(1.0);
  Vector u(1), v(1);
  u[0] = 0.0;
  v[0] = kPi;
  CHECK(chord(spec, 0, u, 0, v) == doctest::Approx(2.0));
  v[0] = kPi / 3;
  CHECK(chord(spec, 0, u, 0, v) == doctest::Approx(1.0));

  // Two circles, centers (0,0) and (5,0), radius 1: nearest points 3 apart.
  ComponentSpec a, b;
  a.kind = b.kind = ShapeKind::Circle;
  a.p0 = b.p0 = 1.0;
  b.center[0] = 5.0;
  b.sign = -1;
  ManifoldSpec two;
  two.components = {a, b};
  two.validate();
  u[0] = 0.0;
  v[0] = kPi;
  CHECK(chord(two, 0, u, 1, v) == doctest::Approx(3.0));

  // Symmetry is exact.
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    u[0] = rng.uniform(0, 2 * kPi);
    v[0] = rng.uniform(0, 2 * kPi);
    CHECK(chord(two, 0, u, 1, v) == chord(two, 1, v, 0, u));
  }
}

TEST_CASE("grid reproduces exact areas") {
  SUBCASE("circle circumference") {
    auto grid = build_grid(circle(1.0), 64);
    CHECK(grid.total_area() == doctest::Approx(2 * kPi).epsilon(1e-12));
    CHECK(grid.W.sum() == doctest::Approx(2 * kPi).epsilon(1e-12));
  }
  SUBCASE("torus area (2 pi R0)(2 pi r)") {
    ComponentSpec c;
    c.kind = ShapeKind::Torus;
    c.p0 = 2.0;
    c.p1 = 0.5;
    auto grid = build_grid(ManifoldSpec::single(c), 32);
    CHECK(grid.total_area() ==
          doctest::Approx(4 * kPi * kPi * 2.0 * 0.5).epsilon(1e-12));
  }
  SUBCASE("sphere area via pole-weighted chart") {
    ComponentSpec c;
    c.kind = ShapeKind::Sphere;
    c.p0 = 1.0;
    auto grid = build_grid(ManifoldSpec::single(c), 32);
    CHECK(std::abs(grid.total_area() - 4 * kPi) <= 1e-6);
    // Smooth non-constant integrand: exp(z) over the unit sphere equals
    // 4 pi sinh(1).
    const auto& gc = grid.comps[0];
    Real acc = 0;
    for (int i = 0; i < gc.size(); ++i)
      acc += gc.w[i] * gc.J[i] * std::exp(gc.nodes(2, i));
    CHECK(acc == doctest::Approx(4 * kPi * std::sinh(1.0)).epsilon(1e-10));
  }
}

TEST_CASE("trapezoidal rule is spectrally accurate on the circle") {
  auto grid = build_grid(circle(1.0), 64);
  const auto& gc = grid.comps[0];
  Real acc = 0;
  for (int i = 0; i < gc.size(); ++i)
    acc += gc.w[i] * gc.J[i] * std::exp(std::sin(gc.u[i]));
  const Real ref = oracle::adaptive_quad(
      [](Real t) { return std::exp(std::sin(t)); }, 0, 2 * kPi, 1e-15);
  CHECK(std::abs(acc - ref) <= 1e-12);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(build_grid(circle(1.0), 48), ConfigError);  // not a power of 2
  CHECK_THROWS_AS(build_grid(circle(1.0), 8), ConfigError);   // too small
  ComponentSpec bad;
  bad.kind = ShapeKind::Torus;
  bad.p0 = 0.5;
  bad.p1 = 0.5;  // R0 > r violated
  CHECK_THROWS_AS(ManifoldSpec::single(bad), ConfigError);

  // Overlapping components are rejected.
  ComponentSpec a, b;
  a.kind = b.kind = ShapeKind::Circle;
  a.p0 = b.p0 = 1.0;
  b.center[0] = 0.5;
  ManifoldSpec two;
  two.components = {a, b};
  CHECK_THROWS_AS(two.validate(), ConfigError);
}
