#include "rieszlab/discrete.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rieszlab/fitting.hpp"

using namespace rieszlab;

namespace {

constexpr Real kPi = EIGEN_PI;

ManifoldSpec unit_circle() {
  ComponentSpec c;
  c.kind = ShapeKind::Circle;
  c.p0 = 1.0;
  return ManifoldSpec::single(c);
}

Matrix equally_spaced(int n) {
  Matrix p(1, n);
  for (int j = 0; j < n; ++j) p(0, j) = 2 * kPi * j / n;
  return p;
}

Real eq_energy(int n, Real s) {
  Real acc = 0;
  for (int j = 1; j < n; ++j)
    acc += std::pow(2 * std::sin(kPi * j / n), -s);
  return n * acc;
}

}  // namespace

TEST_CASE("discrete energy closed cases") {
  auto spec = unit_circle();
  SUBCASE("two antipodal points at s = 2") {
    Matrix p(1, 2);
    p << 0.0, kPi;
    CHECK(discrete_energy(spec, 0, p, 2.0) == doctest::Approx(0.5));
  }
  SUBCASE("equilateral triangle at s = 2") {
    Matrix p(1, 3);
    p << 0.0, 2 * kPi / 3, 4 * kPi / 3;
    CHECK(discrete_energy(spec, 0, p, 2.0) == doctest::Approx(2.0));
  }
  SUBCASE("40 equally spaced points against the direct sum") {
    CHECK(discrete_energy(spec, 0, equally_spaced(40), 2.0) ==
          doctest::Approx(eq_energy(40, 2.0)).epsilon(1e-13));
  }
  SUBCASE("coincident points rejected") {
    Matrix p(1, 3);
    p << 0.1, 0.1, 2.0;
    CHECK_THROWS_AS(discrete_energy(spec, 0, p, 2.0), NumericError);
  }
}

TEST_CASE("optimizer recovers the equally spaced circle configuration") {
  auto spec = unit_circle();
  const int n = 40;
  PointConfiguration cfg = optimize_points(spec, 0, n, 2.0, 20240901, 8);

  // Energy within a hair of (and not below) the known optimum.
  const Real opt = eq_energy(n, 2.0);
  CHECK(cfg.energy <= opt + 1e-9);
  CHECK(cfg.energy >= opt - 1e-9);

  // Spacing deviations below 1e-3 of the mean gap.
  std::vector<Real> u(cfg.params.data(), cfg.params.data() + n);
  for (auto& x : u) x = std::fmod(std::fmod(x, 2 * kPi) + 2 * kPi, 2 * kPi);
  std::sort(u.begin(), u.end());
  const Real gap0 = 2 * kPi / n;
  for (int j = 0; j < n; ++j) {
    const Real d = (j + 1 < n) ? u[j + 1] - u[j] : u[0] + 2 * kPi - u[n - 1];
    CHECK(std::abs(d - gap0) <= 1e-3 * gap0);
  }

  // Weak-star gap of the optimized configuration.
  CHECK(equidistribution_gap(spec, 0, cfg.params) <= 1e-10);

  // Determinism: same seed, same result.
  PointConfiguration cfg2 = optimize_points(spec, 0, n, 2.0, 20240901, 8);
  CHECK(cfg2.energy == cfg.energy);
  CHECK((cfg2.params - cfg.params).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two points attain the diameter") {
  ComponentSpec c;
  c.kind = ShapeKind::Ellipse;
  c.p0 = 1.5;
  c.p1 = 0.6;
  auto spec = ManifoldSpec::single(c);
  PointConfiguration cfg = optimize_points(spec, 0, 2, 2.0, 3, 6);
  const Vector x0 = embed(c, cfg.params.col(0));
  const Vector x1 = embed(c, cfg.params.col(1));
  CHECK((x0 - x1).norm() == doctest::Approx(2 * 1.5).epsilon(1e-6));
}

TEST_CASE("equidistribution gap") {
  auto spec = unit_circle();
  SUBCASE("equally spaced points have vanishing gap") {
    for (int n : {8, 16, 64})
      CHECK(equidistribution_gap(spec, 0, equally_spaced(n)) <= 1e-12);
  }
  SUBCASE("a cluster has a large gap") {
    Matrix p(1, 16);
    for (int j = 0; j < 16; ++j) p(0, j) = 0.01 * j;
    CHECK(equidistribution_gap(spec, 0, p) >= 0.5);
  }
}

TEST_CASE("scaling law on the circle") {
  auto spec = unit_circle();
  const Real s = 2.0;
  SweepResult sweep = scaling_fit(spec, 0, s, {20, 40, 80, 160}, 7, 6);

  // Oracle limit: direct summation of equally spaced configurations,
  // Richardson-extrapolated (equals 2 zeta(2)/(2 pi)^2 = 1/12).
  std::vector<Real> xs;
  for (int n : {160, 320, 640, 1280})
    xs.push_back(eq_energy(n, s) * std::pow(Real(n), -(1.0 + s)));
  const Real oracle_limit = richardson(xs).limit;
  CHECK(oracle_limit == doctest::Approx(1.0 / 12).epsilon(1e-8));

  CHECK(sweep.fit("limit") == doctest::Approx(oracle_limit).epsilon(0.02));
  CHECK(sweep.rows.size() == 4);
  CHECK_THROWS_AS(scaling_fit(spec, 0, s, {20, 40, 80}, 7, 2), ArgumentError);
}

TEST_CASE("radius scaling of the limit") {
  // Kernel homogeneity: energies on radius R scale by R^-s.
  ComponentSpec c;
  c.kind = ShapeKind::Circle;
  c.p0 = 2.0;
  auto big = ManifoldSpec::single(c);
  const Real e1 = discrete_energy(unit_circle(), 0, equally_spaced(32), 2.0);
  const Real e2 = discrete_energy(big, 0, equally_spaced(32), 2.0);
  CHECK(e2 == doctest::Approx(e1 / 4.0).epsilon(1e-13));
}

TEST_CASE("torus configuration is self-consistent") {
  ComponentSpec c;
  c.kind = ShapeKind::Torus;
  c.p0 = 2.0;
  c.p1 = 0.5;
  auto spec = ManifoldSpec::single(c);
  OptimizeOptions opts;
  opts.max_gd_iterations = 600;
  opts.max_newton_iterations = 12;
  opts.grad_tol = 1e-8;
  PointConfiguration cfg = optimize_points(spec, 0, 36, 3.0, 11, 4, opts);
  CHECK(cfg.energy > 0);
  CHECK(cfg.restart_spread >= 0);
  CHECK(equidistribution_gap(spec, 0, cfg.params) < 0.8);
}

TEST_CASE("discrete energies bridge to the punched continuum energy") {
  // (1/N^2) sum over pairs with |x_i - x_j| >= delta of |x_i-x_j|^(-s)
  // against the punched quadratic form of the unit density, s = beta + 1.
  const Real beta = 1.0, s = beta + 1.0, delta = 0.3;
  const int n = 512;
  const Matrix p = equally_spaced(n);
  Matrix pts(2, n);
  for (int j = 0; j < n; ++j) {
    pts(0, j) = std::cos(p(0, j));
    pts(1, j) = std::sin(p(0, j));
  }
  Real disc = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Real r = (pts.col(i) - pts.col(j)).norm();
      if (r >= delta) disc += std::pow(r, -s);
    }
  disc /= Real(n) * Real(n);
  const Real continuum =
      oracle::circle_punched_mode(beta, delta, 0) / (4 * kPi * kPi);
  CHECK(disc == doctest::Approx(continuum).epsilon(0.02));
}
