#include "rieszlab/gauss.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "rieszlab/fitting.hpp"
#include "rieszlab/rng.hpp"
#include "rieszlab/sobolev.hpp"

using namespace rieszlab;

namespace {

constexpr Real kPi = EIGEN_PI;

Grid circle_grid(int n) {
  ComponentSpec c;
  c.kind = ShapeKind::Circle;
  c.p0 = 1.0;
  return build_grid(ManifoldSpec::single(c), n);
}

// Hand-built circle grid below the build_grid minimum, for the tiny
// enumeration-oracle instances.
Grid tiny_circle_grid(int n) {
  ComponentSpec c;
  c.kind = ShapeKind::Circle;
  c.p0 = 1.0;
  Grid grid;
  grid.spec = ManifoldSpec::single(c);
  Grid::Component gc;
  gc.index = 0;
  gc.n_u = n;
  gc.n_v = 1;
  gc.u.resize(n);
  gc.w = Vector::Constant(n, 2 * kPi / n);
  gc.J = Vector::Ones(n);
  gc.nodes.resize(2, n);
  for (int i = 0; i < n; ++i) {
    gc.u[i] = 2 * kPi * i / n;
    gc.nodes(0, i) = std::cos(gc.u[i]);
    gc.nodes(1, i) = std::sin(gc.u[i]);
  }
  gc.h_u = (gc.nodes.col(0) - gc.nodes.col(1)).norm();
  gc.area = gc.w.dot(gc.J);
  grid.comps.push_back(gc);
  grid.offsets = {0, n};
  grid.total = n;
  grid.W = gc.w.cwiseProduct(gc.J);
  grid.h_grid = gc.h_u;
  return grid;
}

GaussData constant_data(const Grid& grid, Real gval = 1.0, Real aval = 1.0) {
  GaussData d;
  d.f = Vector::Zero(grid.total);
  d.g = Vector::Constant(grid.total, gval);
  d.a.assign(grid.comps.size(), aval);
  return d;
}

// Exhaustive active-set enumeration for tiny cone QPs: every sign pattern,
// keep the KKT-consistent candidates, return the best objective.
Vector enumerate_qp(const Matrix& Q, const Vector& b, const Grid& grid,
                    const GaussData& data) {
  const int n = grid.total;
  const Vector wg = grid.W.cwiseProduct(data.g);
  Vector best;
  Real best_val = std::numeric_limits<Real>::infinity();
  for (int mask = 0; mask < (1 << n); ++mask) {
    std::vector<int> free;
    for (int i = 0; i < n; ++i)
      if (!(mask & (1 << i))) free.push_back(i);
    if (free.empty()) continue;
    const int F = static_cast<int>(free.size());
    Matrix K = Matrix::Zero(F + 1, F + 1);
    Vector rhs(F + 1);
    for (int a = 0; a < F; ++a) {
      for (int c = 0; c < F; ++c) K(a, c) = Q(free[a], free[c]);
      K(a, F) = -wg[free[a]];
      K(F, a) = wg[free[a]];
      rhs[a] = b[free[a]];
    }
    rhs[F] = data.a[0];
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) continue;
    const Vector sol = lu.solve(rhs);
    Vector sigma = Vector::Zero(n);
    bool ok = true;
    for (int a = 0; a < F; ++a) {
      sigma[free[a]] = sol[a];
      if (sol[a] < -1e-11) ok = false;
    }
    if (!ok) continue;
    const Real lambda = sol[F];
    const Vector dual = 2.0 * (Q * sigma - b) - 2.0 * lambda * wg;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i))
        if (dual[i] < -1e-9 * std::max(1.0, dual.cwiseAbs().maxCoeff()))
          ok = false;
    if (!ok) continue;
    const Real val = sigma.dot(Q * sigma) - 2 * b.dot(sigma);
    if (val < best_val) {
      best_val = val;
      best = sigma;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("gauss_value") {
  auto grid = circle_grid(64);
  OperatorMatrix V;
  V.A = Matrix::Zero(grid.total, grid.total);
  Rng rng(17);
  Matrix R(grid.total, grid.total);
  for (int i = 0; i < grid.total; ++i)
    for (int j = 0; j < grid.total; ++j) R(i, j) = rng.uniform(-1, 1);
  V.A = 0.5 * (R + R.transpose());

  SUBCASE("zero data") {
    CHECK(gauss_value(V, grid, Vector::Zero(grid.total),
                      Vector::Zero(grid.total)) == 0.0);
  }
  SUBCASE("f = V phi completes the square") {
    Vector phi(grid.total);
    for (int i = 0; i < grid.total; ++i) phi[i] = rng.uniform(-1, 1);
    const Vector f = (V.A * phi).cwiseQuotient(grid.W);
    CHECK(gauss_value(V, grid, f, phi) ==
          doctest::Approx(-phi.dot(V.A * phi)).epsilon(1e-12));
  }
  SUBCASE("matches the direct double sum") {
    Vector phi(grid.total), f(grid.total);
    for (int i = 0; i < grid.total; ++i) {
      phi[i] = rng.uniform(-1, 1);
      f[i] = rng.uniform(-1, 1);
    }
    Real direct = 0;
    for (int i = 0; i < grid.total; ++i) {
      for (int j = 0; j < grid.total; ++j)
        direct += phi[i] * V.A(i, j) * phi[j];
      direct -= 2 * f[i] * grid.W[i] * phi[i];
    }
    CHECK(gauss_value(V, grid, f, phi) ==
          doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("sigma0 and lambda0") {
  auto grid = circle_grid(64);
  SUBCASE("g = 1, a = 1 gives the constant charge 1/(2 pi)") {
    auto data = constant_data(grid);
    auto [s0, l0] = sigma0_lambda0(grid, data);
    CHECK(s0[5] == doctest::Approx(1.0 / (2 * kPi)).epsilon(1e-13));
    CHECK(l0[0] == doctest::Approx(1.0 / (2 * kPi)).epsilon(1e-13));
  }
  SUBCASE("g = 2, a = 1") {
    auto data = constant_data(grid, 2.0);
    auto [s0, l0] = sigma0_lambda0(grid, data);
    CHECK(s0[0] == doctest::Approx(1.0 / (4 * kPi)).epsilon(1e-13));
    CHECK(l0[0] == doctest::Approx(1.0 / (8 * kPi)).epsilon(1e-13));
  }
  SUBCASE("constraint reproduced to 1e-12") {
    GaussData data;
    data.g.resize(grid.total);
    for (int i = 0; i < grid.total; ++i)
      data.g[i] = 1.0 + 0.3 * std::cos(grid.comps[0].u[i]);
    data.f = Vector::Zero(grid.total);
    data.a = {1.0};
    auto [s0, l0] = sigma0_lambda0(grid, data);
    CHECK(std::abs(grid.W.cwiseProduct(data.g).dot(s0) - 1.0) <= 1e-12);
  }
  SUBCASE("nonpositive data rejected") {
    auto data = constant_data(grid);
    data.g[3] = 0.0;
    CHECK_THROWS_AS(sigma0_lambda0(grid, data), ArgumentError);
    auto data2 = constant_data(grid);
    data2.a[0] = -1.0;
    CHECK_THROWS_AS(sigma0_lambda0(grid, data2), ArgumentError);
  }
}

TEST_CASE("sigma1 and lambda1") {
  auto grid = circle_grid(64);
  GaussData data;
  data.g.resize(grid.total);
  for (int i = 0; i < grid.total; ++i)
    data.g[i] = 1.0 + 0.25 * std::sin(grid.comps[0].u[i]);
  data.a = {1.0};
  data.f = Vector::Zero(grid.total);
  auto [s0, l0] = sigma0_lambda0(grid, data);

  // A surrogate smooth operator.
  LinOp A = [&](const Vector& v) {
    Vector out = v;
    for (int i = 0; i < grid.total; ++i)
      out[i] = 2 * v[i] + std::cos(grid.comps[0].u[i]);
    return out;
  };
  SUBCASE("f = A sigma0 gives sigma1 = 0") {
    data.f = A(s0);
    auto [s1, l1] = sigma1_lambda1(grid, data, s0, A);
    CHECK(s1.cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(std::abs(l1[0]) <= 1e-13);
  }
  SUBCASE("f = A sigma0 + g gives lambda1 = -1, sigma1 = 0") {
    data.f = A(s0) + data.g;
    auto [s1, l1] = sigma1_lambda1(grid, data, s0, A);
    CHECK(l1[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(s1.cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("built-in orthogonality (g, sigma1) = 0") {
    for (int i = 0; i < grid.total; ++i)
      data.f[i] = std::sin(3 * grid.comps[0].u[i]);
    auto [s1, l1] = sigma1_lambda1(grid, data, s0, A);
    CHECK(std::abs(grid.W.cwiseProduct(data.g).dot(s1)) <= 1e-10);
  }
}

TEST_CASE("perturbed solver") {
  auto grid = circle_grid(128);
  KernelSpec ks = KernelSpec::make(grid.spec, 0.5, 0.6);  // beta = 0.5
  Assembler assem(grid, ks);
  const OperatorMatrix& V = assem.fp_full();
  const int orientation = -1;

  GaussData data;
  data.g.resize(grid.total);
  data.f.resize(grid.total);
  for (int i = 0; i < grid.total; ++i) {
    const Real u = grid.comps[0].u[i];
    data.g[i] = 1.0 + 0.3 * std::cos(u);
    data.f[i] = std::cos(2 * u);
  }
  data.a = {1.0};
  auto [s0, l0] = sigma0_lambda0(grid, data);

  SUBCASE("eps = 0 returns sigma0 exactly") {
    auto rep = solve_perturbed(V, orientation, grid, data, 0.0);
    CHECK(rep.interior);
    CHECK((rep.sigma - s0).cwiseAbs().maxCoeff() <= 1e-11);
    CHECK(rep.lambda[0] == doctest::Approx(l0[0]).epsilon(1e-10));
    CHECK(rep.feasibility <= 1e-10);
  }
  SUBCASE("f = V sigma0 freezes the minimizer at sigma0") {
    GaussData d2 = data;
    d2.f = (Real(orientation) * (V.A * s0)).cwiseQuotient(grid.W);
    for (Real eps : {1e-3, 1e-2}) {
      auto rep = solve_perturbed(V, orientation, grid, d2, eps);
      CHECK(l2_norm(grid, rep.sigma - s0) <= 1e-8);
    }
  }
  SUBCASE("first-order rate in eps") {
    std::vector<Real> epss, dists;
    for (Real eps : {2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
      auto rep = solve_perturbed(V, orientation, grid, data, eps);
      CHECK(rep.interior);
      epss.push_back(eps);
      dists.push_back(l2_norm(grid, rep.sigma - s0));
    }
    CHECK(loglog_slope_inner(epss, dists) == doctest::Approx(1.0).epsilon(0.08));
  }
  SUBCASE("kkt stationarity of the interior path") {
    auto rep = solve_perturbed(V, orientation, grid, data, 0.01);
    CHECK(rep.kkt_residual <= 1e-8);
  }
}

TEST_CASE("cone solver against exhaustive enumeration") {
  auto grid = tiny_circle_grid(8);
  Rng rng(20240817);
  int checked = 0;
  for (int inst = 0; inst < 50; ++inst) {
    Matrix R(8, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) R(i, j) = rng.uniform(-1, 1);
    Matrix Q = R.transpose() * R + 0.5 * Matrix::Identity(8, 8);
    GaussData data;
    data.g.resize(8);
    data.f = Vector::Zero(8);
    for (int i = 0; i < 8; ++i) data.g[i] = rng.uniform(0.5, 2.0);
    data.a = {rng.uniform(0.5, 2.0)};
    Vector b(8);
    for (int i = 0; i < 8; ++i) b[i] = rng.uniform(-2, 2);

    const Vector oracle_sig = enumerate_qp(Q, b, grid, data);
    REQUIRE(oracle_sig.size() == 8);
    auto rep = solve_cone_qp(Q, b, grid, data);
    CHECK((rep.sigma - oracle_sig).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(rep.kkt_residual <= 1e-7);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("gauss solver") {
  auto grid = circle_grid(128);
  KernelSpec ks = KernelSpec::make(grid.spec, 0.5, 0.6);
  Assembler assem(grid, ks);
  const OperatorMatrix& V = assem.fp_full();
  const int orientation = -1;

  SUBCASE("symmetric data gives the constant a/(g |Gamma|)") {
    auto data = constant_data(grid, 2.0, 1.0);
    auto rep = solve_gauss(V, orientation, grid, data);
    const Real expect = 1.0 / (2.0 * 2 * kPi);
    CHECK((rep.sigma.array() - expect).abs().maxCoeff() <= 1e-9);
    CHECK(rep.feasibility <= 1e-10);
  }
  SUBCASE("strongly negative field on half the circle activates the bound") {
    GaussData data = constant_data(grid);
    for (int i = 0; i < grid.total; ++i) {
      const Real u = grid.comps[0].u[i];
      data.f[i] = (u > kPi / 2 && u < 3 * kPi / 2) ? -40.0 : 0.5;
    }
    auto rep = solve_gauss(V, orientation, grid, data);
    CHECK(!rep.active.empty());
    CHECK(rep.kkt_residual <= 1e-7);
    CHECK(rep.sigma.minCoeff() >= 0.0);
    CHECK(rep.feasibility <= 1e-9);
  }
  SUBCASE("uniqueness: two starts agree") {
    GaussData data = constant_data(grid);
    for (int i = 0; i < grid.total; ++i)
      data.f[i] = std::sin(2 * grid.comps[0].u[i]) - 1.5;
    SolverOptions o1, o2;
    Rng rng(5);
    Vector start2(grid.total);
    for (int i = 0; i < grid.total; ++i) start2[i] = rng.uniform(0.0, 2.0);
    o2.start = start2;
    auto r1 = solve_gauss(V, orientation, grid, data, o1);
    auto r2 = solve_gauss(V, orientation, grid, data, o2);
    CHECK(l2_norm(grid, r1.sigma - r2.sigma) <= 1e-7);
  }
  SUBCASE("infeasible data rejected") {
    auto data = constant_data(grid);
    data.a[0] = -2.0;
    CHECK_THROWS_AS(solve_gauss(V, orientation, grid, data), ArgumentError);
  }
}

TEST_CASE("objective gradients match finite differences") {
  auto grid = circle_grid(64);
  Rng rng(31);
  Matrix R(grid.total, grid.total);
  for (int i = 0; i < grid.total; ++i)
    for (int j = 0; j < grid.total; ++j) R(i, j) = rng.uniform(-1, 1);
  const Matrix Q = 0.5 * (R + R.transpose());
  Vector b(grid.total), phi(grid.total), psi(grid.total);
  for (int i = 0; i < grid.total; ++i) {
    b[i] = rng.uniform(-1, 1);
    phi[i] = rng.uniform(-1, 1);
    psi[i] = rng.uniform(-1, 1);
  }
  auto obj = [&](const Vector& s) { return s.dot(Q * s) - 2 * b.dot(s); };
  const Vector grad = 2.0 * (Q * phi - b);
  const Real t = 1e-6;
  const Real fd = (obj(phi + t * psi) - obj(phi - t * psi)) / (2 * t);
  CHECK(grad.dot(psi) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("punched solver on the circle") {
  auto grid = circle_grid(256);
  KernelSpec ks = KernelSpec::make(grid.spec, 0.0, 0.9);  // beta = 1
  Assembler assem(grid, ks);
  GaussData data = constant_data(grid);
  for (int i = 0; i < grid.total; ++i)
    data.f[i] = 0.1 * std::cos(2 * grid.comps[0].u[i]);

  SUBCASE("punched_value consistency and trivial cases") {
    Vector phi(grid.total);
    Rng rng(2);
    for (int i = 0; i < grid.total; ++i) phi[i] = rng.uniform(0.1, 1.0);
    auto pv = punched_value(assem, 0.3, data.f, phi);
    CHECK(pv.mismatch <= 1e-8);
    auto pv2 = punched_value(assem, 2.5, Vector::Zero(grid.total), phi);
    CHECK(pv2.j_delta == 0.0);
    // Constant density against the adaptive cut oracle.
    const Vector one = Vector::Ones(grid.total);
    auto pv3 = punched_value(assem, 0.4, Vector::Zero(grid.total), one);
    CHECK(pv3.j_delta ==
          doctest::Approx(oracle::circle_punched_mode(1.0, 0.4, 0)).epsilon(1e-9));
  }
  SUBCASE("interior solve, eps recorded, monotone J") {
    Real prev = -std::numeric_limits<Real>::infinity();
    for (Real delta : {0.30, 0.24, 0.19, 0.15}) {  // decreasing
      auto rep = solve_punched(assem, grid, data, delta);
      CHECK(rep.interior);
      CHECK(rep.eps ==
            doctest::Approx(ks.beta * ks.c_m * std::pow(delta, ks.beta)));
      CHECK(rep.j_delta >= prev);  // J grows as delta shrinks
      prev = rep.j_delta;
      CHECK(rep.feasibility <= 1e-10);
    }
  }
  SUBCASE("constant-limit: sigma* approaches a/|Gamma|") {
    auto rep = solve_punched(assem, grid, data, 0.12);
    const Real uniform = 1.0 / (2 * kPi);
    const Real rel =
        l2_norm(grid, rep.sigma - Vector::Constant(grid.total, uniform)) /
        l2_norm(grid, Vector::Constant(grid.total, uniform));
    CHECK(rel <= 0.05);
  }
}

TEST_CASE("expansion sweep machinery") {
  auto grid = circle_grid(256);
  KernelSpec ks = KernelSpec::make(grid.spec, 1.0 - 1.5, 0.9);  // beta = 1.5
  Assembler assem(grid, ks);
  GaussData data = constant_data(grid);
  for (int i = 0; i < grid.total; ++i) {
    const Real u = grid.comps[0].u[i];
    data.g[i] = 1.0 + 0.3 * std::cos(u);
    data.f[i] = std::cos(2 * u);
  }

  SUBCASE("too few sweep points") {
    ExpansionFamily fam;
    fam.kind = ExpansionFamily::Perturbed;
    fam.sweep = {1e-2, 5e-3, 2e-3};
    CHECK_THROWS_AS(expansion_check(assem, -1, grid, data, fam),
                    ArgumentError);
  }
  SUBCASE("perturbed slopes") {
    ExpansionFamily fam;
    fam.kind = ExpansionFamily::Perturbed;
    fam.sweep = {4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3};
    auto sweep = expansion_check(assem, -1, grid, data, fam);
    CHECK(sweep.fit("slope_first_order") == doctest::Approx(1.0).epsilon(0.1));
    CHECK(sweep.fit("slope_second_order") >= 1.8);
    CHECK(sweep.rows.size() == 6);
  }
  SUBCASE("punched sweep: monotone J and blow-up constant") {
    ExpansionFamily fam;
    fam.kind = ExpansionFamily::Punched;
    fam.sweep = {0.20, 0.17, 0.15, 0.13, 0.11, 0.10};
    auto sweep = expansion_check(assem, -1, grid, data, fam);
    CHECK(sweep.fit("monotone_J") == 1.0);
    const auto [s0, l0] = sigma0_lambda0(grid, data);
    const Real limit = std::pow(l2_norm(grid, s0), 2) / (ks.beta * ks.c_m);
    CHECK(sweep.fit("jdelta_deltabeta_smallest") ==
          doctest::Approx(limit).epsilon(0.10));
  }
}
