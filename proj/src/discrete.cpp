#include "rieszlab/discrete.hpp"

#include <cmath>

#include "rieszlab/fitting.hpp"
#include "rieszlab/parallel.hpp"
#include "rieszlab/rng.hpp"

namespace rieszlab {

namespace {

constexpr Real kPi = EIGEN_PI;

Matrix embed_all(const ComponentSpec& c, const Matrix& params) {
  Matrix pts(c.ambient_dim(), params.cols());
  for (Index j = 0; j < params.cols(); ++j)
    pts.col(j) = embed(c, params.col(j));
  return pts;
}

Real energy_of(const Matrix& pts, Real s) {
  Real e = 0;
  for (Index i = 0; i < pts.cols(); ++i)
    for (Index j = i + 1; j < pts.cols(); ++j) {
      const Real r2 = (pts.col(i) - pts.col(j)).squaredNorm();
      if (r2 == 0.0) throw NumericError("coincident points: infinite energy");
      e += 2.0 * std::pow(r2, -s / 2);
    }
  return e;
}

// Energy and its gradient in chart parameters.
Real energy_grad(const ComponentSpec& c, const Matrix& params, Real s,
                 Matrix& grad) {
  const int m = c.manifold_dim();
  const Index n = params.cols();
  Matrix pts = embed_all(c, params);
  std::vector<Matrix> tang(n);
  {
    Vector x;
    Matrix T;
    for (Index j = 0; j < n; ++j) {
      embed_frame(c, params.col(j), x, T);
      tang[j] = T;
    }
  }
  grad = Matrix::Zero(m, n);
  Real e = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Vector d = pts.col(i) - pts.col(j);
      const Real r2 = d.squaredNorm();
      if (r2 == 0.0) throw NumericError("coincident points: infinite energy");
      const Real k = std::pow(r2, -s / 2);
      e += 2.0 * k;
      const Real coef = -2.0 * s * k / r2;
      grad.col(i) += coef * (tang[i].transpose() * d);
      grad.col(j) -= coef * (tang[j].transpose() * d);
    }
  return e;
}

// Analytic Hessian of the pair energy in chart parameters, E = sum 2 phi(r^2)
// over pairs with phi(t) = t^(-s/2).  Off-diagonal blocks need only the
// tangents; diagonal blocks add the curvature term d . x_{|ab} through the
// Gaussian equations.
Matrix energy_hessian(const ComponentSpec& c, const Matrix& params, Real s) {
  const int m = c.manifold_dim();
  const Index n = params.cols();
  const int dof = m * static_cast<int>(n);
  Matrix pts(c.ambient_dim(), n);
  std::vector<GeometryJet> jets(n);
  for (Index j = 0; j < n; ++j) {
    component_jet_into(c, params.col(j), jets[j]);
    pts.col(j) = jets[j].x;
  }
  Matrix H = Matrix::Zero(dof, dof);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Vector d = pts.col(i) - pts.col(j);
      const Real r2 = d.squaredNorm();
      const Real phi1 = -(s / 2) * std::pow(r2, -s / 2 - 1);
      const Real phi2 = (s / 2) * (s / 2 + 1) * std::pow(r2, -s / 2 - 2);
      const Vector gi = jets[i].tangents.transpose() * d;   // dr2/du_i / 2
      const Vector gj = -(jets[j].tangents.transpose() * d);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          // cross block (i, j)
          const Real cross =
              2.0 * (phi2 * (2 * gi[a]) * (2 * gj[b]) +
                     phi1 * (-2.0) * jets[i].tangents.col(a).dot(
                                         jets[j].tangents.col(b)));
          H(i * m + a, j * m + b) += cross;
          H(j * m + b, i * m + a) += cross;
          // diagonal blocks (i, i) and (j, j)
          Real xab_d_i = jets[i].sff(a, b) * d.dot(jets[i].normal);
          Real xab_d_j = -jets[j].sff(a, b) * d.dot(jets[j].normal);
          for (int l = 0; l < m; ++l) {
            xab_d_i += jets[i].christoffel(l, a, b) * gi[l];
            xab_d_j += jets[j].christoffel(l, a, b) * gj[l];
          }
          const Real dii =
              2.0 * (phi2 * (2 * gi[a]) * (2 * gi[b]) +
                     phi1 * 2.0 *
                         (jets[i].tangents.col(a).dot(jets[i].tangents.col(b)) +
                          xab_d_i));
          const Real djj =
              2.0 * (phi2 * (2 * gj[a]) * (2 * gj[b]) +
                     phi1 * 2.0 *
                         (jets[j].tangents.col(a).dot(jets[j].tangents.col(b)) +
                          xab_d_j));
          H(i * m + a, i * m + b) += dii;
          H(j * m + a, j * m + b) += djj;
        }
    }
  return H;
}

Matrix random_params(const ComponentSpec& c, int n, Rng& rng) {
  const int m = c.manifold_dim();
  Matrix p(m, n);
  for (int j = 0; j < n; ++j) {
    p(0, j) = (c.kind == ShapeKind::Sphere)
                  ? std::acos(rng.uniform(-1.0, 1.0))
                  : rng.uniform(0.0, 2 * kPi);
    if (m == 2) p(1, j) = rng.uniform(0.0, c.period_v());
  }
  return p;
}

PointConfiguration run_single(const ComponentSpec& c, int component,
                              int n_points, Real s, std::uint64_t seed,
                              std::uint64_t stream,
                              const OptimizeOptions& opts) {
  Rng rng(seed, stream);
  Matrix params = random_params(c, n_points, rng);
  const int m = c.manifold_dim();
  const int dof = m * n_points;

  Matrix grad;
  Real e = energy_grad(c, params, s, grad);
  Real step = 1e-3;
  for (int it = 0; it < opts.max_gd_iterations; ++it) {
    if (grad.cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, e)) break;
    Matrix trial = params - step * grad;
    Matrix tgrad;
    Real et;
    try {
      et = energy_grad(c, trial, s, tgrad);
    } catch (const NumericError&) {
      step *= 0.25;
      continue;
    }
    if (et < e) {
      params.swap(trial);
      grad.swap(tgrad);
      e = et;
      step *= 1.25;
    } else {
      step *= 0.5;
      if (step < 1e-16) break;
    }
  }

  // Damped Newton polish with the analytic pair-energy Hessian; the global
  // rotation null mode is handled by the Levenberg shift.
  for (int it = 0; it < opts.max_newton_iterations; ++it) {
    if (grad.cwiseAbs().maxCoeff() <= opts.grad_tol * std::max(1.0, e)) break;
    Matrix H = energy_hessian(c, params, s);
    Vector g(dof);
    for (int r = 0; r < dof; ++r) g[r] = grad(r % m, r / m);
    Real mu = 1e-10 * std::max(1.0, H.cwiseAbs().maxCoeff());
    bool accepted = false;
    for (int tries = 0; tries < 12 && !accepted; ++tries) {
      Matrix Hs = H + mu * Matrix::Identity(dof, dof);
      Eigen::LDLT<Matrix> ldlt(Hs);
      const Vector d = ldlt.solve(-g);
      Matrix trial = params;
      for (int r = 0; r < dof; ++r) trial(r % m, r / m) += d[r];
      Matrix tgrad;
      Real et;
      try {
        et = energy_grad(c, trial, s, tgrad);
      } catch (const NumericError&) {
        mu *= 10;
        continue;
      }
      if (et <= e) {
        params.swap(trial);
        grad.swap(tgrad);
        e = et;
        accepted = true;
      } else {
        mu *= 10;
      }
    }
    if (!accepted) break;
  }

  PointConfiguration cfg;
  cfg.component = component;
  cfg.params = params;
  cfg.s = s;
  cfg.seed = seed;
  cfg.energy = e;
  cfg.grad_norm = grad.cwiseAbs().maxCoeff();
  return cfg;
}

}  // namespace

Real discrete_energy(const ManifoldSpec& spec, int component,
                     const Matrix& params, Real s) {
  const ComponentSpec& c = spec.components.at(component);
  return energy_of(embed_all(c, params), s);
}

PointConfiguration optimize_points(const ManifoldSpec& spec, int component,
                                   int n_points, Real s, std::uint64_t seed,
                                   int restarts, const OptimizeOptions& opts) {
  if (n_points < 2) throw ArgumentError("need at least two points");
  const ComponentSpec& c = spec.components.at(component);
  if (!(s > c.manifold_dim()))
    throw ArgumentError("hypersingular regime requires s > manifold dim");
  restarts = std::max(1, restarts);

  std::vector<PointConfiguration> results(restarts);
  parallel_for(restarts, [&](long r) {
    results[r] = run_single(c, component, n_points, s, seed,
                            static_cast<std::uint64_t>(r), opts);
  });
  int best = 0;
  Real worst = results[0].energy;
  for (int r = 1; r < restarts; ++r) {
    if (results[r].energy < results[best].energy) best = r;  // ties: lowest r
    worst = std::max(worst, results[r].energy);
  }
  PointConfiguration cfg = results[best];
  cfg.restart_spread =
      (worst - cfg.energy) / std::max(1e-300, std::abs(cfg.energy));
  return cfg;
}

SweepResult scaling_fit(const ManifoldSpec& spec, int component, Real s,
                        const std::vector<int>& n_list, std::uint64_t seed,
                        int restarts, const OptimizeOptions& opts) {
  if (n_list.size() < 4) throw ArgumentError("fewer than 4 sweep points");
  const int d = spec.components.at(component).manifold_dim();
  SweepResult table;
  table.columns = {"N",   "s",   "energy", "scaled_energy",
                   "gap", "restart_spread", "seed"};
  std::vector<Real> scaled;
  for (int n : n_list) {
    PointConfiguration cfg =
        optimize_points(spec, component, n, s, seed, restarts, opts);
    const Real sc = cfg.energy * std::pow(Real(n), -(1.0 + s / d));
    const Real gap = equidistribution_gap(spec, component, cfg.params);
    table.rows.push_back({Real(n), s, cfg.energy, sc, gap,
                          cfg.restart_spread, Real(cfg.seed)});
    scaled.push_back(sc);
  }
  const RichardsonResult rich = richardson(scaled);
  table.fitted.emplace_back("limit", rich.limit);
  table.fitted.emplace_back("order", rich.order);
  table.fitted.emplace_back("last_step", rich.last_step);
  return table;
}

Real equidistribution_gap(const ManifoldSpec& spec, int component,
                          const Matrix& params) {
  const ComponentSpec& c = spec.components.at(component);
  const int m = c.manifold_dim();
  const Index n = params.cols();

  // Fixed bank of 20 smooth chart harmonics.  Frequencies stay below 8 so
  // the bank is aliasing-free on every admissible configuration size.
  struct Mode { int k1, k2; Real phase; };
  std::vector<Mode> modes;
  if (m == 1) {
    for (int k = 1; k <= 7; ++k) {
      modes.push_back({k, 0, 0.0});
      modes.push_back({k, 0, -kPi / 2});  // sine
    }
    for (int k = 1; k <= 6; ++k) modes.push_back({k, 0, kPi / 4});
  } else {
    const int pairs[10][2] = {{1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2},
                              {2, 1}, {1, 2}, {2, 2}, {3, 0}, {0, 3}};
    for (auto& pr : pairs) {
      modes.push_back({pr[0], pr[1], 0.0});
      modes.push_back({pr[0], pr[1], -kPi / 2});
    }
  }

  // Surface means on a reference grid.
  ManifoldSpec single;
  single.components.push_back(c);
  const Grid ref = build_grid(single, (m == 1) ? 512 : 64);
  const auto& gc = ref.comps[0];

  Real gap = 0;
  for (const auto& mode : modes) {
    auto eval = [&](Real u, Real v) {
      return std::cos(mode.k1 * u + mode.k2 * v + mode.phase);
    };
    Real mean = 0;
    for (int i = 0; i < gc.size(); ++i)
      mean += gc.w[i] * gc.J[i] *
              eval(gc.u[i / gc.n_v], gc.n_v > 1 ? gc.v[i % gc.n_v] : 0.0);
    mean /= gc.area;
    Real avg = 0;
    for (Index j = 0; j < n; ++j)
      avg += eval(params(0, j), m == 2 ? params(1, j) : 0.0);
    avg /= Real(n);
    gap = std::max(gap, std::abs(avg - mean));
  }
  return gap;
}

}  // namespace rieszlab
