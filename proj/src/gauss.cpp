#include "rieszlab/gauss.hpp"

#include <cmath>

#include "rieszlab/fitting.hpp"
#include "rieszlab/sobolev.hpp"

namespace rieszlab {

namespace {

Vector sign_vector(const Grid& grid) {
  Vector d(grid.total);
  for (const auto& gc : grid.comps)
    d.segment(grid.offsets[gc.index], gc.size())
        .setConstant(grid.spec.components[gc.index].sign);
  return d;
}

/// Constraint matrix: column l is (W g) restricted to component l.
Matrix constraint_matrix(const Grid& grid, const GaussData& data) {
  const int L = static_cast<int>(grid.comps.size());
  Matrix C = Matrix::Zero(grid.total, L);
  for (int l = 0; l < L; ++l) {
    const int off = grid.offsets[l], n = grid.comps[l].size();
    C.col(l).segment(off, n) =
        grid.W.segment(off, n).cwiseProduct(data.g.segment(off, n));
  }
  return C;
}

Vector a_vector(const GaussData& data) {
  Vector a(data.a.size());
  for (std::size_t i = 0; i < data.a.size(); ++i) a[i] = data.a[i];
  return a;
}

struct SaddleSolution {
  Vector sigma;
  std::vector<Real> lambda;
  bool ok = false;
};

// [[Q, -C], [C^T, 0]] [sigma; lambda] = [b; a].
SaddleSolution solve_saddle(const Matrix& Q, const Matrix& C, const Vector& b,
                            const Vector& a) {
  const int N = static_cast<int>(Q.rows()), L = static_cast<int>(C.cols());
  Matrix K = Matrix::Zero(N + L, N + L);
  K.topLeftCorner(N, N) = Q;
  K.topRightCorner(N, L) = -C;
  K.bottomLeftCorner(L, N) = C.transpose();
  Vector rhs(N + L);
  rhs.head(N) = b;
  rhs.tail(L) = a;
  Eigen::PartialPivLU<Matrix> lu(K);
  const Vector sol = lu.solve(rhs);
  SaddleSolution out;
  out.sigma = sol.head(N);
  out.lambda.assign(sol.tail(L).data(), sol.tail(L).data() + L);
  out.ok = (K * sol - rhs).cwiseAbs().maxCoeff() <=
           1e-8 * (1 + rhs.cwiseAbs().maxCoeff());
  return out;
}

// Projection onto {sigma >= 0, sum_i W_i g_i sigma_i = a} per component, in
// the W-weighted metric: sigma_i = max(0, v_i + mu g_i) with mu from a
// monotone scalar equation (bisection).
void project_simplex(const Grid& grid, const GaussData& data, Vector& v) {
  for (const auto& gc : grid.comps) {
    const int off = grid.offsets[gc.index], n = gc.size();
    auto wseg = grid.W.segment(off, n);
    auto gseg = data.g.segment(off, n);
    auto vseg = v.segment(off, n);
    const Real target = data.a[gc.index];
    auto mass = [&](Real mu) {
      Real m = 0;
      for (int i = 0; i < n; ++i)
        m += wseg[i] * gseg[i] * std::max(0.0, vseg[i] + mu * gseg[i]);
      return m - target;
    };
    Real lo = 0, hi = 0;
    if (mass(0) < 0) {
      hi = 1;
      while (mass(hi) < 0) hi *= 2;
    } else {
      lo = -1;
      while (mass(lo) > 0) lo *= 2;
    }
    for (int it = 0; it < 200; ++it) {
      const Real mid = 0.5 * (lo + hi);
      (mass(mid) < 0 ? lo : hi) = mid;
    }
    const Real mu = 0.5 * (lo + hi);
    for (int i = 0; i < n; ++i) vseg[i] = std::max(0.0, vseg[i] + mu * gseg[i]);
  }
}

struct KktData {
  Real residual = 0;
  std::vector<Real> lambda;
};

KktData kkt_residual(const Grid& grid, const GaussData& data, const Matrix& Q,
                     const Vector& b, const Vector& sigma) {
  // L2 gradient of sigma -> sigma^T Q sigma - 2 b^T sigma is
  // 2 (Q sigma - b) / W; stationarity: grad = lambda g on the support,
  // grad - lambda g >= 0 where sigma = 0.
  KktData out;
  const Vector grad =
      (2.0 * (Q * sigma - b)).cwiseQuotient(grid.W);
  Real scale = std::max(1.0, grad.cwiseAbs().maxCoeff());
  for (const auto& gc : grid.comps) {
    const int off = grid.offsets[gc.index], n = gc.size();
    Real num = 0, den = 0;
    for (int i = 0; i < n; ++i) {
      if (sigma[off + i] > 0) {
        num += grid.W[off + i] * grad[off + i] * data.g[off + i];
        den += grid.W[off + i] * data.g[off + i] * data.g[off + i];
      }
    }
    const Real lambda2 = (den > 0) ? num / den : 0.0;
    out.lambda.push_back(lambda2 / 2.0);
    for (int i = 0; i < n; ++i) {
      const Real r = grad[off + i] - lambda2 * data.g[off + i];
      if (sigma[off + i] > 0)
        out.residual = std::max(out.residual, std::abs(r) / scale);
      else
        out.residual = std::max(out.residual, std::max(0.0, -r) / scale);
    }
  }
  return out;
}

void fill_report_common(const Grid& grid, const GaussData& data,
                        const Matrix& Q, const Vector& b,
                        MinimizerReport& rep) {
  rep.active.clear();
  for (int i = 0; i < grid.total; ++i)
    if (rep.sigma[i] <= 0.0) rep.active.push_back(i);
  const KktData kkt = kkt_residual(grid, data, Q, b, rep.sigma);
  rep.kkt_residual = kkt.residual;
  const Matrix C = constraint_matrix(grid, data);
  rep.feasibility =
      (C.transpose() * rep.sigma - a_vector(data)).cwiseAbs().maxCoeff();
}

}  // namespace

void GaussData::validate(const Grid& grid) const {
  if (f.size() != grid.total || g.size() != grid.total)
    throw ArgumentError("f and g must be nodal vectors on the grid");
  if (static_cast<int>(a.size()) != static_cast<int>(grid.comps.size()))
    throw ArgumentError("one constraint value per component required");
  if (g.minCoeff() <= 0) throw ArgumentError("g must be strictly positive");
  for (Real ai : a)
    if (!(ai > 0)) throw ArgumentError("constraint values must be positive");
}

Vector MinimizerReport::signed_density(const Grid& grid) const {
  return sigma.cwiseProduct(sign_vector(grid));
}

Real gauss_value(const OperatorMatrix& op, const Grid& grid, const Vector& f,
                 const Vector& phi) {
  return phi.dot(op.A * phi) - 2.0 * f.dot(grid.W.cwiseProduct(phi));
}

PunchedValue punched_value(Assembler& assembler, Real delta, const Vector& f,
                           const Vector& phi) {
  const Grid& grid = assembler.grid();
  const KernelSpec& ks = assembler.kernel();
  PunchedValue out;
  out.eps = ks.beta * ks.c_m * std::pow(delta, ks.beta);
  const OperatorMatrix pun = assembler.punched(delta);
  out.j_delta = gauss_value(pun, grid, f, phi);
  if (delta >= grid.spec.diameter()) {
    out.j_decomposed = out.j_delta;
    return out;
  }
  auto [comp, prime] = assembler.compensators(delta);
  const Real l2sq = phi.dot(grid.W.cwiseProduct(phi));
  out.j_decomposed = l2sq / out.eps +
                     gauss_value(assembler.fp_full(), grid, f, phi) -
                     phi.dot(prime.A * phi);
  out.mismatch = std::abs(out.j_delta - out.j_decomposed) /
                 (1 + std::abs(out.j_delta));
  if (out.mismatch > 1e-8)
    throw NumericError("punched value decomposition mismatch");
  return out;
}

std::pair<Vector, std::vector<Real>> sigma0_lambda0(const Grid& grid,
                                                    const GaussData& data) {
  data.validate(grid);
  Vector sigma0(grid.total);
  std::vector<Real> lambda0;
  for (const auto& gc : grid.comps) {
    const int off = grid.offsets[gc.index], n = gc.size();
    const Real gg = data.g.segment(off, n)
                        .cwiseProduct(grid.W.segment(off, n))
                        .dot(data.g.segment(off, n));
    const Real l0 = data.a[gc.index] / gg;
    lambda0.push_back(l0);
    sigma0.segment(off, n) = l0 * data.g.segment(off, n);
  }
  return {sigma0, lambda0};
}

std::pair<Vector, std::vector<Real>> sigma1_lambda1(const Grid& grid,
                                                    const GaussData& data,
                                                    const Vector& sigma0,
                                                    const LinOp& apply_A) {
  const Vector As0 = apply_A(sigma0);
  Vector sigma1(grid.total);
  std::vector<Real> lambda1;
  for (const auto& gc : grid.comps) {
    const int off = grid.offsets[gc.index], n = gc.size();
    auto w = grid.W.segment(off, n);
    auto g = data.g.segment(off, n);
    const Real gg = g.cwiseProduct(w).dot(g);
    const Real num =
        (As0.segment(off, n) - data.f.segment(off, n)).cwiseProduct(w).dot(g);
    const Real l1 = num / gg;
    lambda1.push_back(l1);
    sigma1.segment(off, n) = l1 * g + data.f.segment(off, n).eval() -
                             As0.segment(off, n).eval();
  }
  return {sigma1, lambda1};
}

Real l2_norm(const Grid& grid, const Vector& phi) {
  return std::sqrt(phi.dot(grid.W.cwiseProduct(phi)));
}

MinimizerReport solve_cone_qp(const Matrix& Q, const Vector& b,
                              const Grid& grid, const GaussData& data,
                              const SolverOptions& opts) {
  data.validate(grid);
  const int N = grid.total;
  const Matrix C = constraint_matrix(grid, data);
  const int L = static_cast<int>(C.cols());

  if (opts.check_convexity) {
    // Reduced Hessian on the affine tangent space must be PSD.
    Eigen::HouseholderQR<Matrix> qr(C);
    const Matrix Qfull = qr.householderQ();
    const Matrix Z = Qfull.rightCols(N - L);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Z.transpose() * Q * Z);
    const Real scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-9 * scale)
      throw NumericError(
          "nonconvex reduced Hessian: minimum projected eigenvalue " +
          std::to_string(es.eigenvalues().minCoeff()));
  }

  // Feasible start.
  Vector sigma;
  if (opts.start) {
    sigma = *opts.start;
    project_simplex(grid, data, sigma);
  } else {
    sigma = sigma0_lambda0(grid, data).first;
  }

  // Lipschitz estimate of the L2-metric gradient map.
  Real lip = 0;
  {
    Vector v = Vector::Ones(N).cwiseQuotient(grid.W.cwiseSqrt());
    v /= v.norm();
    for (int it = 0; it < 40; ++it) {
      Vector w = (2.0 * (Q * v)).cwiseQuotient(grid.W);
      const Real nw = w.norm();
      if (nw == 0) break;
      lip = nw / v.norm();
      v = w / nw;
    }
    lip = std::max(lip, 1e-12);
  }
  const Real step = 1.0 / lip;

  auto objective = [&](const Vector& s) {
    return s.dot(Q * s) - 2.0 * b.dot(s);
  };

  Vector x = sigma, y = sigma;
  Real theta = 1.0;
  Real fx = objective(x);
  int it = 0;
  Real best_resid = std::numeric_limits<Real>::infinity();
  for (; it < opts.max_iterations; ++it) {
    Vector grad = (2.0 * (Q * y - b)).cwiseQuotient(grid.W);
    Vector xn = y - step * grad;
    project_simplex(grid, data, xn);
    const Real fxn = objective(xn);
    if (fxn > fx) {  // function restart
      y = x;
      theta = 1.0;
      Vector g2 = (2.0 * (Q * x - b)).cwiseQuotient(grid.W);
      xn = x - step * g2;
      project_simplex(grid, data, xn);
    }
    const Real theta_n = 0.5 * (1.0 + std::sqrt(1.0 + 4 * theta * theta));
    y = xn + ((theta - 1.0) / theta_n) * (xn - x);
    x.swap(xn);
    theta = theta_n;
    fx = objective(x);
    if (it % 25 == 0) {
      const Real resid = kkt_residual(grid, data, Q, b, x).residual;
      best_resid = std::min(best_resid, resid);
      if (resid <= 10 * opts.kkt_tol) break;
    }
  }

  // Active-set polish: equality solve on the free set, exchange until the
  // primal and dual signs are clean.
  std::vector<bool> act(N, false);
  for (int i = 0; i < N; ++i) act[i] = (x[i] <= 1e-12 * x.cwiseAbs().maxCoeff());
  Vector sig = x;
  std::vector<Real> lam(L, 0.0);
  for (int round = 0; round < 80; ++round) {
    std::vector<int> free;
    for (int i = 0; i < N; ++i)
      if (!act[i]) free.push_back(i);
    const int F = static_cast<int>(free.size());
    Matrix Kf = Matrix::Zero(F + L, F + L);
    Vector rhs(F + L);
    for (int a2 = 0; a2 < F; ++a2) {
      for (int b2 = 0; b2 < F; ++b2) Kf(a2, b2) = Q(free[a2], free[b2]);
      for (int l = 0; l < L; ++l) {
        Kf(a2, F + l) = -C(free[a2], l);
        Kf(F + l, a2) = C(free[a2], l);
      }
      rhs[a2] = b[free[a2]];
    }
    for (int l = 0; l < L; ++l) rhs[F + l] = data.a[l];
    Eigen::PartialPivLU<Matrix> lu(Kf);
    const Vector sol = lu.solve(rhs);

    sig.setZero();
    for (int a2 = 0; a2 < F; ++a2) sig[free[a2]] = sol[a2];
    for (int l = 0; l < L; ++l) lam[l] = sol[F + l];

    // Exchange rules: clamp the worst negative primal, else release the
    // worst negative dual.
    int worst_primal = -1;
    Real wp = -1e-14;
    for (int a2 = 0; a2 < F; ++a2)
      if (sol[a2] < wp) {
        wp = sol[a2];
        worst_primal = free[a2];
      }
    if (worst_primal >= 0) {
      act[worst_primal] = true;
      continue;
    }
    const Vector dual = 2.0 * (Q * sig - b);
    int worst_dual = -1;
    Real wd = -1e-12 * std::max(1.0, dual.cwiseAbs().maxCoeff());
    for (int i = 0; i < N; ++i) {
      if (!act[i]) continue;
      Real mu = dual[i];
      for (int l = 0; l < L; ++l) mu -= C(i, l) * 2.0 * lam[l];
      if (mu < wd) {
        wd = mu;
        worst_dual = i;
      }
    }
    if (worst_dual >= 0) {
      act[worst_dual] = false;
      continue;
    }
    break;
  }

  MinimizerReport rep;
  rep.sigma = sig;
  rep.interior = true;
  for (int i = 0; i < N; ++i) rep.interior = rep.interior && !act[i];
  rep.lambda = lam;
  rep.iterations = it;
  fill_report_common(grid, data, Q, b, rep);
  return rep;
}

namespace {

MinimizerReport interior_or_cone(const Matrix& Q, const Vector& b,
                                 const Grid& grid, const GaussData& data,
                                 const SolverOptions& opts) {
  const Matrix C = constraint_matrix(grid, data);
  const SaddleSolution sad = solve_saddle(Q, C, b, a_vector(data));
  if (sad.ok && sad.sigma.minCoeff() >= 0.0) {
    MinimizerReport rep;
    rep.sigma = sad.sigma;
    rep.lambda = sad.lambda;
    rep.interior = true;
    rep.iterations = 0;
    fill_report_common(grid, data, Q, b, rep);
    return rep;
  }
  MinimizerReport rep = solve_cone_qp(Q, b, grid, data, opts);
  rep.interior = false;
  return rep;
}

}  // namespace

MinimizerReport solve_gauss(const OperatorMatrix& V, int orientation,
                            const Grid& grid, const GaussData& data,
                            const SolverOptions& opts) {
  data.validate(grid);
  const Vector d = sign_vector(grid);
  const Matrix D = d.asDiagonal();
  const Matrix Q = Real(orientation) * (D * V.A * D);
  const Vector b = grid.W.cwiseProduct(data.f).cwiseProduct(d);
  MinimizerReport rep = interior_or_cone(Q, b, grid, data, opts);
  rep.orientation = orientation;
  const Vector signed_sigma = rep.sigma.cwiseProduct(d);
  rep.energy_raw = signed_sigma.dot(V.A * signed_sigma);
  rep.gauss_objective =
      rep.energy_raw - 2.0 * data.f.dot(grid.W.cwiseProduct(signed_sigma));
  return rep;
}

MinimizerReport solve_perturbed(const OperatorMatrix& V, int orientation,
                                const Grid& grid, const GaussData& data,
                                Real eps, const SolverOptions& opts) {
  data.validate(grid);
  if (eps < 0) throw ArgumentError("eps must be nonnegative");
  const Vector d = sign_vector(grid);
  const Matrix D = d.asDiagonal();
  Matrix H = eps * Real(orientation) * (D * V.A * D);
  H += Matrix(grid.W.asDiagonal());

  {
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success) {
      Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(
          H, Matrix(grid.W.asDiagonal()));
      throw NumericError(
          "epsilon too large for resolution: I + eps V is indefinite "
          "(critical generalized eigenvalue " +
          std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
  }

  const Vector b = eps * grid.W.cwiseProduct(data.f).cwiseProduct(d);
  MinimizerReport rep = interior_or_cone(H, b, grid, data, opts);
  rep.orientation = orientation;
  rep.eps = eps;
  const Vector signed_sigma = rep.sigma.cwiseProduct(d);
  rep.energy_raw = signed_sigma.dot(V.A * signed_sigma);
  rep.gauss_objective =
      rep.energy_raw - 2.0 * data.f.dot(grid.W.cwiseProduct(signed_sigma));
  return rep;
}

MinimizerReport solve_punched(Assembler& assembler, const Grid& grid,
                              const GaussData& data, Real delta,
                              const SolverOptions& opts) {
  data.validate(grid);
  const KernelSpec& ks = assembler.kernel();
  const Real eps = ks.beta * ks.c_m * std::pow(delta, ks.beta);
  const Vector d = sign_vector(grid);
  const Matrix D = d.asDiagonal();
  const OperatorMatrix pun = assembler.punched(delta);
  const Matrix Q = D * pun.A * D;
  const Vector b = grid.W.cwiseProduct(data.f).cwiseProduct(d);

  SolverOptions o = opts;
  o.check_convexity = false;  // the interior path needs no global convexity
  MinimizerReport rep = interior_or_cone(Q, b, grid, data, o);
  if (!rep.interior && opts.check_convexity) {
    // The cone path re-runs with the convexity check enabled.
    rep = solve_cone_qp(Q, b, grid, data, opts);
    rep.interior = false;
  }
  rep.delta = delta;
  rep.eps = eps;
  // Multipliers in the eps-scaled convention of the expansion.
  for (auto& l : rep.lambda) l *= eps;
  const Vector signed_sigma = rep.sigma.cwiseProduct(d);
  rep.j_delta = signed_sigma.dot(pun.A * signed_sigma) -
                2.0 * data.f.dot(grid.W.cwiseProduct(signed_sigma));
  rep.gauss_objective = rep.j_delta;
  rep.energy_raw = signed_sigma.dot(assembler.fp_full().A * signed_sigma);
  rep.orientation = 0;
  return rep;
}

SweepResult expansion_check(Assembler& assembler, int orientation,
                            const Grid& grid, const GaussData& data,
                            const ExpansionFamily& family,
                            const SolverOptions& opts) {
  if (family.sweep.size() < 4)
    throw ArgumentError("fewer than 4 sweep points");
  data.validate(grid);

  const auto [sigma0, lambda0] = sigma0_lambda0(grid, data);
  const OperatorMatrix& V = assembler.fp_full();
  const Matrix V_or = Real(orientation) * V.A;

  SweepResult table;
  table.columns = {"eps",
                   "delta",
                   "j_delta",
                   "l2_dist_sigma0",
                   "l2_dist_first_order",
                   "heps_sigma2_implied",
                   "lambda0",
                   "lambda1",
                   "active_count"};

  std::vector<Real> epss, dist0, dist1, jds, deltas;
  Real max_h2 = 0;
  for (Real sweep_val : family.sweep) {
    MinimizerReport rep;
    Vector sigma1;
    std::vector<Real> lambda1;
    Real eps, delta = std::numeric_limits<Real>::quiet_NaN();
    if (family.kind == ExpansionFamily::Perturbed) {
      eps = sweep_val;
      rep = solve_perturbed(V, orientation, grid, data, eps, opts);
      LinOp A = [&](const Vector& v) {
        return Vector((Real(orientation) * (V.A * v)).cwiseQuotient(grid.W));
      };
      std::tie(sigma1, lambda1) = sigma1_lambda1(grid, data, sigma0, A);
    } else {
      delta = sweep_val;
      rep = solve_punched(assembler, grid, data, delta, opts);
      eps = rep.eps;
      auto [comp, prime] = assembler.compensators(delta);
      const Matrix& P = prime.A;
      LinOp A = [&](const Vector& v) {
        return Vector(((V.A - P) * v).cwiseQuotient(grid.W));
      };
      std::tie(sigma1, lambda1) = sigma1_lambda1(grid, data, sigma0, A);
    }

    const Vector diff0 = rep.sigma - sigma0;
    const Vector diff1 = diff0 - eps * sigma1;
    const Vector sigma2 = diff1 / (eps * eps);
    const Real d0 = l2_norm(grid, diff0), d1 = l2_norm(grid, diff1);
    const Real h2 =
        std::sqrt(std::max(0.0, h_eps_norm_sq(V_or, grid.W, sigma2, eps).value));
    max_h2 = std::max(max_h2, h2);

    table.rows.push_back({eps, delta, rep.j_delta, d0, d1, h2, lambda0[0],
                          lambda1[0],
                          static_cast<Real>(rep.active.size())});
    epss.push_back(eps);
    dist0.push_back(d0);
    dist1.push_back(d1);
    if (family.kind == ExpansionFamily::Punched) {
      jds.push_back(rep.j_delta);
      deltas.push_back(delta);
    }
  }

  table.fitted.emplace_back("slope_first_order",
                            loglog_slope_inner(epss, dist0));
  table.fitted.emplace_back("slope_second_order",
                            loglog_slope_inner(epss, dist1));
  table.fitted.emplace_back("max_heps_sigma2", max_h2);
  if (family.kind == ExpansionFamily::Punched) {
    const KernelSpec& ks = assembler.kernel();
    // J_delta delta^beta at the smallest delta, and exact monotonicity of
    // J along decreasing delta.
    int smallest = 0;
    for (std::size_t i = 1; i < deltas.size(); ++i)
      if (deltas[i] < deltas[smallest]) smallest = static_cast<int>(i);
    table.fitted.emplace_back(
        "jdelta_deltabeta_smallest",
        jds[smallest] * std::pow(deltas[smallest], ks.beta));
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < deltas.size(); ++i) {
      // rows are in sweep order; compare adjacent pairs by delta
      const bool decreasing = deltas[i + 1] < deltas[i];
      const Real j_small = decreasing ? jds[i + 1] : jds[i];
      const Real j_large = decreasing ? jds[i] : jds[i + 1];
      if (!(j_small >= j_large)) monotone = false;
    }
    table.fitted.emplace_back("monotone_J", monotone ? 1.0 : 0.0);
    // Decay exponent of ||sigma* - sigma0|| against delta.
    table.fitted.emplace_back("delta_decay_exponent",
                              loglog_slope_inner(deltas, dist0));
  }
  return table;
}

}  // namespace rieszlab
