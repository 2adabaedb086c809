#include "rieszlab/sobolev.hpp"

#include <cmath>

namespace rieszlab {

namespace {

constexpr Real kPi = EIGEN_PI;

// Orthonormal real DFT basis rows for an even N: constant, cos/sin pairs,
// Nyquist; mults receives |k| per row.
void real_dft_basis(int n, Matrix& U, std::vector<Real>& absk) {
  U.resize(n, n);
  absk.assign(n, 0.0);
  int row = 0;
  const Real c0 = 1.0 / std::sqrt(Real(n));
  for (int j = 0; j < n; ++j) U(row, j) = c0;
  absk[row++] = 0;
  for (int k = 1; k < n / 2; ++k) {
    const Real amp = std::sqrt(2.0 / n);
    for (int j = 0; j < n; ++j) U(row, j) = amp * std::cos(2 * kPi * k * j / n);
    absk[row++] = k;
    for (int j = 0; j < n; ++j) U(row, j) = amp * std::sin(2 * kPi * k * j / n);
    absk[row++] = k;
  }
  for (int j = 0; j < n; ++j) U(n - 1, j) = c0 * ((j % 2 == 0) ? 1.0 : -1.0);
  absk[n - 1] = n / 2;
}

}  // namespace

SobolevGram gram(const Grid& grid, Real s) {
  SobolevGram out;
  out.order = s;
  out.S = Matrix::Zero(grid.total, grid.total);
  for (const auto& gc : grid.comps) {
    const ComponentSpec& c = grid.spec.components[gc.index];
    if (c.kind == ShapeKind::Sphere)
      throw ConfigError("Sobolev Gram on sphere charts is not supported");
    const int off = grid.offsets[gc.index];
    const Real scale = gc.area / gc.size();
    if (gc.n_v == 1) {
      Matrix U;
      std::vector<Real> absk;
      real_dft_basis(gc.n_u, U, absk);
      Matrix DU = U;
      for (int r = 0; r < gc.n_u; ++r)
        DU.row(r) *= std::pow(1.0 + absk[r] * absk[r], s);
      out.S.block(off, off, gc.size(), gc.size()).noalias() =
          scale * U.transpose() * DU;
    } else {
      Matrix Uu, Uv;
      std::vector<Real> ku, kv;
      real_dft_basis(gc.n_u, Uu, ku);
      real_dft_basis(gc.n_v, Uv, kv);
      // Tensor basis row (a, b) has multiplier (1 + k_a^2 + k_b^2)^s; the
      // kron structure lets us apply the two factors without forming it.
      const int nu = gc.n_u, nv = gc.n_v, nn = nu * nv;
      Matrix B(nn, nn);
      for (int a = 0; a < nu; ++a)
        for (int b = 0; b < nv; ++b) {
          const int r = a * nv + b;
          const Real mult =
              std::pow(1.0 + ku[a] * ku[a] + kv[b] * kv[b], s);
          for (int ju = 0; ju < nu; ++ju)
            for (int jv = 0; jv < nv; ++jv)
              B(r, ju * nv + jv) = mult * Uu(a, ju) * Uv(b, jv);
        }
      Matrix B0(nn, nn);
      for (int a = 0; a < nu; ++a)
        for (int b = 0; b < nv; ++b) {
          const int r = a * nv + b;
          for (int ju = 0; ju < nu; ++ju)
            for (int jv = 0; jv < nv; ++jv)
              B0(r, ju * nv + jv) = Uu(a, ju) * Uv(b, jv);
        }
      out.S.block(off, off, nn, nn).noalias() = scale * B0.transpose() * B;
    }
  }
  out.S = 0.5 * (out.S + out.S.transpose());
  return out;
}

Vector fourier_mode(const Grid& grid, int comp, int k, bool sine) {
  const auto& gc = grid.comps[comp];
  if (gc.n_v != 1) throw ArgumentError("fourier_mode needs an m = 1 chart");
  Vector v = Vector::Zero(grid.total);
  for (int i = 0; i < gc.size(); ++i) {
    const Real u = gc.u[i];
    v[grid.offsets[comp] + i] = sine ? std::sin(k * u) : std::cos(k * u);
  }
  return v;
}

Real rayleigh(const OperatorMatrix& op, const Vector& W, const Vector& phi) {
  return phi.dot(op.A * phi) / phi.dot(W.cwiseProduct(phi));
}

HepsValue h_eps_norm_sq(const Matrix& V_oriented, const Vector& W,
                        const Vector& phi, Real eps) {
  if (eps < 0) throw ArgumentError("h_eps norm needs eps >= 0");
  HepsValue out;
  out.value = eps * phi.dot(V_oriented * phi) + phi.dot(W.cwiseProduct(phi));
  out.degenerate = (out.value <= 0.0) && (phi.cwiseAbs().maxCoeff() > 0.0);
  return out;
}

int select_orientation(const OperatorMatrix& V, const SobolevGram& S_half) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(V.A, S_half.S);
  const Real lo = es.eigenvalues().minCoeff();
  const Real hi = es.eigenvalues().maxCoeff();
  return (std::abs(lo) > std::abs(hi)) ? -1 : +1;
}

Real garding_min_eig(const OperatorMatrix& V, const SobolevGram& S_half,
                     const Vector& W, int orientation, Real c1) {
  Matrix lhs = Real(orientation) * V.A;
  lhs += c1 * Matrix(W.asDiagonal());
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(lhs, S_half.S);
  return es.eigenvalues().minCoeff();
}

GardingFit fit_garding(const OperatorMatrix& V, const SobolevGram& S_half,
                       const Vector& W, int orientation) {
  GardingFit fit;
  fit.orientation =
      (orientation == 0) ? select_orientation(V, S_half) : orientation;

  {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(
        Matrix(Real(fit.orientation) * V.A), S_half.S);
    fit.c2 = es.eigenvalues().maxCoeff();
  }

  Real c1 = 0.0;
  Real mineig = garding_min_eig(V, S_half, W, fit.orientation, c1);
  if (mineig <= 0) {
    c1 = 0.125;
    for (int it = 0; it < 60; ++it) {
      mineig = garding_min_eig(V, S_half, W, fit.orientation, c1);
      if (mineig > 0) break;
      c1 *= 2;
    }
    if (mineig <= 0)
      throw NumericError("no orientation/shift makes the pencil positive");
  }
  fit.c0 = mineig;
  fit.c1 = c1;
  return fit;
}

}  // namespace rieszlab
