#include "rieszlab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace rieszlab {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi tridiagonal matrix,
// weights are mu0 times the squared first eigenvector components.
QuadRule golub_welsch(const Vector& alpha, const Vector& beta, Real mu0) {
  const int n = static_cast<int>(alpha.size());
  Matrix J = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = alpha[i];
    if (i + 1 < n) {
      const Real s = std::sqrt(beta[i + 1]);
      J(i, i + 1) = s;
      J(i + 1, i) = s;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  QuadRule rule;
  rule.x = es.eigenvalues();
  rule.w.resize(n);
  for (int i = 0; i < n; ++i) {
    const Real v0 = es.eigenvectors()(0, i);
    rule.w[i] = mu0 * v0 * v0;
  }
  return rule;
}

QuadRule jacobi_rule(int n, Real a, Real b) {
  Vector alpha(n), beta(n);
  alpha[0] = (b - a) / (a + b + 2.0);
  for (int k = 1; k < n; ++k) {
    const Real t = 2.0 * k + a + b;
    alpha[k] = (b * b - a * a) / (t * (t + 2.0));
  }
  beta[0] = 0.0;
  for (int k = 1; k < n; ++k) {
    const Real t = 2.0 * k + a + b;
    beta[k] = 4.0 * k * (k + a) * (k + b) * (k + a + b) /
              (t * t * (t + 1.0) * (t - 1.0));
  }
  const Real mu0 = std::pow(2.0, a + b + 1.0) *
                   std::exp(std::lgamma(a + 1.0) + std::lgamma(b + 1.0) -
                            std::lgamma(a + b + 2.0));
  return golub_welsch(alpha, beta, mu0);
}

std::mutex cache_mutex;

}  // namespace

QuadRule gauss_legendre(int n) {
  static std::map<int, QuadRule> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, jacobi_rule(n, 0.0, 0.0)).first;
  return it->second;
}

QuadRule gauss_jacobi(int n, Real a, Real b) { return jacobi_rule(n, a, b); }

QuadRule gauss_power_weight(int n, Real gamma, Real h) {
  if (!(gamma > -1.0)) throw ArgumentError("power weight needs gamma > -1");
  // x = h (1+t)/2 turns x^gamma dx into (h/2)^(gamma+1) (1+t)^gamma dt.
  QuadRule base = jacobi_rule(n, 0.0, gamma);
  QuadRule rule;
  rule.x = (h / 2.0) * (base.x.array() + 1.0);
  rule.w = std::pow(h / 2.0, gamma + 1.0) * base.w;
  return rule;
}

QuadRule map_to_interval(const QuadRule& base, Real lo, Real hi) {
  QuadRule rule;
  const Real mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  rule.x = (half * base.x.array() + mid).matrix();
  rule.w = half * base.w;
  return rule;
}

}  // namespace rieszlab
