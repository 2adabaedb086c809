#pragma once

// Test-side oracles, independent of the library's integration paths:
// adaptive quadrature, closed-form circle spectra via the Gamma function,
// and finite-difference geometry checks.

#include <cmath>
#include <functional>

#include "rieszlab/quadrature.hpp"
#include "rieszlab/types.hpp"

namespace oracle {

using rieszlab::Real;
using rieszlab::Vector;

inline constexpr Real kPi = EIGEN_PI;

// Adaptive Gauss quadrature: split until two nested estimates agree.
inline Real adaptive_quad_impl(const std::function<Real(Real)>& f, Real a,
                               Real b, Real tol, int depth) {
  static const rieszlab::QuadRule g10 = rieszlab::gauss_legendre(10);
  static const rieszlab::QuadRule g20 = rieszlab::gauss_legendre(20);
  auto apply = [&](const rieszlab::QuadRule& r) {
    const auto m = rieszlab::map_to_interval(r, a, b);
    Real s = 0;
    for (Eigen::Index i = 0; i < m.x.size(); ++i) s += m.w[i] * f(m.x[i]);
    return s;
  };
  const Real coarse = apply(g10), fine = apply(g20);
  const Real goal = std::max(tol, 5e-16) * (1 + std::abs(fine));
  if (std::abs(fine - coarse) <= goal || depth > 14) return fine;
  const Real mid = 0.5 * (a + b);
  return adaptive_quad_impl(f, a, mid, tol / 1.4, depth + 1) +
         adaptive_quad_impl(f, mid, b, tol / 1.4, depth + 1);
}

inline Real adaptive_quad(const std::function<Real(Real)>& f, Real a, Real b,
                          Real tol = 1e-13) {
  return adaptive_quad_impl(f, a, b, tol, 0);
}

/// Gamma at negative non-integer argument via reflection.
inline Real gamma_reflect(Real z) {
  if (z > 0) return std::tgamma(z);
  return kPi / (std::sin(kPi * z) * std::tgamma(1.0 - z));
}

// Exact eigenvalue of the finite-part circle operator on the Fourier mode
// e^{ik theta} for the unit circle:
//   lambda_k = 2 Gamma(-beta) cos(pi beta / 2)
//             * Gamma(k + (1+beta)/2) / Gamma(k + (1-beta)/2),
// derived from the classical cosine power integral by analytic continuation
// (the finite part drops only the pure delta^{-beta} divergence, so the two
// regularizations agree for 0 < beta < 2).  At beta = 1 the limit is -pi k.
inline Real circle_eigenvalue(Real beta, int k) {
  k = std::abs(k);
  if (std::abs(beta - 1.0) < 1e-12) return -kPi * k;
  const Real front = 2.0 * (-kPi / (std::sin(kPi * beta) *
                                    std::tgamma(1.0 + beta))) *
                     std::cos(kPi * beta / 2);
  const Real ratio =
      std::exp(std::lgamma(k + (1 + beta) / 2) - std::lgamma(k + (1 - beta) / 2));
  // lgamma needs positive arguments: k + (1-beta)/2 > 0 fails only for k = 0,
  // beta > 1, where Gamma is negative; handle via reflection.
  if (k == 0 && beta > 1.0) {
    const Real g_neg = gamma_reflect((1 - beta) / 2);
    return front * std::tgamma((1 + beta) / 2) / g_neg;
  }
  return front * ratio;
}

/// h on the unit circle = lambda_0.
inline Real circle_h(Real beta) { return circle_eigenvalue(beta, 0); }

/// Symbol constant C(n-1, beta) evaluated with the reflection formula.
inline Real symbol_constant_oracle(int n, Real beta) {
  const Real alpha = 1.0 - beta;
  return std::pow(2.0, -beta) * std::pow(kPi, (n - 1) / 2.0) *
         gamma_reflect(-beta / 2) / std::tgamma((n - alpha) / 2);
}

/// Punched quadratic form of e^{ik theta} on the unit circle:
///   int int_{|x-y| >= delta} |x-y|^(-1-beta) e^{ik(s-t)} ds dt.
inline Real circle_punched_mode(Real beta, Real delta, int k) {
  if (delta >= 2.0) return 0.0;
  const Real tau_d = 2 * std::asin(delta / 2);
  auto f = [&](Real tau) {
    return std::pow(2 * std::sin(tau / 2), -1.0 - beta) * std::cos(k * tau);
  };
  return 2 * kPi * 2 * adaptive_quad(f, tau_d, kPi, 1e-14);
}

/// 6th-order central second derivative of a vector curve.
inline Vector fd_second(const std::function<Vector(Real)>& f, Real t, Real h) {
  return (2 * f(t - 3 * h) - 27 * f(t - 2 * h) + 270 * f(t - h) -
          490 * f(t) + 270 * f(t + h) - 27 * f(t + 2 * h) + 2 * f(t + 3 * h)) /
         (180 * h * h);
}

}  // namespace oracle
