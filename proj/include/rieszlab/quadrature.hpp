#pragma once

#include "rieszlab/types.hpp"

namespace rieszlab {

struct QuadRule {
  Vector x, w;
};

/// Gauss-Legendre rule on [-1, 1].
QuadRule gauss_legendre(int n);

/// Gauss-Jacobi rule for weight (1-x)^a (1+x)^b on [-1, 1].
QuadRule gauss_jacobi(int n, Real a, Real b);

/// Rule for  int_0^h x^gamma f(x) dx  =  sum w_i f(x_i), gamma > -1.
QuadRule gauss_power_weight(int n, Real gamma, Real h);

/// Map a [-1,1] rule to [lo, hi] (plain Lebesgue weight).
QuadRule map_to_interval(const QuadRule& base, Real lo, Real hi);

}  // namespace rieszlab
