#pragma once

#include <cmath>
#include <vector>

#include "rieszlab/types.hpp"

namespace rieszlab {

/// Least-squares slope of y against x.
inline Real ls_slope(const std::vector<Real>& x, const std::vector<Real>& y) {
  const std::size_t n = x.size();
  Real sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const Real denom = n * sxx - sx * sx;
  return (n * sxy - sx * sy) / denom;
}

// Log-log slope fitted over the inner 80% of the sweep (the outermost points
// on each side are dropped when there are at least five of them).
inline Real loglog_slope_inner(const std::vector<Real>& x,
                               const std::vector<Real>& y) {
  std::size_t lo = 0, hi = x.size();
  if (x.size() >= 5) {
    const std::size_t trim = (x.size() + 9) / 10;  // ceil(10%)
    lo += trim;
    hi -= trim;
  }
  std::vector<Real> lx, ly;
  for (std::size_t i = lo; i < hi; ++i) {
    lx.push_back(std::log(std::abs(x[i])));
    ly.push_back(std::log(std::abs(y[i])));
  }
  return ls_slope(lx, ly);
}

/// Richardson extrapolation of x_N = L + c N^(-p) from the last three entries
/// of a sweep over increasing N (N assumed to double between entries).
struct RichardsonResult {
  Real limit;
  Real order;      // fitted decay exponent p
  Real last_step;  // |x_last - limit|, a crude error indicator
};

inline RichardsonResult richardson(const std::vector<Real>& values) {
  const std::size_t n = values.size();
  if (n < 3) {
    return {values.empty() ? 0.0 : values.back(), 0.0, 0.0};
  }
  const Real a = values[n - 3], b = values[n - 2], c = values[n - 1];
  const Real r = (b - a) / (c - b);
  if (!(r > 1.0) || !std::isfinite(r)) {
    return {c, 0.0, std::abs(c - b)};
  }
  const Real p = std::log2(r);
  const Real limit = c + (c - b) / (r - 1.0);
  return {limit, p, std::abs(c - limit)};
}

}  // namespace rieszlab
