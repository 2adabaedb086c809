#pragma once

#include <string>
#include <vector>

#include "rieszlab/geometry.hpp"
#include "rieszlab/types.hpp"

namespace rieszlab {

// Built-in closed-form expression catalog for problem data.  Expressions are
// functions of the first chart coordinate u of each component:
//   constant(c)
//   cosine-band(amplitude, k, offset)        offset + amplitude cos(k u)
//   gaussian-bump-on-chart(amplitude, center, width)
//                                            amplitude exp((cos(u-center)-1)/width^2)
//   trig-polynomial(a0, a1, b1, a2, b2, ...) a0 + sum a_k cos(k u) + b_k sin(k u)
struct Expression {
  std::string name;
  std::vector<Real> args;
};

/// Parses "name(arg, arg, ...)"; unknown names raise ConfigError listing the
/// catalog.
Expression parse_expression(const std::string& text);

/// Nodal values on every grid node.
Vector evaluate_expression(const Expression& e, const Grid& grid);

Real evaluate_expression_at(const Expression& e, Real u);

std::vector<std::string> expression_catalog();

}  // namespace rieszlab
