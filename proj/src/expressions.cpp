#include "rieszlab/expressions.hpp"

#include <cmath>
#include <sstream>

namespace rieszlab {

std::vector<std::string> expression_catalog() {
  return {"constant", "cosine-band", "gaussian-bump-on-chart",
          "trig-polynomial"};
}

Expression parse_expression(const std::string& text) {
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
  };
  Expression e;
  const auto open = text.find('(');
  if (open == std::string::npos) {
    e.name = trim(text);
  } else {
    const auto close = text.rfind(')');
    if (close == std::string::npos || close < open)
      throw ConfigError("malformed expression: '" + text + "'");
    e.name = trim(text.substr(0, open));
    std::stringstream args(text.substr(open + 1, close - open - 1));
    std::string tok;
    while (std::getline(args, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      try {
        e.args.push_back(std::stod(tok));
      } catch (...) {
        throw ConfigError("bad numeric argument '" + tok + "' in expression");
      }
    }
  }
  bool known = false;
  for (const auto& n : expression_catalog()) known = known || (n == e.name);
  if (!known) {
    std::string msg = "unknown expression '" + e.name + "'; catalog:";
    for (const auto& n : expression_catalog()) msg += " " + n;
    throw ConfigError(msg);
  }
  return e;
}

Real evaluate_expression_at(const Expression& e, Real u) {
  auto arg = [&](std::size_t i, Real fallback) {
    return i < e.args.size() ? e.args[i] : fallback;
  };
  if (e.name == "constant") return arg(0, 0.0);
  if (e.name == "cosine-band") {
    const Real amp = arg(0, 1.0), k = arg(1, 1.0), off = arg(2, 0.0);
    return off + amp * std::cos(k * u);
  }
  if (e.name == "gaussian-bump-on-chart") {
    const Real amp = arg(0, 1.0), center = arg(1, 0.0), width = arg(2, 0.5);
    return amp * std::exp((std::cos(u - center) - 1.0) / (width * width));
  }
  if (e.name == "trig-polynomial") {
    Real v = arg(0, 0.0);
    for (std::size_t k = 1; 2 * k - 1 < e.args.size(); ++k) {
      v += e.args[2 * k - 1] * std::cos(Real(k) * u);
      if (2 * k < e.args.size()) v += e.args[2 * k] * std::sin(Real(k) * u);
    }
    return v;
  }
  throw ConfigError("unknown expression '" + e.name + "'");
}

Vector evaluate_expression(const Expression& e, const Grid& grid) {
  Vector v(grid.total);
  for (const auto& gc : grid.comps) {
    for (int i = 0; i < gc.size(); ++i) {
      const Real u = gc.u[i / gc.n_v];
      v[grid.offsets[gc.index] + i] = evaluate_expression_at(e, u);
    }
  }
  return v;
}

}  // namespace rieszlab
