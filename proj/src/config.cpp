#include "rieszlab/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rieszlab {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<Real> parse_reals(const std::string& s) {
  std::vector<Real> out;
  for (const auto& t : split(s, ','))
    try {
      out.push_back(std::stod(t));
    } catch (...) {
      throw ConfigError("bad numeric value '" + t + "'");
    }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (Real v : parse_reals(s)) out.push_back(static_cast<int>(std::lround(v)));
  return out;
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap parse_ini(const std::string& text) {
  SectionMap sections;
  std::string current = "";
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    sections[current][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return sections;
}

ComponentSpec parse_component(const std::string& text) {
  const Expression like = [&] {
    // Reuse the name(args) grammar.
    Expression e;
    const auto open = text.find('(');
    if (open == std::string::npos) {
      e.name = trim(text);
      return e;
    }
    const auto close = text.rfind(')');
    e.name = trim(text.substr(0, open));
    for (const auto& t : split(text.substr(open + 1, close - open - 1), ','))
      e.args.push_back(std::stod(t));
    return e;
  }();
  ComponentSpec c;
  c.kind = shape_from_name(like.name);
  if (!like.args.empty()) c.p0 = like.args[0];
  if (like.args.size() > 1) c.p1 = like.args[1];
  return c;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  cfg.raw_text = text;
  const SectionMap ini = parse_ini(text);

  auto get = [&](const std::string& sec,
                 const std::string& key) -> const std::string* {
    auto s = ini.find(sec);
    if (s == ini.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
  };

  // [manifold]
  {
    const std::string* comps = get("manifold", "components");
    if (!comps) throw ConfigError("[manifold] components is required");
    std::vector<std::string> items = split(*comps, '|');
    std::vector<std::string> centers, signs;
    if (const auto* c = get("manifold", "centers")) centers = split(*c, '|');
    if (const auto* s = get("manifold", "signs")) signs = split(*s, '|');
    for (std::size_t i = 0; i < items.size(); ++i) {
      ComponentSpec c = parse_component(items[i]);
      if (i < centers.size()) {
        std::stringstream ss(centers[i]);
        Real v;
        int d = 0;
        while (ss >> v && d < 3) c.center[d++] = v;
      }
      if (i < signs.size()) c.sign = std::stoi(signs[i]);
      cfg.manifold.components.push_back(c);
    }
  }

  // [kernel]
  if (const auto* v = get("kernel", "alpha")) cfg.alpha = std::stod(*v);
  if (const auto* v = get("kernel", "split_radius"))
    cfg.split_radius = std::stod(*v);
  if (const auto* v = get("kernel", "operator")) cfg.operator_kind = *v;

  // [grid]
  if (const auto* v = get("grid", "n")) cfg.grid_n = parse_ints(*v);
  if (const auto* v = get("grid", "allow_coarse"))
    cfg.allow_coarse = (*v == "true" || *v == "1");

  // [problem]
  if (const auto* v = get("problem", "f")) cfg.f_expr = parse_expression(*v);
  if (const auto* v = get("problem", "g")) cfg.g_expr = parse_expression(*v);
  if (const auto* v = get("problem", "a")) cfg.a = parse_reals(*v);

  // [sweep]
  if (const auto* v = get("sweep", "delta")) cfg.sweep_delta = parse_reals(*v);
  if (const auto* v = get("sweep", "epsilon"))
    cfg.sweep_epsilon = parse_reals(*v);
  if (const auto* v = get("sweep", "beta")) cfg.sweep_beta = parse_reals(*v);
  if (const auto* v = get("sweep", "n_points")) cfg.sweep_n = parse_ints(*v);

  // [solver]
  if (const auto* v = get("solver", "kkt_tol")) cfg.kkt_tol = std::stod(*v);
  if (const auto* v = get("solver", "max_iterations"))
    cfg.max_iterations = std::stoi(*v);
  if (const auto* v = get("solver", "restarts")) cfg.restarts = std::stoi(*v);
  if (const auto* v = get("solver", "seed"))
    cfg.seed = std::stoull(*v);
  if (const auto* v = get("solver", "n_omega"))
    cfg.assembly.n_omega = std::stoi(*v);
  if (const auto* v = get("solver", "gauss_order"))
    cfg.assembly.gauss_order = std::stoi(*v);
  if (const auto* v = get("solver", "stencil"))
    cfg.assembly.stencil = std::stoi(*v);
  if (const auto* v = get("solver", "ray_tol"))
    cfg.assembly.ray.tol = std::stod(*v);

  // [output]
  if (const auto* v = get("output", "directory")) cfg.out_dir = *v;
  if (const auto* v = get("output", "formats")) {
    cfg.write_csv = v->find("csv") != std::string::npos;
    cfg.write_json = v->find("json") != std::string::npos;
  }
  if (const auto* v = get("output", "matrix_format")) cfg.matrix_format = *v;

  cfg.assembly.allow_coarse = cfg.allow_coarse;
  if (cfg.a.empty()) cfg.a.assign(cfg.manifold.components.size(), 1.0);
  if (cfg.grid_n.empty())
    cfg.grid_n.assign(cfg.manifold.components.size(), 128);
  if (cfg.grid_n.size() == 1 && cfg.manifold.components.size() > 1)
    cfg.grid_n.assign(cfg.manifold.components.size(), cfg.grid_n[0]);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::vector<std::string> validate_config(const RunConfig& cfg) {
  std::vector<std::string> diags;
  auto note = [&](const std::string& msg) { diags.push_back(msg); };

  try {
    cfg.manifold.validate();
  } catch (const std::exception& e) {
    note(std::string("manifold: ") + e.what());
    return diags;  // nothing else is checkable
  }

  if (!(cfg.alpha > -1.0 && cfg.alpha < 1.0))
    note("kernel: alpha must lie in (-1, 1)");
  if (!(cfg.split_radius > 0))
    note("kernel: split_radius must be positive");
  if (cfg.operator_kind != "riesz" && cfg.operator_kind != "laplace-D")
    note("kernel: operator must be riesz or laplace-D");

  if (cfg.grid_n.size() != cfg.manifold.components.size())
    note("grid: one N per component required");
  for (int n : cfg.grid_n)
    if (n < 16 || !is_power_of_two(n))
      note("grid: N = " + std::to_string(n) +
           " must be a power of two >= 16");

  for (Real a : cfg.a)
    if (!(a > 0)) note("problem: constraint values a must be positive");
  if (cfg.a.size() != cfg.manifold.components.size())
    note("problem: one a per component required");

  // Grid-dependent checks (grid construction is cheap).
  if (diags.empty()) {
    const Grid grid = build_grid(cfg.manifold, cfg.grid_n);
    const Real c = cfg.split_radius;
    if (grid.h_grid > c / 8 && !cfg.allow_coarse)
      note("grid too coarse for split_radius: h_grid = " +
           std::to_string(grid.h_grid) + " > c/8 = " + std::to_string(c / 8));
    for (Real d : cfg.sweep_delta) {
      if (d < 4 * grid.h_grid && !cfg.allow_coarse)
        note("sweep: delta = " + std::to_string(d) + " below 4 h_grid = " +
             std::to_string(4 * grid.h_grid));
      if (d > c * (1 + 1e-12) && d < cfg.manifold.diameter())
        note("sweep: delta = " + std::to_string(d) +
             " exceeds the splitting radius");
    }
    const Vector g = evaluate_expression(cfg.g_expr, grid);
    if (g.minCoeff() <= 0) note("problem: g must be strictly positive");
  }

  for (Real b : cfg.sweep_beta)
    if (!(b > 0 && b < 2)) note("sweep: beta values must lie in (0, 2)");
  for (Real e : cfg.sweep_epsilon)
    if (!(e > 0)) note("sweep: epsilon values must be positive");
  for (int n : cfg.sweep_n)
    if (n < 2) note("sweep: n_points values must be at least 2");
  return diags;
}

}  // namespace rieszlab
