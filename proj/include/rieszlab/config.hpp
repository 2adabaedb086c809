#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rieszlab/expressions.hpp"
#include "rieszlab/fpquad.hpp"
#include "rieszlab/geometry.hpp"

namespace rieszlab {

// Flat sectioned key-value configuration (INI-style).  Components are
// pipe-separated in [manifold]; numeric lists are comma-separated.
//
//   [manifold]
//   components = circle(1.0) | circle(1.0)
//   centers = 0 0 | 5 0
//   signs = 1 | -1
//   [kernel]
//   alpha = 0.5
//   split_radius = 0.6
//   operator = riesz            ; or laplace-D (assemble on spheres)
//   [grid]
//   n = 256
//   allow_coarse = false
//   [problem]
//   f = cosine-band(1.0, 2, 0.0)
//   g = cosine-band(0.3, 1, 1.0)
//   a = 1.0
//   [sweep]
//   delta = 0.2, 0.17, 0.15     ; or epsilon = ... / n_points = ... / beta = ...
//   [solver]
//   seed = 42
//   restarts = 8
//   ...
//   [output]
//   directory = out
//   matrix_format = none        ; none | binary | csv
struct RunConfig {
  ManifoldSpec manifold;
  Real alpha = 0.0;
  Real split_radius = 0.0;
  std::string operator_kind = "riesz";  // or "laplace-D"
  std::vector<int> grid_n;
  bool allow_coarse = false;

  Expression f_expr{"constant", {0.0}};
  Expression g_expr{"constant", {1.0}};
  std::vector<Real> a;

  std::vector<Real> sweep_delta, sweep_epsilon, sweep_beta;
  std::vector<int> sweep_n;

  Real kkt_tol = 1e-9;
  int max_iterations = 40000;
  int restarts = 8;
  std::uint64_t seed = 42;
  AssemblyParams assembly;

  std::string out_dir = "out";
  bool write_csv = true;
  bool write_json = true;
  std::string matrix_format = "none";

  std::string raw_text;  // echoed into the report
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

/// Full validation without computation; an empty list means runnable.
std::vector<std::string> validate_config(const RunConfig& config);

}  // namespace rieszlab
