#include "rieszlab/fpquad.hpp"

#include <cmath>
#include <iostream>

#include "rieszlab/parallel.hpp"
#include "rieszlab/quadrature.hpp"

namespace rieszlab {

namespace {

constexpr Real kPi = EIGEN_PI;

Real gamma_negative(Real z) {
  // Gamma at negative non-integer argument via the reflection formula.
  return kPi / (std::sin(kPi * z) * std::tgamma(1.0 - z));
}

// C^8 polynomial step: 1 for x <= 0, 0 for x >= 1.  s = 1 - I(x)/I(1) with
// I(x) = int_0^x t^8 (1-t)^8 dt.  A fixed polynomial order keeps the far
// trapezoid error algebraic and predictable at desk resolutions (bump-type
// cutoffs converge only root-exponentially in points-per-transition).
Real smooth_step_down(Real x) {
  if (x <= 0.0) return 1.0;
  if (x >= 1.0) return 0.0;
  struct Coef {
    std::array<Real, 9> c{};
    Real total = 0;
  };
  static const Coef coef = [] {
    Coef out;
    Real binom = 1.0;
    for (int j = 0; j <= 8; ++j) {
      out.c[j] = binom / (9 + j);
      out.total += out.c[j];
      binom = -binom * (8 - j) / (j + 1);
    }
    return out;
  }();
  Real poly = 0.0;  // sum_j c[j] x^j, then * x^9
  for (int j = 8; j >= 0; --j) poly = poly * x + coef.c[j];
  return 1.0 - poly * std::pow(x, 9) / coef.total;
}

struct Cutoff {
  Real t0, t1;
  Real operator()(Real rho) const {
    return smooth_step_down((rho - t0) / (t1 - t0));
  }
};

// Local Lagrange interpolation on the periodic uniform grids.  Stencil
// weights of a point in chart coordinates, resolved to global node ids.
class NodeInterpolator {
 public:
  NodeInterpolator(const Grid& grid, int comp, int stencil)
      : gc_(grid.comps[comp]),
        kind_(grid.spec.components[comp].kind),
        offset_(grid.offsets[comp]),
        s_(stencil) {
    bary_.resize(s_);
    for (int k = 0; k < s_; ++k) {
      Real w = (k % 2 == 0) ? 1.0 : -1.0;
      Real binom = 1.0;
      for (int j = 0; j < k; ++j) binom = binom * (s_ - 1 - j) / (j + 1);
      bary_[k] = w * binom;
    }
  }

  int max_points() const { return gc_.n_v > 1 ? s_ * s_ : s_; }

  // Appends (global node, weight) pairs; weights sum to 1 exactly up to
  // rounding (Lagrange partition of unity).
  void weights(const Vector& u_chart, std::vector<int>& idx,
               std::vector<Real>& wgt) const {
    idx.clear();
    wgt.clear();
    if (kind_ == ShapeKind::Sphere) {
      sphere_weights(u_chart, idx, wgt);
      return;
    }
    int iu[16];
    Real wu[16];
    line(u_chart[0], 2 * kPi, gc_.n_u, iu, wu);
    if (gc_.n_v == 1) {
      for (int a = 0; a < s_; ++a) {
        idx.push_back(offset_ + iu[a]);
        wgt.push_back(wu[a]);
      }
      return;
    }
    int iv[16];
    Real wv[16];
    line(u_chart[1], 2 * kPi, gc_.n_v, iv, wv);
    for (int a = 0; a < s_; ++a)
      for (int b = 0; b < s_; ++b) {
        idx.push_back(offset_ + gc_.flat(iu[a], iv[b]));
        wgt.push_back(wu[a] * wv[b]);
      }
  }

 private:
  // 1D stencil on a uniform periodic grid with n nodes over [0, period).
  void line(Real u, Real period, int n, int* id, Real* w) const {
    const Real h = period / n;
    const Real t = u / h;
    const int j0 = static_cast<int>(std::floor(t)) - s_ / 2 + 1;
    const Real tl = t - j0;
    Real denom = 0;
    bool exact = false;
    for (int k = 0; k < s_; ++k) {
      const Real d = tl - k;
      if (std::abs(d) < 1e-12) {
        for (int q = 0; q < s_; ++q) w[q] = (q == k) ? 1.0 : 0.0;
        exact = true;
        break;
      }
      w[k] = bary_[k] / d;
      denom += w[k];
    }
    if (!exact)
      for (int k = 0; k < s_; ++k) w[k] /= denom;
    for (int k = 0; k < s_; ++k) {
      int j = (j0 + k) % n;
      if (j < 0) j += n;
      id[k] = j;
    }
  }

  // Sphere chart: interpolate on the doubly periodic extension
  // F(-theta, phi) = F(theta, phi + pi), which is smooth for smooth
  // functions on the sphere; stencil indices map back to original nodes.
  void sphere_weights(const Vector& u_chart, std::vector<int>& idx,
                      std::vector<Real>& wgt) const {
    const int nu = gc_.n_u, nv = gc_.n_v;
    const Real h_th = kPi / nu;
    // Extended theta grid: theta_k = -pi + h_th (k + 1/2), k = 0..2nu-1.
    const Real t = (u_chart[0] + kPi) / h_th - 0.5;
    const int j0 = static_cast<int>(std::floor(t)) - s_ / 2 + 1;
    const Real tl = t - j0;
    Real wth[16];
    Real denom = 0;
    bool exact = false;
    for (int k = 0; k < s_; ++k) {
      const Real d = tl - k;
      if (std::abs(d) < 1e-12) {
        for (int q = 0; q < s_; ++q) wth[q] = (q == k) ? 1.0 : 0.0;
        exact = true;
        break;
      }
      wth[k] = bary_[k] / d;
      denom += wth[k];
    }
    if (!exact)
      for (int k = 0; k < s_; ++k) wth[k] /= denom;

    int iv[16];
    Real wv[16];
    line(u_chart[1], 2 * kPi, nv, iv, wv);

    for (int a = 0; a < s_; ++a) {
      int ke = (j0 + a) % (2 * nu);
      if (ke < 0) ke += 2 * nu;
      int iu;
      int shift;
      if (ke >= nu) {
        iu = ke - nu;
        shift = 0;
      } else {
        iu = nu - 1 - ke;
        shift = nv / 2;
      }
      for (int b = 0; b < s_; ++b) {
        const int jv = (iv[b] + shift) % nv;
        idx.push_back(offset_ + gc_.flat(iu, jv));
        wgt.push_back(wth[a] * wv[b]);
      }
    }
  }

  const Grid::Component& gc_;
  ShapeKind kind_;
  int offset_;
  int s_;
  std::vector<Real> bary_;
};

// Radial quadrature over [r_lo, r_hi]: the singular panel (r_lo = 0) carries
// the rho^(1-beta) weight analytically via Gauss-Jacobi; the rest are plain
// Gauss-Legendre panels with width capped so interpolated grid functions
// stay resolved.
struct RadialRule {
  Vector rho;
  Vector w_plain;     // plain Lebesgue weight (zero on the singular panel)
  Vector w_singular;  // Jacobi weight including rho^(1-beta) (else zero)
};

RadialRule build_radial(Real r_lo, Real r_hi, Real beta, Real w_cap,
                        Real floor_frac, int order) {
  std::vector<std::pair<Real, Real>> panels;  // descending [a,b]
  // The Gauss-Jacobi panel absorbs the endpoint weight analytically, so it
  // may span a full resolution cell; refining further only amplifies the
  // rho^-2-scaled evaluation noise of the smooth factor.
  const Real floor_val =
      (r_lo == 0.0) ? std::min(0.7 * w_cap, 0.25 * r_hi)
                    : floor_frac * r_hi;
  Real b = r_hi;
  while (b > std::max(r_lo, floor_val) * (1 + 1e-12)) {
    Real a = std::max(b - w_cap, b / 2);
    if (a < std::max(r_lo, floor_val)) a = std::max(r_lo, floor_val);
    panels.emplace_back(a, b);
    b = a;
  }
  const bool singular = r_lo == 0.0;

  const QuadRule leg = gauss_legendre(order);
  std::vector<Real> rho, wp, ws;
  for (auto [a, bb] : panels) {
    const QuadRule r = map_to_interval(leg, a, bb);
    for (int i = 0; i < order; ++i) {
      rho.push_back(r.x[i]);
      wp.push_back(r.w[i]);
      ws.push_back(0.0);
    }
  }
  if (singular && b > 0) {
    const QuadRule r = gauss_power_weight(order, 1.0 - beta, b);
    for (int i = 0; i < order; ++i) {
      rho.push_back(r.x[i]);
      wp.push_back(0.0);
      ws.push_back(r.w[i]);
    }
  }
  RadialRule out;
  out.rho = Eigen::Map<Vector>(rho.data(), rho.size());
  out.w_plain = Eigen::Map<Vector>(wp.data(), wp.size());
  out.w_singular = Eigen::Map<Vector>(ws.data(), ws.size());
  return out;
}

}  // namespace

std::string variant_name(OperatorVariant v) {
  switch (v) {
    case OperatorVariant::FpFull: return "fp_full";
    case OperatorVariant::Punched: return "punched";
    case OperatorVariant::Compensator: return "compensator";
    case OperatorVariant::CompensatorPrime: return "compensator_prime";
    case OperatorVariant::HypersingularD: return "hypersingular_D";
  }
  return "?";
}

Real symbol_constant(int n, Real beta) {
  if (!(beta > 0.0 && beta < 2.0))
    throw ArgumentError("symbol constant requires beta in (0,2)");
  const Real alpha = 1.0 - beta;
  return std::pow(2.0, -beta) * std::pow(kPi, (n - 1) / 2.0) *
         gamma_negative(-beta / 2) / std::tgamma((n - alpha) / 2);
}

Real fp_radial_moment(Real beta, Real delta, int k) {
  if (!(delta > 0)) throw ArgumentError("fp moment needs delta > 0");
  if (std::abs(k - beta) < 1e-12)
    throw ArgumentError("k = beta would need a logarithmic finite part");
  return std::pow(delta, k - beta) / (k - beta);
}

KernelSpec KernelSpec::make(const ManifoldSpec& spec, Real alpha,
                            Real split_radius) {
  if (!(alpha > -1.0 && alpha < 1.0))
    throw ArgumentError("alpha must lie in (-1, 1)");
  if (!(split_radius > 0)) throw ArgumentError("splitting radius must be > 0");
  KernelSpec ks;
  ks.n = spec.ambient_dim();
  ks.m = ks.n - 1;
  ks.alpha = alpha;
  ks.beta = 1.0 - alpha;
  ks.c_m = (ks.m == 1) ? 0.5 : 1.0 / (2 * kPi);
  ks.split_radius = split_radius;
  const Real gap = spec.min_component_gap();
  if (split_radius >= 0.5 * gap)
    throw ConfigError("splitting radius must stay below half the "
                      "inter-component distance");
  return ks;
}

struct Assembler::Impl {
  Grid grid;
  KernelSpec ks;
  AssemblyParams p;
  Real diameter;
  Real h_min_dir;

  std::vector<PolarPatch> patches;
  std::vector<NodeInterpolator> interp;
  Matrix normals;  // n x N (hypersingular kernel needs them)

  // Refined quadrature grid for the smooth far fields of h(x): the cutoff
  // transition must be oversampled regardless of the operator grid.
  Grid far_grid;
  Matrix far_normals;
  Matrix nodes_flat;      // n x N, operator grid
  Matrix far_nodes_flat;  // n x N_far
  void build_far_grid();
  void check_resolution() const;

  bool h_done = false;
  Vector h_nodes;
  Matrix hvec_nodes;
  bool fp_done = false;
  OperatorMatrix fp;

  Cutoff base_cutoff() const {
    return Cutoff{p.cutoff_inner_frac * ks.split_radius, ks.split_radius};
  }

  Real kernel_pow(Real r) const { return std::pow(r, -ks.beta - ks.m); }

  void build_patches();
  void compute_h();
  void assemble_fp();
  Matrix far_pair_difference_form(const Cutoff& psi) const;
  OperatorMatrix assemble_punched(Real delta);
  OperatorMatrix assemble_D();
};

Assembler::Assembler(Grid grid, KernelSpec kernel, AssemblyParams params)
    : impl_(std::make_unique<Impl>()) {
  impl_->grid = std::move(grid);
  impl_->ks = kernel;
  impl_->p = params;
  impl_->diameter = impl_->grid.spec.diameter();

  Real hmin = std::numeric_limits<Real>::infinity();
  for (const auto& gc : impl_->grid.comps) {
    hmin = std::min(hmin, gc.h_u);
    if (gc.n_v > 1) hmin = std::min(hmin, gc.h_v);
  }
  impl_->h_min_dir = hmin;

  for (std::size_t ci = 0; ci < impl_->grid.comps.size(); ++ci)
    impl_->interp.emplace_back(impl_->grid, static_cast<int>(ci), params.stencil);

  impl_->normals.resize(impl_->grid.spec.ambient_dim(), impl_->grid.total);
  for (int i = 0; i < impl_->grid.total; ++i) {
    const auto& gc = impl_->grid.comp_of_node(i);
    impl_->normals.col(i) = outward_normal(
        impl_->grid.spec.components[gc.index], gc.param(impl_->grid.local_of(i)));
  }

  impl_->build_patches();
  impl_->build_far_grid();
}

void Assembler::Impl::build_far_grid() {
  // Target spacing: a tenth of the cutoff transition width.
  const Real width = (1.0 - p.cutoff_inner_frac) * ks.split_radius;
  const Real target = width / 10.0;
  std::vector<int> ns;
  for (const auto& c : grid.spec.components) {
    const Real circumf = kPi * c.diameter();  // coarse upper bound
    int n = 16;
    const int cap = (c.manifold_dim() == 1) ? 8192 : 512;
    while (n < cap && circumf / n > target) n *= 2;
    ns.push_back(n);
  }
  far_grid = build_grid(grid.spec, ns);
  far_normals.resize(grid.spec.ambient_dim(), far_grid.total);
  for (int i = 0; i < far_grid.total; ++i) {
    const auto& gc = far_grid.comp_of_node(i);
    far_normals.col(i) = outward_normal(far_grid.spec.components[gc.index],
                                        gc.param(far_grid.local_of(i)));
  }
  nodes_flat.resize(grid.spec.ambient_dim(), grid.total);
  for (int i = 0; i < grid.total; ++i) nodes_flat.col(i) = grid.node(i);
  far_nodes_flat.resize(grid.spec.ambient_dim(), far_grid.total);
  for (int i = 0; i < far_grid.total; ++i)
    far_nodes_flat.col(i) = far_grid.node(i);
}

Assembler::~Assembler() = default;
Assembler::Assembler(Assembler&&) noexcept = default;

const Grid& Assembler::grid() const { return impl_->grid; }
const KernelSpec& Assembler::kernel() const { return impl_->ks; }
const Vector& Assembler::mass() const { return impl_->grid.W; }

void Assembler::Impl::check_resolution() const {
  // Operator assembly needs the grid to resolve the cutoff transition; the
  // finite-part constants h do not (they use their own refined far grid).
  const Real c = ks.split_radius;
  if (grid.h_grid > c / 8) {
    if (p.allow_coarse) {
      if (h_min_dir > c / 4)
        throw ConfigError("grid too coarse for splitting radius even with "
                          "allow_coarse");
      std::cerr << "[rieszlab] warning: coarse grid (h_grid = " << grid.h_grid
                << " > c/8 = " << c / 8 << "), accuracy degraded\n";
    } else {
      throw ConfigError("grid too coarse: h_grid > c/8");
    }
  }
}

void Assembler::Impl::build_patches() {
  const Real cap = 1.02 * ks.split_radius;
  patches.resize(grid.total);
  std::vector<std::string> errors(grid.total);
  parallel_for(grid.total, [&](long i) {
    const auto& gc = grid.comp_of_node(static_cast<int>(i));
    try {
      patches[i] = build_patch(grid.spec, gc.index,
                               gc.param(grid.local_of(static_cast<int>(i))),
                               p.n_omega, cap, p.ray);
      if (patches[i].rho_max() < ks.split_radius)
        errors[i] = "splitting radius exceeds chord-coordinate injectivity";
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw ConfigError("patch construction failed: " + e);
}

void Assembler::Impl::compute_h() {
  if (h_done) return;
  const int N = grid.total;
  const int n = grid.spec.ambient_dim();
  const Real c = ks.split_radius;
  const Cutoff psi = base_cutoff();
  const Real Q0 = 1.0 / ks.c_m;

  h_nodes.resize(N);
  hvec_nodes.resize(n, N);

  const RadialRule rr = build_radial(0.0, c, ks.beta,
                                     p.panel_cap_frac * h_min_dir,
                                     p.panel_floor_frac, p.gauss_order);

  parallel_for(N, [&](long li) {
    const int i = static_cast<int>(li);
    const PolarPatch& patch = patches[i];
    const Vector xi = grid.node(i);
    thread_local PolarPatch::Row rowbuf;
    thread_local Vector Svec;
    Svec = Vector::Zero(n);
    Real acc = 0;
    Vector vacc = Vector::Zero(n);
    for (Index q = 0; q < rr.rho.size(); ++q) {
      const Real rho = rr.rho[q];
      const Real ps = psi(rho);
      patch.row_into(rho, rowbuf);
      const auto& row = rowbuf;
      Real Q = 0;
      Svec.setZero();
      Vector& S = Svec;
      for (int d = 0; d < patch.n_omega(); ++d) {
        const Real wj = patch.omega_weights()[d] * row.jpol[d];
        Q += wj;
        S += wj * (row.y.col(d) - xi);
      }
      Q /= std::pow(rho, ks.m - 1);
      // h integrand: rho^(-beta-1) (psi Q - Q0); vector integrand:
      // rho^(-beta-m) psi S.  Singular-panel weights carry rho^(1-beta).
      acc += rr.w_plain[q] * std::pow(rho, -ks.beta - 1.0) * (ps * Q - Q0) +
             rr.w_singular[q] * (ps * Q - Q0) / (rho * rho);
      vacc += (rr.w_plain[q] * kernel_pow(rho) +
               rr.w_singular[q] * std::pow(rho, -Real(ks.m) - 1.0)) *
              ps * S;
    }
    acc += Q0 * fp_radial_moment(ks.beta, c, 0);

    // Smooth far field on the refined grid.
    const int nd = static_cast<int>(xi.size());
    const Real* fx = far_nodes_flat.data();
    const Real t0 = psi.t0;
    for (int j = 0; j < far_grid.total; ++j) {
      Real r2 = 0;
      for (int d = 0; d < nd; ++d) {
        const Real dd = fx[j * nd + d] - xi[d];
        r2 += dd * dd;
      }
      const Real r = std::sqrt(r2);
      if (r <= t0) continue;
      const Real w = 1.0 - psi(r);
      const Real kw = far_grid.W[j] * w * kernel_pow(r);
      acc += kw;
      for (int d = 0; d < nd; ++d) vacc[d] += kw * (fx[j * nd + d] - xi[d]);
    }
    h_nodes[i] = acc;
    hvec_nodes.col(i) = vacc;
  });
  h_done = true;
}

Matrix Assembler::Impl::far_pair_difference_form(const Cutoff& psi) const {
  const int N = grid.total;
  Matrix A = Matrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    const Vector xi = grid.node(i);
    for (int j = i + 1; j < N; ++j) {
      const Real r = (grid.node(j) - xi).norm();
      const Real t = 1.0 - psi(r);
      if (t == 0.0) continue;
      const Real w = grid.W[i] * grid.W[j] * t * kernel_pow(r);
      A(i, i) -= w;
      A(j, j) -= w;
      A(i, j) += w;
      A(j, i) += w;
    }
  }
  return A;
}

void Assembler::Impl::assemble_fp() {
  if (fp_done) return;
  check_resolution();
  compute_h();
  const int N = grid.total;
  const Real c = ks.split_radius;
  const Cutoff psi = base_cutoff();

  Matrix A = far_pair_difference_form(psi);

  const RadialRule rr = build_radial(0.0, c, ks.beta,
                                     p.panel_cap_frac * h_min_dir,
                                     p.panel_floor_frac, p.gauss_order);

  const int threads = std::max(1, thread_count());
  std::vector<Matrix> buffers(threads, Matrix::Zero(N, N));
  const long chunk = (N + threads - 1) / threads;

  parallel_for(threads, [&](long t) {
    Matrix& B = buffers[t];
    std::vector<int> idx;
    std::vector<Real> wgt;
    std::vector<int> loc_of(N, -1);
    std::vector<int> touched;
    std::vector<int> vidx;
    std::vector<Real> vval;
    Matrix block;
    PolarPatch::Row rowbuf;

    for (long i = t * chunk; i < std::min<long>(N, (t + 1) * chunk); ++i) {
      const PolarPatch& patch = patches[i];
      const auto& gc = grid.comp_of_node(static_cast<int>(i));
      const NodeInterpolator& itp = interp[gc.index];
      touched.clear();
      auto slot = [&](int g) {
        if (loc_of[g] < 0) {
          loc_of[g] = static_cast<int>(touched.size());
          touched.push_back(g);
        }
        return loc_of[g];
      };
      slot(static_cast<int>(i));
      const int cap_pts = itp.max_points() + 1;
      block = Matrix::Zero(cap_pts * 4, cap_pts * 4);

      auto ensure_block = [&](int need) {
        if (need > block.rows()) {
          Matrix bigger = Matrix::Zero(2 * need, 2 * need);
          bigger.topLeftCorner(block.rows(), block.cols()) = block;
          block.swap(bigger);
        }
      };

      for (Index q = 0; q < rr.rho.size(); ++q) {
        const Real rho = rr.rho[q];
        const Real ps = psi(rho);
        if (ps == 0.0) continue;
        const Real cw =
            rr.w_plain[q] * kernel_pow(rho) +
            rr.w_singular[q] * std::pow(rho, -Real(ks.m) - 1.0);
        patch.row_into(rho, rowbuf);
        const auto& row = rowbuf;
        for (int d = 0; d < patch.n_omega(); ++d) {
          const Real coeff = -0.5 * grid.W[static_cast<int>(i)] * cw *
                             patch.omega_weights()[d] * ps * row.jpol[d];
          itp.weights(row.u_chart.col(d), idx, wgt);
          // v = e_i - interpolation row
          vidx.clear();
          vval.clear();
          vidx.push_back(loc_of[static_cast<int>(i)]);
          vval.push_back(1.0);
          for (std::size_t k = 0; k < idx.size(); ++k) {
            const int s = slot(idx[k]);
            ensure_block(static_cast<int>(touched.size()));
            if (s == vidx[0]) {
              vval[0] -= wgt[k];
            } else {
              vidx.push_back(s);
              vval.push_back(-wgt[k]);
            }
          }
          ensure_block(static_cast<int>(touched.size()));
          for (std::size_t a = 0; a < vidx.size(); ++a)
            for (std::size_t b = 0; b < vidx.size(); ++b)
              block(vidx[a], vidx[b]) += coeff * vval[a] * vval[b];
        }
      }
      for (std::size_t a = 0; a < touched.size(); ++a)
        for (std::size_t b = 0; b < touched.size(); ++b)
          B(touched[a], touched[b]) +=
              block(static_cast<int>(a), static_cast<int>(b));
      for (int g : touched) loc_of[g] = -1;
    }
  });
  for (const auto& B : buffers) A += B;

  for (int i = 0; i < N; ++i) A(i, i) += grid.W[i] * h_nodes[i];

  fp.A = 0.5 * (A + A.transpose());
  fp.variant = OperatorVariant::FpFull;
  fp.kernel = ks;
  fp.grid_nodes = N;
  fp_done = true;
}

const Vector& Assembler::h_scalar_nodes() {
  impl_->compute_h();
  return impl_->h_nodes;
}

const Matrix& Assembler::h_vector_nodes() {
  impl_->compute_h();
  return impl_->hvec_nodes;
}

const OperatorMatrix& Assembler::fp_full() {
  impl_->assemble_fp();
  return impl_->fp;
}

OperatorMatrix Assembler::Impl::assemble_punched(Real delta) {
  const int N = grid.total;
  const Real c = ks.split_radius;
  OperatorMatrix op;
  op.variant = OperatorVariant::Punched;
  op.kernel = ks;
  op.delta = delta;
  op.grid_nodes = N;

  if (delta >= diameter) {
    op.A = Matrix::Zero(N, N);
    return op;
  }
  if (!(delta > 0) || delta > c * (1 + 1e-12))
    throw ArgumentError("punched cut must satisfy 0 < delta <= c");
  check_resolution();
  const Real h_guard = p.allow_coarse ? h_min_dir : grid.h_grid;
  if (delta < 4 * h_guard)
    throw NumericError("punched cut delta < 4 h_grid: the grid rule would "
                       "alias the cut");

  const Cutoff psi{std::max(delta, p.cutoff_inner_frac * c), c};

  // Far pairs: the indicator |x-y| >= delta is inactive where 1 - psi > 0.
  Matrix A = Matrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    const Vector xi = grid.node(i);
    for (int j = i + 1; j < N; ++j) {
      const Real r = (grid.node(j) - xi).norm();
      const Real t = 1.0 - psi(r);
      if (t == 0.0) continue;
      const Real w = grid.W[i] * grid.W[j] * t * kernel_pow(r);
      A(i, j) += w;
      A(j, i) += w;
    }
  }

  // Near annulus delta <= rho <= c in the polar variable (exact cut).
  const RadialRule rr = build_radial(delta, c, ks.beta,
                                     p.panel_cap_frac * h_min_dir,
                                     p.panel_floor_frac, p.gauss_order);
  const int threads = std::max(1, thread_count());
  std::vector<Matrix> buffers(threads, Matrix::Zero(N, N));
  const long chunk = (N + threads - 1) / threads;
  parallel_for(threads, [&](long t) {
    Matrix& B = buffers[t];
    std::vector<int> idx;
    std::vector<Real> wgt;
    PolarPatch::Row rowbuf;
    for (long i = t * chunk; i < std::min<long>(N, (t + 1) * chunk); ++i) {
      const PolarPatch& patch = patches[i];
      const NodeInterpolator& itp = interp[grid.comp_of_node(i).index];
      for (Index q = 0; q < rr.rho.size(); ++q) {
        const Real rho = rr.rho[q];
        const Real ps = psi(rho);
        if (ps == 0.0) continue;
        const Real cw = rr.w_plain[q] * kernel_pow(rho);
        patch.row_into(rho, rowbuf);
        const auto& row = rowbuf;
        for (int d = 0; d < patch.n_omega(); ++d) {
          const Real coeff = grid.W[i] * cw * patch.omega_weights()[d] * ps *
                             row.jpol[d];
          itp.weights(row.u_chart.col(d), idx, wgt);
          for (std::size_t k = 0; k < idx.size(); ++k)
            B(i, idx[k]) += coeff * wgt[k];
        }
      }
    }
  });
  for (const auto& B : buffers) A += B;

  op.A = 0.5 * (A + A.transpose());
  return op;
}

OperatorMatrix Assembler::punched(Real delta) {
  return impl_->assemble_punched(delta);
}

std::pair<OperatorMatrix, OperatorMatrix> Assembler::compensators(Real delta) {
  const OperatorMatrix& full = fp_full();
  OperatorMatrix pun = punched(delta);
  OperatorMatrix comp;
  comp.A = full.A - pun.A;
  comp.variant = OperatorVariant::Compensator;
  comp.kernel = impl_->ks;
  comp.delta = delta;
  comp.grid_nodes = impl_->grid.total;

  OperatorMatrix prime = comp;
  prime.variant = OperatorVariant::CompensatorPrime;
  const Real lead =
      std::pow(delta, -impl_->ks.beta) / (impl_->ks.beta * impl_->ks.c_m);
  prime.A += lead * Matrix(impl_->grid.W.asDiagonal());
  return {std::move(comp), std::move(prime)};
}

OperatorMatrix Assembler::Impl::assemble_D() {
  check_resolution();
  for (const auto& c : grid.spec.components)
    if (c.kind != ShapeKind::Sphere || c.ambient_dim() != 3)
      throw ConfigError("hypersingular D is only assembled on spheres in R^3");

  const int N = grid.total;
  const Real c = ks.split_radius;
  const Cutoff psi = base_cutoff();
  const Real c_n = 1.0 / (2.0 * (grid.spec.ambient_dim() - 1) * kPi);
  const Real QD0 = c_n / ks.c_m;  // leading angular coefficient of k_D J_pol

  auto kD = [&](const Vector& x, const Vector& nx, const Vector& y,
                const Vector& ny) {
    const Vector d = y - x;
    const Real r2 = d.squaredNorm();
    const Real r = std::sqrt(r2);
    const Real t1 = nx.dot(ny) / (r2 * r);
    const Real t2 =
        3.0 * (d.dot(ny)) * (-d).dot(nx) / (r2 * r2 * r);
    return c_n * (t1 + t2);
  };

  // Far pairs, difference form.
  Matrix A = Matrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    const Vector xi = grid.node(i);
    for (int j = i + 1; j < N; ++j) {
      const Real r = (grid.node(j) - xi).norm();
      const Real t = 1.0 - psi(r);
      if (t == 0.0) continue;
      const Real w = grid.W[i] * grid.W[j] * t *
                     kD(xi, normals.col(i), grid.node(j), normals.col(j));
      A(i, i) -= w;
      A(j, j) -= w;
      A(i, j) += w;
      A(j, i) += w;
    }
  }

  // Near field: bounded integrand (k_D (phi_x - phi_y)^2 J_pol = O(1)),
  // plain Legendre panels; h_D by the same model-subtraction split.
  std::vector<std::pair<Real, Real>> panels;
  {
    Real b = c;
    const Real w_cap = p.panel_cap_frac * h_min_dir;
    const Real fl = std::min(0.7 * w_cap, 0.25 * c);
    while (b > fl) {
      Real a = std::max(b - w_cap, b / 2);
      if (a < fl) a = 0.0;
      panels.emplace_back(a, b);
      b = a;
    }
    if (b > 0) panels.emplace_back(0.0, b);
  }
  const QuadRule leg = gauss_legendre(p.gauss_order);

  Vector hD = Vector::Zero(N);
  const int threads = std::max(1, thread_count());
  std::vector<Matrix> buffers(threads, Matrix::Zero(N, N));
  const long chunk = (N + threads - 1) / threads;
  parallel_for(threads, [&](long t) {
    Matrix& B = buffers[t];
    std::vector<int> idx;
    std::vector<Real> wgt;
    PolarPatch::Row rowbuf;
    Vector nybuf;
    for (long i = t * chunk; i < std::min<long>(N, (t + 1) * chunk); ++i) {
      const PolarPatch& patch = patches[i];
      const auto& gc = grid.comp_of_node(i);
      const ComponentSpec& cs = grid.spec.components[gc.index];
      const NodeInterpolator& itp = interp[gc.index];
      const Vector xi = grid.node(i);
      const Vector ni = normals.col(i);
      Real hacc = 0;
      for (const auto& [a, bb] : panels) {
        const QuadRule r = map_to_interval(leg, a, bb);
        for (int qq = 0; qq < p.gauss_order; ++qq) {
          const Real rho = r.x[qq];
          const Real ps = psi(rho);
          patch.row_into(rho, rowbuf);
          const auto& row = rowbuf;
          Real ang = 0;
          for (int d = 0; d < patch.n_omega(); ++d) {
            const Vector y = row.y.col(d);
            outward_normal_into(cs, row.u_chart.col(d), nybuf);
            const Real kd = kD(xi, ni, y, nybuf);
            const Real wj = patch.omega_weights()[d] * row.jpol[d];
            ang += wj * kd;
            if (ps > 0.0) {
              const Real coeff = -0.5 * grid.W[i] * r.w[qq] * ps * kd * wj;
              itp.weights(row.u_chart.col(d), idx, wgt);
              // v = e_i - s
              // accumulate (e_i - s)(e_i - s)^T without local blocks: the
              // sphere grids used for D are small.
              B(i, i) += coeff;
              for (std::size_t k = 0; k < idx.size(); ++k) {
                B(i, idx[k]) -= coeff * wgt[k];
                B(idx[k], i) -= coeff * wgt[k];
                for (std::size_t l = 0; l < idx.size(); ++l)
                  B(idx[k], idx[l]) += coeff * wgt[k] * wgt[l];
              }
            }
          }
          hacc += r.w[qq] * (ps * ang - QD0 / (rho * rho));
        }
      }
      hacc += QD0 * fp_radial_moment(1.0, c, 0);
      for (int j = 0; j < far_grid.total; ++j) {
        const Real rr2 = (far_nodes_flat.col(j) - xi).norm();
        if (rr2 <= psi.t0) continue;
        const Real w = 1.0 - psi(rr2);
        hacc += far_grid.W[j] * w * kD(xi, ni, far_nodes_flat.col(j),
                                       far_normals.col(j));
      }
      hD[i] = hacc;
    }
  });
  for (const auto& B : buffers) A += B;
  for (int i = 0; i < N; ++i) A(i, i) += grid.W[i] * hD[i];

  OperatorMatrix op;
  op.A = 0.5 * (A + A.transpose());
  op.variant = OperatorVariant::HypersingularD;
  op.kernel = ks;
  op.grid_nodes = N;
  return op;
}

OperatorMatrix Assembler::hypersingular_D() { return impl_->assemble_D(); }

Vector apply_operator(const OperatorMatrix& op, const Vector& W,
                      const Vector& phi) {
  return (op.A * phi).cwiseQuotient(W);
}

OperatorMatrix compensator_gradient(const OperatorMatrix& comp_prime) {
  OperatorMatrix g = comp_prime;
  g.A = comp_prime.A + comp_prime.A.transpose();
  return g;
}

Real h_scalar_at(Assembler& assembler, int node) {
  return assembler.h_scalar_nodes()[node];
}

}  // namespace rieszlab
