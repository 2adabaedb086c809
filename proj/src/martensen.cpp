#include "rieszlab/martensen.hpp"

#include <cmath>
#include <functional>

#include "rieszlab/quadrature.hpp"

namespace rieszlab {

namespace {

constexpr Real kPi = EIGEN_PI;

// Right-hand side of the surface-polar ray ODE,
//   du^l/ds = A F^l / (F_k F^k),
// the stable rewrite of F^l / (A (1 - G^2/A^2)).  Also reports the
// degeneracy monitor q = 1 - G^2/A^2 = |grad A|^2.
struct RayField {
  const ComponentSpec& c;
  Vector x0;
  // Workspaces: the field is evaluated millions of times per assembly.
  mutable Vector x_, d_, fcov_, fcon_;
  mutable Matrix T_;
  mutable GeometryJet jet_;

  void value(const Vector& u, Vector& out, Real* q_out = nullptr) const {
    embed_frame(c, u, x_, T_);
    d_ = x_ - x0;
    const Real A2 = d_.squaredNorm();
    fcov_.noalias() = T_.transpose() * d_;
    const int m = static_cast<int>(u.size());
    fcon_.resize(m);
    if (m == 1) {
      fcon_[0] = fcov_[0] / T_.col(0).squaredNorm();
    } else {
      const Real g00 = T_.col(0).squaredNorm();
      const Real g11 = T_.col(1).squaredNorm();
      const Real g01 = T_.col(0).dot(T_.col(1));
      const Real det = g00 * g11 - g01 * g01;
      fcon_[0] = (g11 * fcov_[0] - g01 * fcov_[1]) / det;
      fcon_[1] = (g00 * fcov_[1] - g01 * fcov_[0]) / det;
    }
    const Real FF = fcon_.dot(fcov_);
    if (q_out) *q_out = FF / A2;
    out = (std::sqrt(A2) / FF) * fcon_;
  }

  Vector operator()(const Vector& u, Real* q_out = nullptr) const {
    Vector out;
    value(u, out, q_out);
    return out;
  }

  // Field value together with the analytic directional derivative J_f(u) v.
  // The field is direction-homogeneous at the vertex, so differences are
  // useless there; the chain rule through the Gaussian equations is exact.
  void value_and_jacvec(const Vector& u, const Vector& v, Vector& f,
                        Vector& jv) const {
    component_jet_into(c, u, jet_);
    const GeometryJet& j = jet_;
    const int m = j.m;
    const Vector d = j.x - x0;
    const Real A = d.norm();
    const Vector Fcov = j.tangents.transpose() * d;
    const Vector Fcon = j.metric_inv * Fcov;
    const Real phi = Fcon.dot(Fcov);
    const Real G = d.dot(j.normal);
    f = (A / phi) * Fcon;

    // Directional derivatives along v of Fcov, g, g^{-1}, Fcon, phi, A.
    Vector dFcov = Vector::Zero(m);
    for (int k = 0; k < m; ++k)
      for (int mm = 0; mm < m; ++mm) {
        Real t = j.metric(k, mm) + j.sff(k, mm) * G;
        for (int l = 0; l < m; ++l)
          t += j.christoffel(l, k, mm) * Fcov[l];
        dFcov[k] += v[mm] * t;
      }
    Matrix dg = Matrix::Zero(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int mm = 0; mm < m; ++mm) {
          Real t = 0;
          for (int cc = 0; cc < m; ++cc)
            t += j.christoffel(cc, a, mm) * j.metric(cc, b) +
                 j.christoffel(cc, b, mm) * j.metric(cc, a);
          dg(a, b) += v[mm] * t;
        }
    const Matrix dginv = -j.metric_inv * dg * j.metric_inv;
    const Vector dFcon = dginv * Fcov + j.metric_inv * dFcov;
    const Real dphi = dFcon.dot(Fcov) + Fcon.dot(dFcov);
    const Real dA = Fcov.dot(v) / A;
    jv = (dA / phi) * Fcon + (A / phi) * dFcon -
         (A * dphi / (phi * phi)) * Fcon;
  }
};

using Field = std::function<void(const Vector&, Vector&)>;

struct Dopri5 {
  static constexpr Real a21 = 1.0 / 5;
  static constexpr Real a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr Real a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr Real a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr Real a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
  static constexpr Real b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr Real e1 = 35.0 / 384 - 5179.0 / 57600,
                        e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640,
                        e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

  const Field& f;
  Real atol, rtol;
  mutable Vector k1, k2, k3, k4, k5, k6, k7, tmp, err;

  Real step(const Vector& u, Real h, Vector& out) const {
    f(u, k1);
    tmp = u + (h * a21) * k1;
    f(tmp, k2);
    tmp = u + h * (a31 * k1 + a32 * k2);
    f(tmp, k3);
    tmp = u + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(tmp, k4);
    tmp = u + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(tmp, k5);
    tmp = u + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(tmp, k6);
    out = u + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(out, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    Real scaled = 0;
    for (Index i = 0; i < u.size(); ++i) {
      const Real sc = atol + rtol * std::max(std::abs(u[i]), std::abs(out[i]));
      scaled = std::max(scaled, std::abs(err[i]) / sc);
    }
    return scaled;
  }

  // Advance to s_end; optionally stop where the monitor falls below q_floor.
  mutable Vector next_;
  mutable Real h_hint = 0.0;
  Real advance(Real s, Real s_end, Vector& u,
               const std::function<Real(const Vector&)>& monitor,
               Real q_floor, bool* degenerate) const {
    Real h = (h_hint > 0) ? std::min(h_hint, s_end - s) : (s_end - s) / 16;
    if (degenerate) *degenerate = false;
    int guard = 0;
    while (s < s_end) {
      if (++guard > 200000) throw NumericError("ray integration stalled");
      h = std::min(h, s_end - s);
      Vector& next = next_;
      const Real err = step(u, h, next);
      if (err <= 1.0) {
        s += h;
        u.swap(next);
        if (q_floor > 0 && monitor(u) < q_floor) {
          if (degenerate) *degenerate = true;
          return s;
        }
      }
      h *= std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
      h_hint = h;
    }
    return s;
  }
};

Vector cheb_lobatto(Real a, Real b, int k) {
  Vector x(k);
  for (int i = 0; i < k; ++i)
    x[i] = 0.5 * (a + b) - 0.5 * (b - a) * std::cos(kPi * i / (k - 1));
  return x;
}

Real bary_weight(int i, int k) {
  Real w = (i % 2 == 0) ? 1.0 : -1.0;
  if (i == 0 || i == k - 1) w *= 0.5;
  return w;
}

template <typename Out>
void bary_eval_into(const Vector& nodes, const Matrix& samples, Real t,
                    Out&& out) {
  const int k = static_cast<int>(nodes.size());
  const int rows = static_cast<int>(samples.rows());
  Real denom = 0;
  for (int r = 0; r < rows; ++r) out[r] = 0;
  for (int i = 0; i < k; ++i) {
    const Real d = t - nodes[i];
    if (std::abs(d) < 1e-300) {
      for (int r = 0; r < rows; ++r) out[r] = samples(r, i);
      return;
    }
    const Real c = bary_weight(i, k) / d;
    denom += c;
    for (int r = 0; r < rows; ++r) out[r] += c * samples(r, i);
  }
  for (int r = 0; r < rows; ++r) out[r] /= denom;
}

Vector bary_eval(const Vector& nodes, const Matrix& samples, Real t) {
  Vector out(samples.rows());
  bary_eval_into(nodes, samples, t, out);
  return out;
}

// Chart coefficient vectors of the orthonormalized tangent frame (columns
// are e1, e2 expressed in chart coordinates).
Matrix gram_schmidt_frame(const GeometryJet& jet) {
  const int m = jet.m;
  Matrix B(m, m);
  if (m == 1) {
    B(0, 0) = 1.0 / std::sqrt(jet.metric(0, 0));
    return B;
  }
  const Real n1 = jet.tangents.col(0).norm();
  const Vector e1 = jet.tangents.col(0) / n1;
  const Real proj = jet.tangents.col(1).dot(e1);
  Vector w2 = jet.tangents.col(1) - proj * e1;
  const Real n2 = w2.norm();
  B.setZero();
  B(0, 0) = 1.0 / n1;
  B(0, 1) = -proj / (n1 * n2);
  B(1, 1) = 1.0 / n2;
  return B;
}

// Integrates the ray (and optionally its omega-variation) on the given
// chart.  theta must be metric-unit; theta_prime may be empty.
PolarRay integrate_ray(const ComponentSpec& c, const Vector& u0,
                       const Vector& theta, const Vector& theta_prime,
                       Real rho_cap, const RayOptions& opts) {
  const int m = c.manifold_dim();
  const bool with_var = theta_prime.size() > 0;

  {
    Vector x;
    Matrix T;
    embed_frame(c, u0, x, T);
    const Matrix g = T.transpose() * T;
    if (std::abs(theta.dot(g * theta) - 1.0) > 1e-8)
      throw ArgumentError("ray direction must be metric-unit");
  }

  const Real diam = c.diameter();
  const Real s0 =
      opts.series_start_frac * std::min(diam, 4.0 * c.curvature_scale());
  if (rho_cap <= s0) throw ArgumentError("ray radius below series start");

  // Christoffel contractions for the quadratic series start.
  Vector gtt = Vector::Zero(m), gttp = Vector::Zero(m);
  {
    ManifoldSpec tmp;
    tmp.components.push_back(c);
    const GeometryJet j0 = jet(tmp, 0, u0);
    for (int l = 0; l < m; ++l)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          gtt[l] += j0.christoffel(l, a, b) * theta[a] * theta[b];
          if (with_var)
            gttp[l] += j0.christoffel(l, a, b) * theta[a] * theta_prime[b];
        }
  }
  auto series_u = [&](Real s) { return Vector(u0 + s * theta - 0.5 * s * s * gtt); };
  auto series_v = [&](Real s) { return Vector(s * theta_prime - s * s * gttp); };

  RayField field{c, embed(c, u0)};
  Field rhs;
  Vector fbuf, jvbuf, ubuf, vbuf;
  if (with_var) {
    rhs = [&](const Vector& y, Vector& out) {
      out.resize(2 * m);
      ubuf = y.head(m);
      vbuf = y.tail(m);
      field.value_and_jacvec(ubuf, vbuf, fbuf, jvbuf);
      out.head(m) = fbuf;
      out.tail(m) = jvbuf;
    };
  } else {
    rhs = [&](const Vector& u, Vector& out) { field.value(u, out); };
  }
  Vector mbuf, mout;
  auto monitor = [&](const Vector& y) {
    Real q;
    mbuf = y.head(m);
    field.value(mbuf, mout, &q);
    return q;
  };
  Dopri5 ode{rhs, opts.tol * std::max(1.0, diam), opts.tol};

  auto make_state = [&](Real s) {
    if (!with_var) return series_u(s);
    Vector y(2 * m);
    y.head(m) = series_u(s);
    y.tail(m) = series_v(s);
    return y;
  };

  // Phase 1: march to the cap with the injectivity monitor active.
  Vector y = make_state(s0);
  bool degenerate = false;
  const Real reached =
      ode.advance(s0, rho_cap, y, monitor, opts.degeneracy_floor, &degenerate);

  PolarRay ray;
  ray.u0 = u0;
  ray.theta = theta;
  ray.truncated = degenerate;
  ray.rho_max = degenerate ? 0.9 * reached : reached;

  // Phase 2: land exactly on Chebyshev-Lobatto samples of [0, rho_max].
  const int K = opts.cheb_points;
  ray.rho_nodes = cheb_lobatto(0.0, ray.rho_max, K);
  ray.u_samples.resize(m, K);
  ray.dudrho.resize(m, K);
  if (with_var) ray.dudomega.resize(m, K);
  Real s = 0.0;
  y = make_state(0.0);
  for (int i = 0; i < K; ++i) {
    const Real target = ray.rho_nodes[i];
    if (target <= s0) {
      y = make_state(target);
      s = target;
    } else {
      if (s < s0) {
        y = make_state(s0);
        s = s0;
      }
      s = ode.advance(s, target, y, monitor, 0.0, nullptr);
    }
    ray.u_samples.col(i) = y.head(m);
    ray.dudrho.col(i) = (target == 0.0) ? theta : field(y.head(m));
    if (with_var) ray.dudomega.col(i) = y.tail(m);
  }

  const Real resid = ray.identity_residual(c);
  if (resid > std::max(1e-9, 100 * opts.tol * std::max(1.0, diam)))
    throw NumericError("ray defining identity violated, residual " +
                       std::to_string(resid));
  return ray;
}

}  // namespace

Vector PolarRay::eval_u(Real rho) const {
  return bary_eval(rho_nodes, u_samples, rho);
}

Vector PolarRay::eval_dudrho(Real rho) const {
  return bary_eval(rho_nodes, dudrho, rho);
}

Vector PolarRay::eval_dudomega(Real rho) const {
  if (dudomega.size() == 0)
    throw ArgumentError("ray was solved without the omega variation");
  return bary_eval(rho_nodes, dudomega, rho);
}

Real PolarRay::identity_residual(const ComponentSpec& c) const {
  const Vector x0 = embed(c, u0);
  Real worst = 0;
  for (Index i = 0; i < rho_nodes.size(); ++i) {
    const Real a = (embed(c, Vector(u_samples.col(i))) - x0).norm();
    worst = std::max(worst, std::abs(a - rho_nodes[i]));
  }
  return worst;
}

PolarRay ray_solve(const ManifoldSpec& spec, int component, const Vector& u0,
                   const Vector& theta, Real rho_cap, const RayOptions& opts) {
  const ComponentSpec& c = spec.components.at(component);
  PolarRay ray = integrate_ray(c, u0, theta, Vector(), rho_cap, opts);
  ray.component = component;
  return ray;
}

Real PolarPatch::angular_measure() const {
  Real s = 0;
  for (Real w : w_omega_) s += w;
  return s;
}

PolarPatch::Row PolarPatch::row(Real rho) const {
  Row r;
  row_into(rho, r);
  return r;
}

void PolarPatch::row_into(Real rho, Row& r) const {
  if (rho > rho_max_ * (1 + 1e-12))
    throw ArgumentError("radius beyond patch validity");
  const int nw = n_omega();
  const int n = cspec_true_.ambient_dim();
  if (r.y.cols() != nw || r.y.rows() != n || r.u_chart.rows() != m_) {
    r.y.resize(n, nw);
    r.u_chart.resize(m_, nw);
    r.jpol.resize(nw);
  }
  for (int i = 0; i < nw; ++i) fill_point(rho, i, r, i);
}

void PolarPatch::fill_point(Real rho, int ray_index, Row& out, int col) const {
  const PolarRay& ray = rays_[ray_index];
  const ComponentSpec& ci = rotated_ ? cspec_work_ : cspec_true_;
  Vector& u = out.scratch_u;
  u.resize(m_);
  bary_eval_into(ray.rho_nodes, ray.u_samples, rho, u);

  Vector& x = out.scratch_x;
  Matrix& T = out.scratch_T;
  embed_frame(ci, u, x, T);

  if (rotated_) {
    out.y.col(col).noalias() = rots_[ray_index] * x;
    for (int d = 0; d < 3; ++d) out.y(d, col) += cspec_true_.center[d];
    const Real invR = 1.0 / cspec_true_.p0;
    const Real rx = (out.y(0, col) - cspec_true_.center[0]) * invR;
    const Real ry = (out.y(1, col) - cspec_true_.center[1]) * invR;
    const Real rz = (out.y(2, col) - cspec_true_.center[2]) * invR;
    out.u_chart(0, col) = std::acos(std::clamp(rz, -1.0, 1.0));
    Real phi = std::atan2(ry, rx);
    if (phi < 0) phi += 2 * kPi;
    out.u_chart(1, col) = phi;
  } else {
    out.y.col(col) = x;
    out.u_chart.col(col) = u;
  }

  Real J;
  if (m_ == 1) {
    J = T.col(0).norm();
    Real dr0 = 0;
    bary_eval_into(ray.rho_nodes, ray.dudrho, rho, &dr0);
    out.jpol[col] = J * std::abs(dr0);
  } else {
    const Real g00 = T.col(0).squaredNorm(), g11 = T.col(1).squaredNorm();
    const Real g01 = T.col(0).dot(T.col(1));
    J = std::sqrt(g00 * g11 - g01 * g01);
    Real dr[2], dw[2];
    bary_eval_into(ray.rho_nodes, ray.dudrho, rho, dr);
    bary_eval_into(ray.rho_nodes, ray.dudomega, rho, dw);
    out.jpol[col] = J * std::abs(dr[0] * dw[1] - dr[1] * dw[0]);
  }
}

Real PolarPatch::jacobian(Real rho, int ray_index) const {
  if (rho > rho_max_ * (1 + 1e-12))
    throw ArgumentError("radius beyond patch validity");
  Row r;
  r.y.resize(cspec_true_.ambient_dim(), 1);
  r.u_chart.resize(m_, 1);
  r.jpol.resize(1);
  fill_point(rho, ray_index, r, 0);
  return r.jpol[0];
}

PolarPatch build_patch(const ManifoldSpec& spec, int component,
                       const Vector& u0, int n_omega, Real rho_cap,
                       const RayOptions& opts) {
  const ComponentSpec& c = spec.components.at(component);
  const int m = c.manifold_dim();

  PolarPatch patch;
  patch.m_ = m;
  patch.component_ = component;
  patch.cspec_true_ = c;
  patch.u0_chart_ = u0;
  patch.x0_ = embed(c, u0);

  const int nw = (m == 1) ? 2 : n_omega;
  patch.w_omega_.assign(nw, (m == 1) ? 1.0 : 2 * kPi / nw);
  patch.rays_.reserve(nw);
  patch.rho_max_ = rho_cap;

  if (c.kind == ShapeKind::Sphere) {
    // Every ray runs along the equator of its own rotated chart, so no ray
    // ever approaches a chart pole regardless of the patch radius.
    patch.rotated_ = true;
    ComponentSpec canon = c;
    canon.center.setZero();
    patch.cspec_work_ = canon;
    const Real R = c.p0;

    ManifoldSpec selfspec;
    selfspec.components.push_back(c);
    const GeometryJet j0 = jet(selfspec, component == 0 ? 0 : 0, u0);
    const Matrix B = gram_schmidt_frame(j0);
    Eigen::Vector3d d;
    for (int i = 0; i < 3; ++i) d[i] = (patch.x0_[i] - c.center[i]) / R;

    Vector base_c(2);
    base_c[0] = kPi / 2;
    base_c[1] = 0.0;
    Vector theta_c(2), theta_p(2);
    theta_c << 0.0, 1.0 / R;   // along the chart equator
    theta_p << -1.0 / R, 0.0;  // d(theta)/d(omega) in this ray's chart

    for (int i = 0; i < nw; ++i) {
      const Real w = 2 * kPi * i / nw;
      const Vector coeff = std::cos(w) * B.col(0) + std::sin(w) * B.col(1);
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      for (int a = 0; a < 2; ++a)
        for (int dd = 0; dd < 3; ++dd)
          e[dd] += j0.tangents(dd, a) * coeff[a];
      e.normalize();
      Eigen::Matrix3d rot;
      rot.col(0) = d;
      rot.col(1) = e;
      rot.col(2) = d.cross(e);
      PolarRay ray =
          integrate_ray(canon, base_c, theta_c, theta_p, rho_cap, opts);
      ray.component = component;
      patch.rho_max_ = std::min(patch.rho_max_, ray.rho_max);
      patch.truncated_ = patch.truncated_ || ray.truncated;
      patch.rays_.push_back(std::move(ray));
      patch.rots_.push_back(rot);
    }
    return patch;
  }

  ManifoldSpec selfspec;
  selfspec.components.push_back(c);
  const GeometryJet j0 = jet(selfspec, 0, u0);
  const Matrix B = gram_schmidt_frame(j0);
  for (int i = 0; i < nw; ++i) {
    Vector theta, theta_p;
    if (m == 1) {
      theta = (i == 0 ? 1.0 : -1.0) * B.col(0);
      theta_p = Vector();
    } else {
      const Real w = 2 * kPi * i / nw;
      theta = std::cos(w) * B.col(0) + std::sin(w) * B.col(1);
      theta_p = -std::sin(w) * B.col(0) + std::cos(w) * B.col(1);
    }
    PolarRay ray = integrate_ray(c, u0, theta, theta_p, rho_cap, opts);
    ray.component = component;
    patch.rho_max_ = std::min(patch.rho_max_, ray.rho_max);
    patch.truncated_ = patch.truncated_ || ray.truncated;
    patch.rays_.push_back(std::move(ray));
  }
  return patch;
}

ExpansionCoefficients ray_expansion(const GeometryJet& jet_in,
                                    const Vector& theta_frame) {
  const int m = jet_in.m;
  const Matrix B = gram_schmidt_frame(jet_in);
  const Matrix Binv = B.inverse();

  Tensor3 Gam(m);
  Tensor4 dGam(m);
  Matrix L = Matrix::Zero(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          L(a, b) += jet_in.sff(j, k) * B(j, a) * B(k, b);
  for (int cc = 0; cc < m; ++cc)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int l = 0; l < m; ++l)
          for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k)
              Gam(cc, a, b) +=
                  Binv(cc, l) * jet_in.christoffel(l, j, k) * B(j, a) * B(k, b);
  for (int cc = 0; cc < m; ++cc)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int d = 0; d < m; ++d)
          for (int l = 0; l < m; ++l)
            for (int j = 0; j < m; ++j)
              for (int k = 0; k < m; ++k)
                for (int q = 0; q < m; ++q)
                  dGam(cc, a, b, d) += Binv(cc, l) *
                                       jet_in.dchristoffel(l, j, k, q) *
                                       B(j, a) * B(k, b) * B(q, d);

  const Vector& th = theta_frame;
  ExpansionCoefficients out;
  out.c1 = th;
  out.c2 = Vector::Zero(m);
  for (int l = 0; l < m; ++l)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        out.c2[l] -= 0.5 * Gam(l, a, b) * th[a] * th[b];

  const Real Ltt = th.dot(L * th);
  const Vector Lth = L * th;  // frame metric is the identity
  out.c3_printed = Vector::Zero(m);
  for (int l = 0; l < m; ++l) {
    Real brace = 0.5 * Lth[l] * Ltt;
    for (int t = 0; t < m; ++t)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (int mm = 0; mm < m; ++mm)
            brace +=
                2.0 * Gam(l, t, j) * th[j] * Gam(t, k, mm) * th[k] * th[mm];
    for (int mm = 0; mm < m; ++mm)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          brace -= dGam(l, mm, j, k) * th[mm] * th[j] * th[k];
    out.c3_printed[l] = brace / 6.0 + 0.125 * Ltt * Ltt * th[l];
  }

  const Real L2tt = th.dot(L * (L * th));
  Real stmt = 0, proof = 0;
  for (int j = 0; j < m; ++j) {
    stmt += th[j] * (0.75 * (Ltt * Ltt + Lth[j] * Ltt) - th[j] * L2tt);
    proof += th[j] * (0.75 * Ltt * Ltt + Lth[j] * Ltt - th[j] * L2tt);
  }
  out.a_statement = stmt;
  out.a_proof = proof;
  return out;
}

namespace {

Vector fit_powers(const Vector& rho, const Vector& vals, int pmin, int pmax) {
  const int cols = pmax - pmin + 1;
  Matrix A(rho.size(), cols);
  Vector b(rho.size());
  // Rows weighted by rho^-pmin so every decade constrains the low orders.
  for (Index i = 0; i < rho.size(); ++i) {
    const Real w = std::pow(rho[i], -pmin);
    for (int p = 0; p < cols; ++p) A(i, p) = w * std::pow(rho[i], pmin + p);
    b[i] = w * vals[i];
  }
  return A.colPivHouseholderQr().solve(b);
}

Real trig_interp(const std::vector<Real>& vals, Real angle) {
  const int n = static_cast<int>(vals.size());
  if (n == 1) return vals[0];
  Real acc = 0;
  for (int j = 0; j < n; ++j) {
    const Real t = angle - 2 * kPi * j / n;
    Real card;
    if (std::abs(std::sin(0.5 * t)) < 1e-14) {
      card = 1.0;
    } else {
      card = std::sin(0.5 * n * t) / (n * std::tan(0.5 * t));
    }
    acc += vals[j] * card;
  }
  return acc;
}

}  // namespace

std::vector<ExpansionComparison> compare_expansion(const ManifoldSpec& spec,
                                                   int component,
                                                   const Vector& u0,
                                                   const Vector& theta_frame,
                                                   const RayOptions& opts) {
  const ComponentSpec& c = spec.components.at(component);
  const int m = c.manifold_dim();
  const int nw = (m == 1) ? 2 : 32;

  const Real cap = 0.22 * c.diameter();
  PolarPatch patch = build_patch(spec, component, u0, nw, cap, opts);

  const GeometryJet j0 = jet(spec, component, u0);
  const Matrix B = gram_schmidt_frame(j0);
  const Matrix Binv = B.inverse();
  const ExpansionCoefficients printed = ray_expansion(j0, theta_frame);

  // Numeric Taylor fit of the ray along theta_frame, in the same chart the
  // expansion lives in (the component's own chart).
  const Real omega = (m == 1) ? (theta_frame[0] > 0 ? 0.0 : kPi)
                              : std::atan2(theta_frame[1], theta_frame[0]);
  const Vector theta_chart = B * theta_frame;
  PolarRay ray = integrate_ray(c, u0, theta_chart, Vector(), cap, opts);

  const Real scale = std::min(c.diameter(), 4.0 * c.curvature_scale());
  const Real hi = std::min(0.8 * ray.rho_max, 0.08 * scale);
  const Real lo = 1e-3 * scale;
  const int ns = 60;
  Vector rs(ns);
  for (int i = 0; i < ns; ++i)
    rs[i] = lo * std::pow(hi / lo, Real(i) / (ns - 1));

  Matrix vhat(m, ns);
  for (int i = 0; i < ns; ++i) vhat.col(i) = Binv * (ray.eval_u(rs[i]) - u0);

  std::vector<ExpansionComparison> table;
  for (int l = 0; l < m; ++l) {
    const Vector coef = fit_powers(rs, vhat.row(l).transpose(), 1, 7);
    table.push_back({"u_order1", l, printed.c1[l], coef[0],
                     std::abs(printed.c1[l] - coef[0]), true});
    table.push_back({"u_order2", l, printed.c2[l], coef[1],
                     std::abs(printed.c2[l] - coef[1]), true});
    table.push_back({"u_order3", l, printed.c3_printed[l], coef[2],
                     std::abs(printed.c3_printed[l] - coef[2]), false});
  }

  // Numeric a(Theta): rho^2 coefficient of J_pol / rho^(n-2) - 1 along the
  // requested direction (trig interpolation across the patch rays).
  {
    Vector g(ns);
    for (int i = 0; i < ns; ++i) {
      const auto row = patch.row(rs[i]);
      std::vector<Real> jp(row.jpol.size());
      const Real denom = (m == 1) ? 1.0 : rs[i];
      for (Index k = 0; k < row.jpol.size(); ++k)
        jp[k] = row.jpol[k] / denom - 1.0;
      g[i] = (m == 1) ? (theta_frame[0] > 0 ? jp[0] : jp[1])
                      : trig_interp(jp, omega);
    }
    const Vector coef = fit_powers(rs, g, 2, 5);
    table.push_back({"a_theta_statement", -1, printed.a_statement, coef[0],
                     std::abs(printed.a_statement - coef[0]), false});
    table.push_back({"a_theta_proof", -1, printed.a_proof, coef[0],
                     std::abs(printed.a_proof - coef[0]), false});
  }
  return table;
}

PolarRule polar_quadrature(const PolarPatch& patch, Real rho_cut,
                           int points_per_panel, int n_panels) {
  if (rho_cut > patch.rho_max() * (1 + 1e-12))
    throw ArgumentError("rho_cut beyond patch validity");
  const int nw = patch.n_omega();
  const int n = static_cast<int>(patch.base_point().size());
  const int m = patch.manifold_dim();
  const QuadRule base = gauss_legendre(points_per_panel);

  const int q_total = n_panels * points_per_panel * nw;
  PolarRule rule;
  rule.y.resize(n, q_total);
  rule.u_chart.resize(m, q_total);
  rule.rho.resize(q_total);
  rule.weight.resize(q_total);

  int q = 0;
  for (int p = 0; p < n_panels; ++p) {
    const Real lo = rho_cut * p / n_panels, hi = rho_cut * (p + 1) / n_panels;
    const QuadRule panel = map_to_interval(base, lo, hi);
    for (int i = 0; i < points_per_panel; ++i) {
      const auto row = patch.row(panel.x[i]);
      for (int d = 0; d < nw; ++d, ++q) {
        rule.y.col(q) = row.y.col(d);
        rule.u_chart.col(q) = row.u_chart.col(d);
        rule.rho[q] = panel.x[i];
        rule.weight[q] = panel.w[i] * patch.omega_weights()[d] * row.jpol[d];
      }
    }
  }
  return rule;
}

}  // namespace rieszlab
