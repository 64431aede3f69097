#pragma once

#include "gyrocurve/core.hpp"

#include <memory>
#include <sstream>

namespace gyro {

/// A single-chart manifold carrying a metric g and an affine connection Γ.
///
/// Derived classes supply the metric; partial derivatives and the connection
/// fall back to fourth-order central differences and the Levi-Civita
/// construction when not overridden. Instances are immutable.
class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  virtual bool in_domain(const Vec& x) const { return x.size() == dim(); }

  virtual Mat metric(const Vec& x) const = 0;

  /// Element k holds ∂g_ij/∂x^k.
  virtual std::vector<Mat> metric_partials(const Vec& x) const {
    std::vector<Mat> out;
    for (int k = 0; k < dim(); ++k)
      out.push_back(central_diff([this](const Vec& y) { return metric(y); }, x, k, fd_step_));
    return out;
  }

  /// Γ^i_jk; the Levi-Civita connection unless overridden.
  virtual Tensor3 connection(const Vec& x) const { return levi_civita(x); }

  /// Element l holds ∂Γ^i_jk/∂x^l.
  virtual std::vector<Tensor3> connection_partials(const Vec& x) const {
    std::vector<Tensor3> out;
    for (int k = 0; k < dim(); ++k)
      out.push_back(central_diff_t3([this](const Vec& y) { return connection(y); }, x, k, fd_step_));
    return out;
  }

  /// True when the connection is built to satisfy ∇g = 0.
  virtual bool metric_compatible() const { return true; }

  /// Γ^i_jk = ½ g^im (g_mj,k + g_mk,j − g_jk,m).
  Tensor3 levi_civita(const Vec& x) const {
    const int n = dim();
    Mat g = metric(x);
    Eigen::FullPivLU<Mat> lu(g);
    if (!lu.isInvertible()) throw SingularMetricError("metric is singular at the requested point");
    Mat gi = lu.inverse();
    std::vector<Mat> dg = metric_partials(x);
    Tensor3 G(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          double s = 0.0;
          for (int m = 0; m < n; ++m) s += gi(i, m) * (dg[k](m, j) + dg[j](m, k) - dg[m](j, k));
          G(i, j, k) = 0.5 * s;
        }
    return G;
  }

  double fd_step() const { return fd_step_; }
  void set_fd_step(double h) { fd_step_ = h; }

  void require_domain(const Vec& x) const {
    if (!in_domain(x)) {
      std::ostringstream os;
      os << "point (" << x.transpose() << ") outside the chart of " << name();
      throw DomainError(os.str());
    }
  }

 protected:
  double fd_step_ = 1e-5;
};

using ManifoldPtr = std::shared_ptr<const Manifold>;

/// Euclidean space in Cartesian coordinates.
class FlatSpace : public Manifold {
 public:
  explicit FlatSpace(int n) : n_(n) {}
  int dim() const override { return n_; }
  std::string name() const override { return n_ == 2 ? "flat2d" : "flatN"; }
  Mat metric(const Vec&) const override { return Mat::Identity(n_, n_); }
  std::vector<Mat> metric_partials(const Vec&) const override {
    return std::vector<Mat>(n_, Mat::Zero(n_, n_));
  }
  Tensor3 connection(const Vec&) const override { return Tensor3(n_); }
  std::vector<Tensor3> connection_partials(const Vec&) const override {
    return std::vector<Tensor3>(n_, Tensor3(n_));
  }

 private:
  int n_;
};

/// Constant-curvature surface in geodesic polar coordinates (r, φ):
/// ds² = dr² + R² s(r/R)² dφ², s = sin (sphere) or sinh (pseudosphere).
class PolarSurface : public Manifold {
 public:
  PolarSurface(double radius, bool hyperbolic) : R_(radius), hyp_(hyperbolic) {
    if (!(radius > 0)) throw DomainError("radius must be positive");
  }
  int dim() const override { return 2; }
  std::string name() const override { return hyp_ ? "pseudosphere" : "sphere"; }
  double radius() const { return R_; }
  bool hyperbolic() const { return hyp_; }

  /// Sectional curvature ±1/R².
  double gauss_curvature() const { return (hyp_ ? -1.0 : 1.0) / (R_ * R_); }

  bool in_domain(const Vec& x) const override {
    if (x.size() != 2 || !std::isfinite(x(0)) || !std::isfinite(x(1))) return false;
    const double eps = 1e-8 * R_;
    if (hyp_) return x(0) >= eps;
    return x(0) >= eps && x(0) <= std::numbers::pi * R_ - eps;
  }

  double s(double r) const { return hyp_ ? std::sinh(r / R_) : std::sin(r / R_); }
  double c(double r) const { return hyp_ ? std::cosh(r / R_) : std::cos(r / R_); }

  Mat metric(const Vec& x) const override {
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = R_ * R_ * s(x(0)) * s(x(0));
    return g;
  }
  std::vector<Mat> metric_partials(const Vec& x) const override {
    std::vector<Mat> d(2, Mat::Zero(2, 2));
    d[0](1, 1) = 2.0 * R_ * s(x(0)) * c(x(0));
    return d;
  }
  Tensor3 connection(const Vec& x) const override {
    const double sv = s(x(0)), cv = c(x(0));
    Tensor3 G(2);
    G(0, 1, 1) = -R_ * sv * cv;
    G(1, 0, 1) = cv / (R_ * sv);
    G(1, 1, 0) = cv / (R_ * sv);
    return G;
  }
  std::vector<Tensor3> connection_partials(const Vec& x) const override {
    const double sv = s(x(0)), cv = c(x(0));
    std::vector<Tensor3> d(2, Tensor3(2));
    // d/dr (−R s c) = −(c² ∓ s²); d/dr (c/(R s)) = −1/(R² s²) in both cases.
    d[0](0, 1, 1) = hyp_ ? -(cv * cv + sv * sv) : -(cv * cv - sv * sv);
    d[0](1, 0, 1) = -1.0 / (R_ * R_ * sv * sv);
    d[0](1, 1, 0) = d[0](1, 0, 1);
    return d;
  }

 private:
  double R_;
  bool hyp_;
};

class Sphere2 : public PolarSurface {
 public:
  explicit Sphere2(double radius) : PolarSurface(radius, false) {}
};

class Pseudosphere2 : public PolarSurface {
 public:
  explicit Pseudosphere2(double radius) : PolarSurface(radius, true) {}
};

/// User-supplied chart: metric function plus optional domain predicate.
/// All derivatives by finite differences.
class ChartManifold : public Manifold {
 public:
  using MetricFn = std::function<Mat(const Vec&)>;
  using DomainFn = std::function<bool(const Vec&)>;

  ChartManifold(int n, MetricFn g, DomainFn domain = nullptr, std::string name = "chart", double h = 1e-5)
      : n_(n), g_(std::move(g)), domain_(std::move(domain)), name_(std::move(name)) {
    fd_step_ = h;
  }
  int dim() const override { return n_; }
  std::string name() const override { return name_; }
  bool in_domain(const Vec& x) const override {
    return x.size() == n_ && (!domain_ || domain_(x));
  }
  Mat metric(const Vec& x) const override { return g_(x); }

 private:
  int n_;
  MetricFn g_;
  DomainFn domain_;
  std::string name_;
};

/// Index lowering/raising helpers for torsion-like tensors.
/// Returns S_bc^a := g_bk S^k_cl g^la.
inline Tensor3 contorsion_from_torsion(const Tensor3& S, const Mat& g) {
  const int n = S.dim();
  Mat gi = g.inverse();
  // S_abc = g_ad S^d_bc
  Tensor3 low(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += g(a, d) * S(d, b, c);
        low(a, b, c) = s;
      }
  // K^a_bc = S^a_bc + S_bc^a + S_cb^a, i.e. K_abc = S_abc + S_bca + S_cba.
  Tensor3 K(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += gi(a, d) * (low(d, b, c) + low(b, c, d) + low(c, b, d));
        K(a, b, c) = s;
      }
  return K;
}

/// Metric-compatible connection with torsion: Γ = {Levi-Civita} + K[S].
class RiemannCartan : public Manifold {
 public:
  using TorsionFn = std::function<Tensor3(const Vec&)>;

  /// The torsion function must return a tensor antisymmetric in its last two indices.
  RiemannCartan(ManifoldPtr base, TorsionFn torsion) : base_(std::move(base)), S_(std::move(torsion)) {}

  int dim() const override { return base_->dim(); }
  std::string name() const override { return base_->name() + "+torsion"; }
  bool in_domain(const Vec& x) const override { return base_->in_domain(x); }
  Mat metric(const Vec& x) const override { return base_->metric(x); }
  std::vector<Mat> metric_partials(const Vec& x) const override { return base_->metric_partials(x); }
  Tensor3 connection(const Vec& x) const override {
    return base_->connection(x) + contorsion_from_torsion(S_(x), base_->metric(x));
  }
  Tensor3 torsion(const Vec& x) const { return S_(x); }
  const Manifold& base() const { return *base_; }

 private:
  ManifoldPtr base_;
  TorsionFn S_;
};

/// Metric and connection given independently (no compatibility assumed).
class GeneralConnection : public Manifold {
 public:
  using ConnectionFn = std::function<Tensor3(const Vec&)>;
  GeneralConnection(ManifoldPtr metric_source, ConnectionFn gamma)
      : base_(std::move(metric_source)), G_(std::move(gamma)) {}

  int dim() const override { return base_->dim(); }
  std::string name() const override { return base_->name() + "+general-connection"; }
  bool in_domain(const Vec& x) const override { return base_->in_domain(x); }
  Mat metric(const Vec& x) const override { return base_->metric(x); }
  std::vector<Mat> metric_partials(const Vec& x) const override { return base_->metric_partials(x); }
  Tensor3 connection(const Vec& x) const override { return G_(x); }
  bool metric_compatible() const override { return false; }

 private:
  ManifoldPtr base_;
  ConnectionFn G_;
};

// ---------------------------------------------------------------------------
// Pointwise evaluators.

inline Mat metric_at(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return M.metric(x);
}

inline Mat inverse_metric_at(const Manifold& M, const Vec& x) {
  Mat g = metric_at(M, x);
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success) throw SingularMetricError("metric is not positive definite");
  return llt.solve(Mat::Identity(g.rows(), g.cols()));
}

inline Tensor3 levi_civita_at(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return M.levi_civita(x);
}

inline Tensor3 connection_at(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return M.connection(x);
}

/// R^l_kij = Γ^l_kj,i − Γ^l_ki,j + Γ^l_ai Γ^a_kj − Γ^l_aj Γ^a_ki.
inline Tensor4 curvature_from(const Tensor3& G, const std::vector<Tensor3>& dG) {
  const int n = G.dim();
  Tensor4 R(n);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          double s = dG[i](l, k, j) - dG[j](l, k, i);
          for (int a = 0; a < n; ++a) s += G(l, a, i) * G(a, k, j) - G(l, a, j) * G(a, k, i);
          R(l, k, i, j) = s;
        }
  return R;
}

inline Tensor4 curvature_at(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return curvature_from(M.connection(x), M.connection_partials(x));
}

/// S^i_jk = ½(Γ^i_jk − Γ^i_kj).
inline Tensor3 torsion_from(const Tensor3& G) {
  const int n = G.dim();
  Tensor3 S(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) S(i, j, k) = 0.5 * (G(i, j, k) - G(i, k, j));
  return S;
}

inline Tensor3 torsion_at(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return torsion_from(M.connection(x));
}

/// ∇_k g_ij = ∂_k g_ij − Γ^a_ik g_aj − Γ^a_jk g_ia, stored as (k, i, j).
inline Tensor3 metricity_residual(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  const int n = M.dim();
  Mat g = M.metric(x);
  auto dg = M.metric_partials(x);
  Tensor3 G = M.connection(x);
  Tensor3 Q(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = dg[k](i, j);
        for (int a = 0; a < n; ++a) s -= G(a, i, k) * g(a, j) + G(a, j, k) * g(i, a);
        Q(k, i, j) = s;
      }
  return Q;
}

/// Difference tensor Γ − {Levi-Civita}.
inline Tensor3 difference_tensor_at(const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return M.connection(x) - M.levi_civita(x);
}

/// Contorsion built from the torsion of the model's connection and its metric.
inline Tensor3 contorsion_at(const Manifold& M, const Vec& x, double tol = 1e-8) {
  M.require_domain(x);
  Tensor3 Q = metricity_residual(M, x);
  if (Q.max_abs() > tol) throw MetricityError("connection is not metric-compatible; contorsion undefined");
  return contorsion_from_torsion(torsion_from(M.connection(x)), M.metric(x));
}

/// Dw^i/Dt = dw^i/dt + Γ^i_jk w^j dx^k/dt.
inline Vec covariant_derivative_along(const Manifold& M, const Vec& x, const Vec& xdot, const Vec& w,
                                      const Vec& wdot) {
  M.require_domain(x);
  Tensor3 G = M.connection(x);
  const int n = M.dim();
  Vec out = wdot;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) out(i) += G(i, j, k) * w(j) * xdot(k);
  return out;
}

/// Γ^i_jk a^j b^k.
inline Vec contract_connection(const Tensor3& G, const Vec& a, const Vec& b) {
  const int n = G.dim();
  Vec out = Vec::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) out(i) += G(i, j, k) * a(j) * b(k);
  return out;
}

/// Matrix Γ(v)^i_j = Γ^i_jk v^k.
inline Mat connection_matrix(const Tensor3& G, const Vec& v) {
  const int n = G.dim();
  Mat out = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) out(i, j) += G(i, j, k) * v(k);
  return out;
}

/// Sectional curvature g(R(u,v)v,u) / (|u|²|v|² − g(u,v)²).
inline double sectional_curvature(const Tensor4& R, const Mat& g, const Vec& u, const Vec& v) {
  const int n = R.dim();
  double num = 0.0;
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          // [R(u,v)v]^l = R^l_kij v^k u^i v^j
          double rv = R(l, k, i, j) * v(k) * u(i) * v(j);
          for (int m = 0; m < n; ++m) num += g(m, l) * u(m) * rv;
        }
  double uu = u.dot(g * u), vv = v.dot(g * v), uv = u.dot(g * v);
  return num / (uu * vv - uv * uv);
}

}  // namespace gyro
