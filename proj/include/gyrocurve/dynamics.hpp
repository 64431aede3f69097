#pragma once

#include "gyrocurve/kinematics.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

namespace gyro {

// ---------------------------------------------------------------------------
// Kinetic energies.

/// T = (m/2) g_ij v^i v^j + ½ g_ij V^i_A V^j_B J^AB.
inline double kinetic_energy(const BodyState& s, const Inertia& I, const Manifold& M) {
  const auto& f = s.velocity();
  Mat g = metric_at(M, s.x);
  Mat V = internal_velocity(s, M);
  return 0.5 * I.m * f.v.dot(g * f.v) + 0.5 * (V.transpose() * g * V * I.J).trace();
}

/// Translational and internal parts separately.
inline std::pair<double, double> kinetic_energy_parts(const BodyState& s, const Inertia& I, const Manifold& M) {
  const auto& f = s.velocity();
  Mat g = metric_at(M, s.x);
  Mat V = internal_velocity(s, M);
  return {0.5 * I.m * f.v.dot(g * f.v), 0.5 * (V.transpose() * g * V * I.J).trace()};
}

/// Co-moving form: (m/2) G_AB v̂^A v̂^B + ½ G_KL Ω̂^K_A Ω̂^L_B J^AB.
inline double kinetic_energy_comoving(const BodyState& s, const Inertia& I, const Manifold& M) {
  KinematicSnapshot k = kinematic_snapshot(s, M);
  const Mat& G = k.def.Green;
  return 0.5 * I.m * k.vhat.dot(G * k.vhat) + 0.5 * (k.OmegaHat.transpose() * G * k.OmegaHat * I.J).trace();
}

/// Spatial form with J[φ] = e J eᵀ: (m/2) g v v + ½ g_kl Ω^k_i Ω^l_j J[φ]^ij.
inline double kinetic_energy_spatial(const BodyState& s, const Inertia& I, const Manifold& M) {
  KinematicSnapshot k = kinematic_snapshot(s, M);
  Mat g = metric_at(M, s.x);
  Mat Jphi = s.e * I.J * s.e.transpose();
  const Vec& v = s.velocity().v;
  return 0.5 * I.m * v.dot(g * v) + 0.5 * (k.Omega.transpose() * g * k.Omega * Jphi).trace();
}

/// 𝔗 = (1/2m) g^ij P_i P_j + ½ J̃_AB P^A_i P^B_j g^ij (covariant translational momentum).
inline double kinetic_hamiltonian(const BodyState& s, const Inertia& I, const Manifold& M) {
  I.validate();
  const auto& f = s.momentum();
  Mat gi = inverse_metric_at(M, s.x);
  Vec Pc = covariant_momentum(f.p, s.e, f.P, M.connection(s.x));
  return 0.5 / I.m * Pc.dot(gi * Pc) + 0.5 * (I.Jinv() * f.P * gi * f.P.transpose()).trace();
}

/// Same value from the co-moving generators: (1/2m) G̃ P̂ P̂ + ½ Tr(J̃ Σ̂ G̃ Σ̂ᵀ).
inline double kinetic_hamiltonian_comoving(const BodyState& s, const Inertia& I, const Manifold& M) {
  I.validate();
  MomentumSnapshot ms = momentum_snapshot(s, M);
  Mat Gi = deformation(s, M).GreenInv;
  return 0.5 / I.m * ms.Phat.dot(Gi * ms.Phat) +
         0.5 * (I.Jinv() * ms.SigmaHat * Gi * ms.SigmaHat.transpose()).trace();
}

// ---------------------------------------------------------------------------
// Potentials.

/// 𝔘(x, e) with partials ∂U/∂x^k and ∂U/∂e^k_A (stored as (k, A)).
class Potential {
 public:
  virtual ~Potential() = default;
  virtual double value(const Manifold& M, const Vec& x, const Mat& e) const = 0;
  virtual Vec grad_x(const Manifold& M, const Vec& x, const Mat& e) const {
    Vec out(x.size());
    for (int k = 0; k < x.size(); ++k)
      out(k) = central_diff([&](const Vec& y) -> Vec { return Vec::Constant(1, value(M, y, e)); }, x, k, h_)(0);
    return out;
  }
  virtual Mat grad_e(const Manifold& M, const Vec& x, const Mat& e) const {
    const int n = static_cast<int>(e.rows());
    Mat out(n, n);
    for (int k = 0; k < n; ++k)
      for (int A = 0; A < n; ++A) {
        auto f = [&](double t) {
          Mat e2 = e;
          e2(k, A) += t;
          return value(M, x, e2);
        };
        out(k, A) = (-f(2 * h_) + 8 * f(h_) - 8 * f(-h_) + f(-2 * h_)) / (12 * h_);
      }
    return out;
  }
  void set_fd_step(double h) { h_ = h; }

 protected:
  double h_ = 1e-5;
};

using PotentialPtr = std::shared_ptr<const Potential>;

class ZeroPotential : public Potential {
 public:
  double value(const Manifold&, const Vec&, const Mat&) const override { return 0.0; }
  Vec grad_x(const Manifold&, const Vec& x, const Mat&) const override { return Vec::Zero(x.size()); }
  Mat grad_e(const Manifold&, const Vec&, const Mat& e) const override { return Mat::Zero(e.rows(), e.cols()); }
};

/// Arbitrary U(x, e); partials by finite differences.
class FunctionPotential : public Potential {
 public:
  using Fn = std::function<double(const Vec&, const Mat&)>;
  explicit FunctionPotential(Fn f) : f_(std::move(f)) {}
  double value(const Manifold&, const Vec& x, const Mat& e) const override { return f_(x, e); }

 private:
  Fn f_;
};

/// Sum of potentials.
class SumPotential : public Potential {
 public:
  explicit SumPotential(std::vector<PotentialPtr> parts) : parts_(std::move(parts)) {}
  double value(const Manifold& M, const Vec& x, const Mat& e) const override {
    double s = 0.0;
    for (const auto& p : parts_) s += p->value(M, x, e);
    return s;
  }
  Vec grad_x(const Manifold& M, const Vec& x, const Mat& e) const override {
    Vec s = Vec::Zero(x.size());
    for (const auto& p : parts_) s += p->grad_x(M, x, e);
    return s;
  }
  Mat grad_e(const Manifold& M, const Vec& x, const Mat& e) const override {
    Mat s = Mat::Zero(e.rows(), e.cols());
    for (const auto& p : parts_) s += p->grad_e(M, x, e);
    return s;
  }

 private:
  std::vector<PotentialPtr> parts_;
};

/// V = f · det[g^ij] with constant f; depends on position only.
class RadialDetPotential : public Potential {
 public:
  explicit RadialDetPotential(double f) : f_(f) {}
  double value(const Manifold& M, const Vec& x, const Mat&) const override { return f_ / M.metric(x).determinant(); }
  Vec grad_x(const Manifold& M, const Vec& x, const Mat&) const override {
    Mat g = M.metric(x);
    Mat gi = g.inverse();
    double dg = g.determinant();
    auto d = M.metric_partials(x);
    Vec out(x.size());
    for (int k = 0; k < x.size(); ++k) out(k) = -f_ / dg * (gi * d[k]).trace();
    return out;
  }
  Mat grad_e(const Manifold&, const Vec&, const Mat& e) const override { return Mat::Zero(e.rows(), e.cols()); }

 private:
  double f_;
};

using ADScalar = Eigen::AutoDiffScalar<Eigen::VectorXd>;

/// U = f(x, I1, I2) with I1 = tr G, I2 = det G of the Green tensor (η = δ).
/// The shape function is differentiated by forward-mode automatic differentiation;
/// the chain rule through G is analytic.
class InvariantPotential : public Potential {
 public:
  /// args = (x^1..x^n, I1, I2)
  using Shape = std::function<ADScalar(const std::vector<ADScalar>& args)>;
  explicit InvariantPotential(Shape f) : f_(std::move(f)) {}

  double value(const Manifold& M, const Vec& x, const Mat& e) const override { return eval(M, x, e).value(); }

  Vec grad_x(const Manifold& M, const Vec& x, const Mat& e) const override {
    const int n = static_cast<int>(x.size());
    ADScalar u = eval(M, x, e);
    Mat g = M.metric(x);
    Mat G = e.transpose() * g * e;
    Mat Gi = G.inverse();
    double I2 = G.determinant();
    auto dg = M.metric_partials(x);
    Vec out(n);
    for (int k = 0; k < n; ++k) {
      Mat dG = e.transpose() * dg[k] * e;
      out(k) = u.derivatives()(k) + u.derivatives()(n) * dG.trace() + u.derivatives()(n + 1) * I2 * (Gi * dG).trace();
    }
    return out;
  }

  Mat grad_e(const Manifold& M, const Vec& x, const Mat& e) const override {
    const int n = static_cast<int>(x.size());
    ADScalar u = eval(M, x, e);
    Mat g = M.metric(x);
    Mat G = e.transpose() * g * e;
    double I2 = G.determinant();
    // ∂I1/∂e = 2 g e, ∂I2/∂e = 2 I2 g e G⁻¹
    return u.derivatives()(n) * 2.0 * g * e + u.derivatives()(n + 1) * 2.0 * I2 * g * e * G.inverse();
  }

 private:
  ADScalar eval(const Manifold& M, const Vec& x, const Mat& e) const {
    const int n = static_cast<int>(x.size());
    Mat G = e.transpose() * M.metric(x) * e;
    std::vector<ADScalar> args;
    for (int k = 0; k < n; ++k) args.emplace_back(x(k), n + 2, k);
    args.emplace_back(G.trace(), n + 2, n);
    args.emplace_back(G.determinant(), n + 2, n + 1);
    return f_(args);
  }
  Shape f_;
};

/// Position-only potential tabulated on a uniform grid in one chart coordinate,
/// interpolated by a cubic B-spline.
class TabulatedPotential : public Potential {
 public:
  TabulatedPotential(int coordinate, double start, double step, std::vector<double> values)
      : coord_(coordinate),
        start_(start),
        end_(start + step * (static_cast<double>(values.size()) - 1)),
        spline_(values.begin(), values.end(), start, step) {}
  double value(const Manifold&, const Vec& x, const Mat&) const override { return spline_(clamp(x(coord_))); }
  Vec grad_x(const Manifold&, const Vec& x, const Mat&) const override {
    Vec out = Vec::Zero(x.size());
    out(coord_) = spline_.prime(clamp(x(coord_)));
    return out;
  }
  Mat grad_e(const Manifold&, const Vec&, const Mat& e) const override { return Mat::Zero(e.rows(), e.cols()); }

 private:
  double clamp(double t) const {
    if (t < start_ || t > end_) throw DomainError("coordinate outside the tabulated potential range");
    return t;
  }
  int coord_;
  double start_, end_;
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline_;
};

// Deformation-plane variables of a 2D body from Green invariants (physical wedge y > |x|):
// x² = (I1 − 2√I2)/2, y² = (I1 + 2√I2)/2.
inline ADScalar deformation_x2(const ADScalar& I1, const ADScalar& I2) {
  using std::sqrt;
  return (I1 - 2.0 * sqrt(I2)) / 2.0;
}
inline ADScalar deformation_y2(const ADScalar& I1, const ADScalar& I2) {
  using std::sqrt;
  return (I1 + 2.0 * sqrt(I2)) / 2.0;
}

/// V(x, y) = A/x² + B/y² + C(x² + y²) + κ x² y² (κ couples x and y; κ = 0 is separable).
inline PotentialPtr deformation_xy_potential(double A, double B, double C, double coupling = 0.0) {
  return std::make_shared<InvariantPotential>([=](const std::vector<ADScalar>& a) {
    const ADScalar& I1 = a[a.size() - 2];
    const ADScalar& I2 = a[a.size() - 1];
    ADScalar x2 = deformation_x2(I1, I2), y2 = deformation_y2(I1, I2);
    ADScalar u = C * I1 + coupling * x2 * y2;
    if (A != 0.0) u += A / x2;
    if (B != 0.0) u += B / y2;
    return u;
  });
}

/// V = γ̃/ς + γ̂ cot²(2ε)/ς² with x = ς sin ε, y = ς cos ε.
inline PotentialPtr deformation_polar_potential(double gamma_tilde, double gamma_hat, double coupling = 0.0) {
  return std::make_shared<InvariantPotential>([=](const std::vector<ADScalar>& a) {
    using std::sqrt;
    const ADScalar& I1 = a[a.size() - 2];
    const ADScalar& I2 = a[a.size() - 1];
    // ς² = I1, cot²(2ε) = 4 I2 / (I1² − 4 I2)
    ADScalar u = gamma_tilde / sqrt(I1) + gamma_hat * 4.0 * I2 / ((I1 * I1 - 4.0 * I2) * I1);
    if (coupling != 0.0) u += coupling * (I1 * I1 - 4.0 * I2) / 4.0;
    return u;
  });
}

// ---------------------------------------------------------------------------
// Forces.

/// Translational force and hyperforce at a state.
struct ForceSnapshot {
  Vec F_cov;  // F_k
  Mat Q;      // generalized internal force Q(k, A), = −∂U/∂e^k_A for potentials
  Mat N;      // hyperforce N^i_j = e^i_A Q(j, A)

  static ForceSnapshot zero(int n) { return {Vec::Zero(n), Mat::Zero(n, n), Mat::Zero(n, n)}; }
  ForceSnapshot& operator+=(const ForceSnapshot& o) {
    F_cov += o.F_cov;
    Q += o.Q;
    N += o.N;
    return *this;
  }
  Vec F_vec(const Mat& g) const { return g.ldlt().solve(F_cov); }
  /// N^ij = N^i_k g^kj.
  Mat N_upper(const Mat& g) const { return N * g.inverse(); }
  /// 𝔑^ij = N^ij − N^ji.
  Mat torque(const Mat& g) const {
    Mat Nu = N_upper(g);
    return Nu - Nu.transpose();
  }
};

/// Force from hyperforce-style internal load: N = e Qᵀ.
inline ForceSnapshot make_forces(const Vec& F_cov, const Mat& Q, const Mat& e) { return {F_cov, Q, e * Q.transpose()}; }

/// F_k = −∂U/∂x^k + Γ^a_bk e^b_B ∂U/∂e^a_B; N^i_k = −e^i_A ∂U/∂e^k_A.
inline ForceSnapshot forces_from_potential(const Potential& U, const Manifold& M, const Vec& x, const Mat& e) {
  M.require_domain(x);
  Vec dx = U.grad_x(M, x, e);
  Mat de = U.grad_e(M, x, e);
  Tensor3 G = M.connection(x);
  const int n = static_cast<int>(x.size());
  Vec F = -dx;
  for (int k = 0; k < n; ++k)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int B = 0; B < n; ++B) F(k) += G(a, b, k) * e(b, B) * de(a, B);
  return make_forces(F, -de, e);
}

inline ForceSnapshot forces_from_potential(const Potential& U, const BodyState& s, const Manifold& M) {
  return forces_from_potential(U, M, s.x, s.e);
}

/// Linear viscous damping: F_k = −c_t g_kj v^j, Q = −c_i g V.
inline ForceSnapshot viscous_forces(const BodyState& s, double c_translational, double c_internal, const Manifold& M) {
  const auto& f = s.velocity();
  Mat g = metric_at(M, s.x);
  Mat V = internal_velocity(s, M);
  return make_forces(-c_translational * g * f.v, -c_internal * g * V, s.e);
}

// ---------------------------------------------------------------------------
// Poisson brackets.

/// Phase-space observable: one component of x^i, e^i_A, P_i, P^A_i, Σ^i_j, Σ̂^A_B or P̂_A.
struct Observable {
  enum Kind { X = 0, E, P, PInt, Sigma, SigmaHat, PHat };
  Kind kind;
  int a = 0, b = 0;

  static int arity(Kind k) { return (k == X || k == P || k == PHat) ? 1 : 2; }
  std::string str() const {
    static const char* names[] = {"x", "e", "P", "P_int", "Sigma", "SigmaHat", "P_hat"};
    std::string s = std::string(names[kind]) + "[" + std::to_string(a);
    if (arity(kind) == 2) s += "," + std::to_string(b);
    return s + "]";
  }
};

/// Layout of canonical phase-space coordinates (x^i, e^i_A ; p_i, p^A_i).
struct PhaseGradient {
  Vec dq;  // ∂/∂x^i (n) then ∂/∂e^i_A at n + i*n + A
  Vec dp;  // ∂/∂p_i (n) then ∂/∂p^A_i at n + A*n + i
};

/// Gradient of an observable in canonical coordinates, by the chain rule.
inline PhaseGradient observable_gradient(const Observable& o, const BodyState& s, const Manifold& M) {
  const int n = s.dim();
  const auto& f = s.momentum();
  PhaseGradient g{Vec::Zero(n + n * n), Vec::Zero(n + n * n)};
  auto eq = [n](int i, int A) { return n + i * n + A; };
  auto Pp = [n](int A, int i) { return n + A * n + i; };
  Tensor3 G = M.connection(s.x);
  auto Pcov_grad = [&](int i, PhaseGradient& out, double w) {
    auto dG = M.connection_partials(s.x);
    out.dp(i) += w;
    for (int m = 0; m < n; ++m) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        for (int A = 0; A < n; ++A)
          for (int k = 0; k < n; ++k) acc += s.e(j, A) * f.P(A, k) * dG[m](k, j, i);
      out.dq(m) -= w * acc;
    }
    for (int j = 0; j < n; ++j)
      for (int A = 0; A < n; ++A) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += f.P(A, k) * G(k, j, i);
        out.dq(eq(j, A)) -= w * acc;
      }
    for (int A = 0; A < n; ++A)
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += s.e(j, A) * G(k, j, i);
        out.dp(Pp(A, k)) -= w * acc;
      }
  };
  switch (o.kind) {
    case Observable::X:
      g.dq(o.a) = 1.0;
      break;
    case Observable::E:
      g.dq(eq(o.a, o.b)) = 1.0;
      break;
    case Observable::PInt:
      g.dp(Pp(o.a, o.b)) = 1.0;
      break;
    case Observable::P:
      Pcov_grad(o.a, g, 1.0);
      break;
    case Observable::Sigma:  // Σ^i_j = e^i_A P^A_j
      for (int A = 0; A < n; ++A) {
        g.dq(eq(o.a, A)) += f.P(A, o.b);
        g.dp(Pp(A, o.b)) += s.e(o.a, A);
      }
      break;
    case Observable::SigmaHat:  // Σ̂^A_B = P^A_i e^i_B
      for (int i = 0; i < n; ++i) {
        g.dq(eq(i, o.b)) += f.P(o.a, i);
        g.dp(Pp(o.a, i)) += s.e(i, o.b);
      }
      break;
    case Observable::PHat: {  // P̂_A = P_i e^i_A
      Vec Pc = covariant_momentum(f.p, s.e, f.P, G);
      for (int i = 0; i < n; ++i) {
        Pcov_grad(i, g, s.e(i, o.a));
        g.dq(eq(i, o.a)) += Pc(i);
      }
      break;
    }
  }
  return g;
}

/// {f, g} = Σ ∂f/∂q ∂g/∂p − ∂f/∂p ∂g/∂q with {x^i, p_j} = δ^i_j, {e^i_A, p^B_j} = δ^i_j δ^B_A.
inline double canonical_bracket(const PhaseGradient& f, const PhaseGradient& g) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(f.dq.size()) + 0.25) - 0.5));
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += f.dq(i) * g.dp(i) - f.dp(i) * g.dq(i);
  // e^i_A at n + i*n + A pairs with p^A_i at n + A*n + i
  for (int i = 0; i < n; ++i)
    for (int A = 0; A < n; ++A) {
      int qe = n + i * n + A, pe = n + A * n + i;
      s += f.dq(qe) * g.dp(pe) - f.dp(pe) * g.dq(qe);
    }
  return s;
}

inline double canonical_bracket(const Observable& f, const Observable& g, const BodyState& s, const Manifold& M) {
  return canonical_bracket(observable_gradient(f, s, M), observable_gradient(g, s, M));
}

struct BracketOptions {
  /// Multiplies every curvature term; −1 is a deliberately wrong sign for negative controls.
  double curvature_sign = 1.0;
};

/// Bracket values from the closed-form algebra of P_i, Σ, Σ̂, P̂ with curvature and torsion corrections.
class BracketTable {
 public:
  BracketTable(const BodyState& s, const Manifold& M, BracketOptions opt = {})
      : n_(s.dim()), e_(s.e), opt_(opt) {
    M.require_domain(s.x);
    const auto& f = s.momentum();
    P_ = f.P;
    G_ = M.connection(s.x);
    R_ = curvature_at(M, s.x);
    S_ = torsion_from(G_);
    MomentumSnapshot ms = momentum_snapshot(s, M);
    Pc_ = ms.P_cov;
    Sig_ = ms.Sigma;
    SigH_ = ms.SigmaHat;
    Ph_ = ms.Phat;
    ei_ = invert_frame(e_);
  }

  double operator()(const Observable& f, const Observable& g) const {
    if (f.kind > g.kind) return -(*this)(g, f);
    return ordered(f, g);
  }

 private:
  static double d(int a, int b) { return a == b ? 1.0 : 0.0; }

  /// Σ^k_l R^l_kij
  double sigma_curv(int i, int j) const {
    double s = 0.0;
    for (int k = 0; k < n_; ++k)
      for (int l = 0; l < n_; ++l) s += Sig_(k, l) * R_(l, k, i, j);
    return opt_.curvature_sign * s;
  }

  double ordered(const Observable& f, const Observable& g) const {
    using O = Observable;
    const int n = n_;
    const int i = f.a, A1 = f.b;
    switch (f.kind) {
      case O::X:
        switch (g.kind) {
          case O::P: return d(i, g.a);
          case O::PHat: return e_(i, g.a);
          default: return 0.0;
        }
      case O::E: {
        const int A = A1;
        switch (g.kind) {
          case O::E: return 0.0;
          case O::P: {  // {e^i_A, P_j} = −e^k_A Γ^i_kj
            double s = 0.0;
            for (int k = 0; k < n; ++k) s -= e_(k, A) * G_(i, k, g.a);
            return s;
          }
          case O::PInt: return d(i, g.b) * d(g.a, A);
          case O::Sigma: return d(i, g.b) * e_(g.a, A);
          case O::SigmaHat: return d(g.a, A) * e_(i, g.b);
          case O::PHat: {  // −e^j_B e^k_A Γ^i_kj
            double s = 0.0;
            for (int j = 0; j < n; ++j)
              for (int k = 0; k < n; ++k) s -= e_(j, g.a) * e_(k, A) * G_(i, k, j);
            return s;
          }
          default: return 0.0;
        }
      }
      case O::P:
        switch (g.kind) {
          case O::P: return sigma_curv(i, g.a);
          case O::PInt: {  // −P^A_k Γ^k_ji
            double s = 0.0;
            for (int k = 0; k < n; ++k) s -= P_(g.a, k) * G_(k, g.b, i);
            return s;
          }
          case O::Sigma: {  // {P_i, Σ^k_j} = Σ^l_j Γ^k_li − Σ^k_l Γ^l_ji
            const int k = g.a, j = g.b;
            double s = 0.0;
            for (int l = 0; l < n; ++l) s += Sig_(l, j) * G_(k, l, i) - Sig_(k, l) * G_(l, j, i);
            return s;
          }
          case O::SigmaHat: return 0.0;
          case O::PHat: {  // e^k_A Γ^j_ki P_j + e^j_A Σ^k_l R^l_kij
            const int A = g.a;
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
              for (int k = 0; k < n; ++k) s += e_(k, A) * G_(j, k, i) * Pc_(j);
              s += e_(j, A) * sigma_curv(i, j);
            }
            return s;
          }
          default: return 0.0;
        }
      case O::PInt: {
        const int A = i, ii = A1;  // P^A_ii
        switch (g.kind) {
          case O::PInt: return 0.0;
          case O::Sigma: return -d(g.a, ii) * P_(A, g.b);
          case O::SigmaHat: return -d(A, g.b) * P_(g.a, ii);
          case O::PHat: {  // −δ^A_B P_i + e^j_B P^A_k Γ^k_ij
            const int B = g.a;
            double s = -d(A, B) * Pc_(ii);
            for (int j = 0; j < n; ++j)
              for (int k = 0; k < n; ++k) s += e_(j, B) * P_(A, k) * G_(k, ii, j);
            return s;
          }
          default: return 0.0;
        }
      }
      case O::Sigma: {
        const int a = i, b = A1;  // Σ^a_b
        switch (g.kind) {
          case O::Sigma: return d(a, g.b) * Sig_(g.a, b) - d(g.a, b) * Sig_(a, g.b);
          case O::SigmaHat: return 0.0;
          case O::PHat: {  // −e^a_A P_b − e^k_A (Σ^l_b Γ^a_lk − Σ^a_l Γ^l_bk)
            const int A = g.a;
            double s = -e_(a, A) * Pc_(b);
            for (int k = 0; k < n; ++k)
              for (int l = 0; l < n; ++l) s -= e_(k, A) * (Sig_(l, b) * G_(a, l, k) - Sig_(a, l) * G_(l, b, k));
            return s;
          }
          default: return 0.0;
        }
      }
      case O::SigmaHat: {
        const int A = i, B = A1;
        switch (g.kind) {
          case O::SigmaHat: return d(g.a, B) * SigH_(A, g.b) - d(A, g.b) * SigH_(g.a, B);
          case O::PHat: return -Ph_(B) * d(A, g.a);
          default: return 0.0;
        }
      }
      case O::PHat: {  // {P̂_A, P̂_B} = Σ̂^K_L R^L_KAB − 2 P̂_K S^K_AB
        const int A = i, B = g.a;
        double curv = 0.0, tor = 0.0;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            curv += e_(a, A) * e_(b, B) * sigma_curv(a, b);
            for (int j = 0; j < n; ++j) tor += Pc_(j) * S_(j, a, b) * e_(a, A) * e_(b, B);
          }
        return curv - 2.0 * tor;
      }
    }
    return 0.0;
  }

  int n_;
  Mat e_, ei_, P_;
  Tensor3 G_, S_;
  Tensor4 R_;
  Vec Pc_, Ph_;
  Mat Sig_, SigH_;
  BracketOptions opt_;
};

/// Closed-form bracket of two observables.
inline double bracket(const Observable& f, const Observable& g, const BodyState& s, const Manifold& M,
                      BracketOptions opt = {}) {
  return BracketTable(s, M, opt)(f, g);
}

/// Every observable component for dimension n, in a fixed order.
inline std::vector<Observable> all_observables(int n) {
  std::vector<Observable> out;
  for (int k = 0; k <= Observable::PHat; ++k) {
    auto kind = static_cast<Observable::Kind>(k);
    if (Observable::arity(kind) == 1) {
      for (int a = 0; a < n; ++a) out.push_back({kind, a, 0});
    } else {
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) out.push_back({kind, a, b});
    }
  }
  return out;
}

namespace detail {

/// Canonical coordinates of a momentum state packed as (x, e, p, P).
inline Vec pack_phase(const BodyState& s) {
  const int n = s.dim();
  const auto& f = s.momentum();
  Vec z(2 * (n + n * n));
  z.head(n) = s.x;
  for (int i = 0; i < n; ++i)
    for (int A = 0; A < n; ++A) z(n + i * n + A) = s.e(i, A);
  const int o = n + n * n;
  z.segment(o, n) = f.p;
  for (int A = 0; A < n; ++A)
    for (int i = 0; i < n; ++i) z(o + n + A * n + i) = f.P(A, i);
  return z;
}

inline BodyState unpack_phase(const Vec& z, int n) {
  Vec x = z.head(n);
  Mat e(n, n), P(n, n);
  for (int i = 0; i < n; ++i)
    for (int A = 0; A < n; ++A) e(i, A) = z(n + i * n + A);
  const int o = n + n * n;
  Vec p = z.segment(o, n);
  for (int A = 0; A < n; ++A)
    for (int i = 0; i < n; ++i) P(A, i) = z(o + n + A * n + i);
  return BodyState::with_momentum(x, e, p, P);
}

}  // namespace detail

/// Jacobi residual {f,{g,h}} + {g,{h,f}} + {h,{f,g}}; the inner brackets come from the closed forms
/// and are differentiated by central differences in canonical coordinates.
inline double jacobi_residual(const Observable& f, const Observable& g, const Observable& h, const BodyState& s,
                              const Manifold& M, double step = 1e-4) {
  const int n = s.dim();
  Vec z0 = detail::pack_phase(s);
  auto outer = [&](const Observable& a, const Observable& b, const Observable& c) {
    // gradient of {b, c} as a phase-space function
    PhaseGradient gb{Vec::Zero(n + n * n), Vec::Zero(n + n * n)};
    const int half = n + n * n;
    for (int idx = 0; idx < 2 * half; ++idx) {
      auto val = [&](double t) {
        Vec z = z0;
        z(idx) += t;
        return bracket(b, c, detail::unpack_phase(z, n), M);
      };
      double dv = (-val(2 * step) + 8 * val(step) - 8 * val(-step) + val(-2 * step)) / (12 * step);
      if (idx < half)
        gb.dq(idx) = dv;
      else
        gb.dp(idx - half) = dv;
    }
    return canonical_bracket(observable_gradient(a, s, M), gb);
  };
  return outer(f, g, h) + outer(g, h, f) + outer(h, f, g);
}

// ---------------------------------------------------------------------------
// Equations of motion.

/// Covariant rates of the balance laws at a velocity state.
struct BalanceRates {
  Vec Dv;      // covariant acceleration Dv/Dt (connection of the model)
  Mat DV;      // D²e/Dt² = DV/Dt
  Vec F_geom;  // ½ S^a_b R^b_a^i_j v^j, the spin–curvature force (vector)
  Vec F_torsion;  // 2m v^a v^b S_ab^i
  Mat spin;    // S^i_j
  Mat DSigma;  // DΣ^ij/Dt
};

/// Spin S^i_j and affine spin Σ of a velocity state: Σ = e J Vᵀ g.
inline Mat affine_spin_from_velocity(const Mat& e, const Mat& V, const Mat& g, const Inertia& I) {
  return e * I.J * V.transpose() * g;
}

/// Balance laws in a Riemann–Cartan space:
/// m Dv/Dt = 2m v^a v^b S_ab^i + ½ S^a_b R^b_a^i_j v^j + F^i,  DΣ^ij/Dt = J̃_ab Σ^ai Σ^bj + N^ij.
inline BalanceRates eom_riemann_cartan(const BodyState& s, const Inertia& I, const ForceSnapshot& F,
                                       const Manifold& M) {
  M.require_domain(s.x);
  if (!M.metric_compatible()) throw MetricityError("Riemann–Cartan balance laws need a metric-compatible connection");
  const int n = s.dim();
  const auto& f = s.velocity();
  const Vec& v = f.v;
  Mat g = M.metric(s.x);
  Mat gi = g.inverse();
  Tensor3 G = M.connection(s.x);
  Tensor4 R = curvature_from(G, M.connection_partials(s.x));
  Tensor3 S = torsion_from(G);
  Mat V = f.edot + connection_matrix(G, v) * s.e;
  Mat Sigma = affine_spin_from_velocity(s.e, V, g, I);
  Mat spin = Sigma - gi * Sigma.transpose() * g;

  BalanceRates out;
  out.spin = spin;
  // F_geom^i = ½ S^a_b R^b_{a k j} g^{ki} v^j
  Vec Fg_low = Vec::Zero(n);
  for (int k = 0; k < n; ++k)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int j = 0; j < n; ++j) Fg_low(k) += 0.5 * spin(a, b) * R(b, a, k, j) * v(j);
  out.F_geom = gi * Fg_low;
  // S_ab^i = g_ak S^k_bl g^li
  Vec Ft = Vec::Zero(n);
  Vec gv = g * v;  // v_a
  for (int i = 0; i < n; ++i)
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) Ft(i) += 2.0 * I.m * gv(k) * v(b) * S(k, b, l) * gi(l, i);
  out.F_torsion = Ft;
  out.Dv = (Ft + out.F_geom + F.F_vec(g)) / I.m;
  out.DV = gi * F.Q * I.Jinv();
  out.DSigma = V * I.J * V.transpose() + F.N_upper(g);
  return out;
}

/// Balance laws for independent g and Γ (no compatibility assumed). The connection of the model drives
/// the covariant derivatives; 𝔎 = Γ − {Levi-Civita} and the Dg/Dt term enter explicitly.
inline BalanceRates eom_general(const BodyState& s, const Inertia& I, const ForceSnapshot& F, const Manifold& M) {
  M.require_domain(s.x);
  const int n = s.dim();
  const auto& f = s.velocity();
  const Vec& v = f.v;
  Mat g = M.metric(s.x);
  Mat gi = g.inverse();
  Tensor3 G = M.connection(s.x);
  Tensor4 R = curvature_from(G, M.connection_partials(s.x));
  Tensor3 Kd = G - M.levi_civita(s.x);
  Tensor3 Q = metricity_residual(M, s.x);  // (k, i, j) = ∇_k g_ij
  Mat V = f.edot + connection_matrix(G, v) * s.e;
  Mat Sigma = affine_spin_from_velocity(s.e, V, g, I);

  BalanceRates out;
  out.spin = Sigma - gi * Sigma.transpose() * g;
  Vec low = Vec::Zero(n), curv = Vec::Zero(n);
  Mat VJV = V * I.J * V.transpose();
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l)
      for (int a = 0; a < n; ++a)
        for (int m = 0; m < n; ++m) curv(k) += Sigma(l, a) * R(a, l, k, m) * v(m);
    double qk = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) qk += 0.5 * Q(k, i, j) * VJV(i, j);
    low(k) = curv(k) + qk + F.F_cov(k);
  }
  out.F_geom = gi * curv;
  out.F_torsion = I.m * contract_connection(Kd, v, v);
  out.Dv = out.F_torsion / I.m + gi * low / I.m;
  Mat Dg = Mat::Zero(n, n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) Dg(i, j) += Q(k, i, j) * v(k);
  out.DV = gi * F.Q * I.Jinv() - gi * Dg * V;
  out.DSigma = VJV + F.N_upper(g);
  return out;
}

// ---------------------------------------------------------------------------
// Constraints.

enum class ConstraintKind { None, Gyroscopic, Incompressible, Rotationless };

/// Residual of the constraint at the configuration (or its velocity-level form).
inline double constraint_residual(ConstraintKind c, const Mat& e, const Mat& g) {
  switch (c) {
    case ConstraintKind::Gyroscopic: {
      const int n = static_cast<int>(e.rows());
      return (e.transpose() * g * e - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
    }
    default: return 0.0;
  }
}

/// Velocity-level residual: skew/trace-free/symmetric defect of Ω̂.
inline double constraint_velocity_residual(ConstraintKind c, const Mat& OmegaHat) {
  switch (c) {
    case ConstraintKind::Gyroscopic: return (OmegaHat + OmegaHat.transpose()).cwiseAbs().maxCoeff();
    case ConstraintKind::Incompressible: return std::abs(OmegaHat.trace());
    case ConstraintKind::Rotationless: return (OmegaHat - OmegaHat.transpose()).cwiseAbs().maxCoeff();
    default: return 0.0;
  }
}

/// Basis (Frobenius-orthonormal) of the complement of the admissible Ω̂ subspace.
inline std::vector<Mat> constraint_normal_basis(ConstraintKind c, int n) {
  std::vector<Mat> out;
  switch (c) {
    case ConstraintKind::Gyroscopic:  // admissible: skew, normal: symmetric
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          Mat B = Mat::Zero(n, n);
          B(i, j) = B(j, i) = (i == j) ? 1.0 : std::sqrt(0.5);
          out.push_back(B);
        }
      break;
    case ConstraintKind::Incompressible:
      out.push_back(Mat::Identity(n, n) / std::sqrt(static_cast<double>(n)));
      break;
    case ConstraintKind::Rotationless:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          Mat B = Mat::Zero(n, n);
          B(i, j) = std::sqrt(0.5);
          B(j, i) = -std::sqrt(0.5);
          out.push_back(B);
        }
      break;
    case ConstraintKind::None: break;
  }
  return out;
}

/// Projection of the hyperforce onto its effective part: g-skew (gyroscopic), trace-free (incompressible)
/// or g-symmetric (rotationless). The translational force is unchanged.
inline ForceSnapshot project_constraint(ConstraintKind c, const ForceSnapshot& F, const Mat& e, const Mat& g) {
  if (c == ConstraintKind::None) return F;
  const int n = static_cast<int>(e.rows());
  Mat Nu = F.N_upper(g);
  Mat Nu_eff;
  switch (c) {
    case ConstraintKind::Gyroscopic: Nu_eff = 0.5 * (Nu - Nu.transpose()); break;
    case ConstraintKind::Rotationless: Nu_eff = 0.5 * (Nu + Nu.transpose()); break;
    default: {
      Mat Nm = F.N;
      Nm -= Nm.trace() / n * Mat::Identity(n, n);
      Nu_eff = Nm * g.inverse();
    }
  }
  ForceSnapshot out = F;
  out.N = Nu_eff * g;
  out.Q = (invert_frame(e) * out.N).transpose();
  return out;
}

/// Gyroscopic projection with the constraint check.
inline ForceSnapshot project_gyroscopic(const ForceSnapshot& F, const BodyState& s, const Manifold& M,
                                        double tol = 1e-6) {
  Mat g = metric_at(M, s.x);
  double r = constraint_residual(ConstraintKind::Gyroscopic, s.e, g);
  if (r > tol) throw ConstraintViolationError("state violates e^T g e = 1 by " + std::to_string(r));
  return project_constraint(ConstraintKind::Gyroscopic, F, s.e, g);
}

/// Ideal reaction Q_R = e⁻ᵀ M (M normal to the admissible subspace) keeping the constrained Ω̂ admissible.
inline Mat constraint_reaction(ConstraintKind c, const Mat& e, const Mat& g, const Mat& V, const Mat& Q,
                               const Inertia& I) {
  const int n = static_cast<int>(e.rows());
  auto basis = constraint_normal_basis(c, n);
  if (basis.empty()) return Mat::Zero(n, n);
  Mat ei = invert_frame(e);
  Mat Gi = (e.transpose() * g * e).inverse();
  Mat Ji = I.Jinv();
  Mat gi = g.inverse();
  Mat OmH = ei * V;
  Mat rhs_m = OmH * OmH - ei * gi * Q * Ji;
  const int k = static_cast<int>(basis.size());
  Mat A(k, k);
  Vec b(k);
  for (int s = 0; s < k; ++s) {
    b(s) = (basis[s].transpose() * rhs_m).trace();
    for (int r = 0; r < k; ++r) A(s, r) = (basis[s].transpose() * Gi * basis[r] * Ji).trace();
  }
  Vec mu = A.fullPivLu().solve(b);
  Mat Mr = Mat::Zero(n, n);
  for (int r = 0; r < k; ++r) Mr += mu(r) * basis[r];
  return ei.transpose() * Mr;
}

/// Virtual power of a reaction on an admissible virtual velocity δe = e W.
inline double reaction_power(const Mat& QR, const Mat& e, const Mat& W) { return (QR.transpose() * e * W).trace(); }

// ---------------------------------------------------------------------------
// Two-polar form of the internal kinetic energy (doubly isotropic J = I·1).

struct TwoPolarVariables {
  Mat D, Ddot;  // singular values and their rates
  Mat chi;      // Uᵀ dU/dt + Uᵀ Γ^A_BC v̂^C U, skew (left angular velocity incl. drive)
  Mat theta;    // Vᵀ dV/dt, skew
};

/// T_int = (I/2) [Tr(Ḋ²) − Tr(χ² D²) − Tr(ϑ² D²) + 2 Tr(χ D ϑ D)].
inline double two_polar_kinetic(const TwoPolarVariables& q, double Iscalar) {
  const Mat& D = q.D;
  return 0.5 * Iscalar *
         ((q.Ddot * q.Ddot).trace() - (q.chi * q.chi * D * D).trace() - (q.theta * q.theta * D * D).trace() +
          2.0 * (q.chi * D * q.theta * D).trace());
}

/// Decomposition variables and their rates from a velocity state (distinct singular values required).
inline TwoPolarVariables two_polar_variables(const BodyState& s, const FrameField& F, const Manifold& M) {
  const int n = s.dim();
  RelativeDriveSplit sp = split_relative_drive(s, F, M);
  Decomposition dec = decompose(sp.L);
  Mat Kd = dec.U.transpose() * sp.Ldot * dec.V;
  TwoPolarVariables out;
  out.D = dec.D;
  out.Ddot = Kd.diagonal().asDiagonal();
  Mat a = Mat::Zero(n, n), b = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double di = dec.D(i, i), dj = dec.D(j, j);
      double den = dj * dj - di * di;
      if (std::abs(den) < 1e-12) throw SingularFrameError("degenerate singular values in two-polar rates");
      a(i, j) = (Kd(i, j) * dj + Kd(j, i) * di) / den;
      b(i, j) = (Kd(i, j) * di + Kd(j, i) * dj) / den;
    }
  // Drive in the frame basis: Γ^A_BC v̂^C = L Ω̂_dr L⁻¹.
  Mat drive = sp.L * sp.OmegaHatDrive * invert_frame(sp.L);
  out.chi = a + dec.U.transpose() * drive * dec.U;
  out.theta = b;
  return out;
}

// ---------------------------------------------------------------------------
// Alternative kinetic energies.

/// Cauchy-metric form: (m/2) C_ij v^i v^j + ½ C_ij V^i_A V^j_B J^AB.
inline double cauchy_kinetic_energy(const BodyState& s, const Inertia& I, const Manifold& M) {
  KinematicSnapshot k = kinematic_snapshot(s, M);
  const Mat& C = k.def.Cauchy;
  const Vec& v = s.velocity().v;
  return 0.5 * I.m * v.dot(C * v) + 0.5 * (k.V.transpose() * C * k.V * I.J).trace();
}

/// Co-moving form of the Cauchy-metric energy: (m/2) η v̂ v̂ + ½ η Ω̂ Ω̂ J.
inline double cauchy_kinetic_energy_comoving(const BodyState& s, const Inertia& I, const Manifold& M) {
  KinematicSnapshot k = kinematic_snapshot(s, M);
  return 0.5 * I.m * k.vhat.squaredNorm() + 0.5 * (k.OmegaHat.transpose() * k.OmegaHat * I.J).trace();
}

struct AffineEnergyConstants {
  double m = 1.0, I = 1.0, A = 0.0, B = 0.0;
};

/// Spatially affine, micromaterially isotropic energy; returns (co-moving value, spatial value).
inline std::pair<double, double> affine_isotropic_kinetic(const BodyState& s, const AffineEnergyConstants& c,
                                                           const Manifold& M) {
  KinematicSnapshot k = kinematic_snapshot(s, M);
  const Mat& Oh = k.OmegaHat;
  const Mat& O = k.Omega;
  const Mat& C = k.def.Cauchy;
  const Vec& v = s.velocity().v;
  double comoving = 0.5 * c.m * k.vhat.squaredNorm() + 0.5 * c.I * (Oh.transpose() * Oh).trace() +
                    0.5 * c.A * (Oh * Oh).trace() + 0.5 * c.B * Oh.trace() * Oh.trace();
  double spatial = 0.5 * c.m * v.dot(C * v) + 0.5 * c.I * (O.transpose() * C * O * C.inverse()).trace() +
                   0.5 * c.A * (O * O).trace() + 0.5 * c.B * O.trace() * O.trace();
  return {comoving, spatial};
}

/// Spatially metrical, micromaterially affine energy; returns (co-moving value, spatial value).
inline std::pair<double, double> metrical_affine_kinetic(const BodyState& s, const AffineEnergyConstants& c,
                                                          const Manifold& M) {
  KinematicSnapshot k = kinematic_snapshot(s, M);
  Mat g = metric_at(M, s.x);
  const Mat& G = k.def.Green;
  const Mat& Oh = k.OmegaHat;
  const Mat& O = k.Omega;
  const Vec& v = s.velocity().v;
  double comoving = 0.5 * c.m * k.vhat.dot(G * k.vhat) + 0.5 * c.I * (Oh.transpose() * G * Oh * G.inverse()).trace() +
                    0.5 * c.A * (Oh * Oh).trace() + 0.5 * c.B * Oh.trace() * Oh.trace();
  double spatial = 0.5 * c.m * v.dot(g * v) + 0.5 * c.I * (O.transpose() * g * O * g.inverse()).trace() +
                   0.5 * c.A * (O * O).trace() + 0.5 * c.B * O.trace() * O.trace();
  return {comoving, spatial};
}

}  // namespace gyro
