#pragma once

#include "gyrocurve/integrate.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <optional>

namespace gyro {

enum class Space2D { Sphere, Pseudosphere };

enum class DeformationFamily { None, SeparableXY, SeparablePolar };

/// Potential of a two-dimensional body: V_r(r) + deformation-plane part (+ optional x²y² coupling).
struct Potential2D {
  double gamma = 0.0;  // radial strength
  DeformationFamily family = DeformationFamily::None;
  double A = 0.0, B = 0.0, C = 0.0;              // A/x² + B/y² + C(x² + y²)
  double gamma_hat = 0.0, gamma_tilde = 0.0;     // γ̃/ς + γ̂ cot²(2ε)/ς²
  double coupling = 0.0;                         // κ x² y², breaks separability

  /// Harmonic subclass F/y² + (F/4)(x² + y²).
  static Potential2D harmonic(double F, double gamma = 0.0) {
    Potential2D p;
    p.gamma = gamma;
    p.family = DeformationFamily::SeparableXY;
    p.B = F;
    p.C = F / 4.0;
    return p;
  }
  static Potential2D polar(double gamma_tilde, double gamma_hat, double gamma = 0.0) {
    Potential2D p;
    p.gamma = gamma;
    p.family = DeformationFamily::SeparablePolar;
    p.gamma_tilde = gamma_tilde;
    p.gamma_hat = gamma_hat;
    return p;
  }
  bool is_harmonic() const {
    return family == DeformationFamily::SeparableXY && A == 0.0 && B > 0.0 && std::abs(C - B / 4.0) <= 1e-15 * B;
  }
};

/// Two-dimensional body on the sphere or pseudosphere with isotropic inertia J.
struct Scenario2D {
  Space2D space = Space2D::Sphere;
  double R = 1.0;
  double m = 1.0;
  double J = 1.0;
  Potential2D potential;

  bool hyperbolic() const { return space == Space2D::Pseudosphere; }
  double s(double r) const { return hyperbolic() ? std::sinh(r / R) : std::sin(r / R); }
  double c(double r) const { return hyperbolic() ? std::cosh(r / R) : std::cos(r / R); }

  void validate() const {
    if (!(R > 0)) throw DomainError("radius must be positive");
    if (!(m > 0) || !(J > 0)) throw SingularInertiaError("m and J must be positive");
  }

  /// Coordinates q = (r, φ, γ, δ, x, y).
  void require_domain(const Vec& q) const {
    if (q.size() != 6) throw DomainError("2D coordinates must have 6 entries");
    const double r = q(0);
    if (!(r > 0.0) || (!hyperbolic() && !(r < kPi * R))) throw DomainError("r outside the chart");
    if (q(4) == 0.0 || q(5) == 0.0) throw DegenerateDeformationError("x or y is zero");
  }

  /// V_r(r): γ/sin²(r/R) on the sphere, γ/(R² sinh²(r/R)) on the pseudosphere.
  double radial_potential(double r) const {
    const double sv = s(r);
    return hyperbolic() ? potential.gamma / (R * R * sv * sv) : potential.gamma / (sv * sv);
  }
  /// Constant f in V_r = f det[g^ij].
  double radial_det_factor() const { return hyperbolic() ? potential.gamma : potential.gamma * R * R; }

  double Vx(double x) const {
    const auto& p = potential;
    return (p.A != 0.0 ? p.A / (x * x) : 0.0) + p.C * x * x;
  }
  double Vy(double y) const {
    const auto& p = potential;
    return (p.B != 0.0 ? p.B / (y * y) : 0.0) + p.C * y * y;
  }
  double Vsigma(double sg) const { return potential.gamma_tilde / sg; }
  double Veps(double ep) const {
    const double t = 1.0 / std::tan(2.0 * ep);
    return potential.gamma_hat * t * t;
  }

  /// Deformation-plane potential at (x, y).
  double deformation_potential(double x, double y) const {
    double u = potential.coupling * x * x * y * y;
    switch (potential.family) {
      case DeformationFamily::SeparableXY: return u + Vx(x) + Vy(y);
      case DeformationFamily::SeparablePolar: {
        const double sg = std::hypot(x, y);
        const double ep = std::atan2(std::abs(x), std::abs(y));
        return u + Vsigma(sg) + Veps(ep) / (sg * sg);
      }
      default: return u;
    }
  }

  double potential_at(const Vec& q) const { return radial_potential(q(0)) + deformation_potential(q(4), q(5)); }
};

// ---------------------------------------------------------------------------
// Mass matrix and Hamiltonian in q = (r, φ, γ, δ, x, y).

/// G_ij with T = (m/2) G_ij q̇^i q̇^j.
inline Mat mass_matrix(const Scenario2D& scn, const Vec& q) {
  scn.require_domain(q);
  const double r = q(0), x = q(4), y = q(5);
  const double sv = scn.s(r), cv = scn.c(r), k = scn.J / scn.m;
  Mat G = Mat::Zero(6, 6);
  G(0, 0) = 1.0;
  G(1, 1) = scn.R * scn.R * sv * sv + k * cv * cv * (x * x + y * y);
  G(1, 2) = G(2, 1) = k * x * x * cv;
  G(1, 3) = G(3, 1) = k * y * y * cv;
  G(2, 2) = k * x * x;
  G(3, 3) = k * y * y;
  G(4, 4) = G(5, 5) = k;
  return G;
}

/// G^ab, written out in closed form.
inline Mat inverse_mass_matrix(const Scenario2D& scn, const Vec& q) {
  scn.require_domain(q);
  const double r = q(0), x = q(4), y = q(5);
  const double sv = scn.s(r), cv = scn.c(r), k = scn.J / scn.m;
  const double a = scn.R * scn.R * sv * sv;
  Mat Gi = Mat::Zero(6, 6);
  Gi(0, 0) = 1.0;
  Gi(1, 1) = 1.0 / a;
  Gi(1, 2) = Gi(2, 1) = -cv / a;
  Gi(1, 3) = Gi(3, 1) = -cv / a;
  Gi(2, 2) = cv * cv / a + 1.0 / (k * x * x);
  Gi(3, 3) = cv * cv / a + 1.0 / (k * y * y);
  Gi(2, 3) = Gi(3, 2) = cv * cv / a;
  Gi(4, 4) = Gi(5, 5) = 1.0 / k;
  return Gi;
}

/// H = p_r²/2m + (p_φ − c(p_γ + p_δ))²/(2mR²s²) + (p_x² + p_y²)/2J + p_γ²/(2Jx²) + p_δ²/(2Jy²) + U.
inline double hamiltonian_2d(const Scenario2D& scn, const Vec& q, const Vec& p) {
  scn.require_domain(q);
  const double r = q(0), x = q(4), y = q(5);
  const double sv = scn.s(r), cv = scn.c(r), m = scn.m, J = scn.J, R = scn.R;
  const double pa = p(2) + p(3);
  const double T = p(0) * p(0) / (2 * m) + std::pow(p(1) - cv * pa, 2) / (2 * m * R * R * sv * sv) +
                   (p(4) * p(4) + p(5) * p(5)) / (2 * J) + p(2) * p(2) / (2 * J * x * x) +
                   p(3) * p(3) / (2 * J * y * y);
  return T + scn.potential_at(q);
}

/// Alternative arrangement of the kinetic term with (c² + sign·(mR²/J)s²)(p_γ + p_δ)² in the numerator.
/// It differs from (1/2m) G^ab p_a p_b by (p_γ + p_δ)²/2J for sign = +1.
inline double hamiltonian_2d_alternate(const Scenario2D& scn, const Vec& q, const Vec& p, double sign = 1.0) {
  scn.require_domain(q);
  const double r = q(0), x = q(4), y = q(5);
  const double sv = scn.s(r), cv = scn.c(r), m = scn.m, J = scn.J, R = scn.R;
  const double pa = p(2) + p(3);
  const double den = 2 * m * R * R * sv * sv;
  const double T = p(0) * p(0) / (2 * m) + (p(1) * p(1) - 2 * cv * p(1) * pa) / den +
                   (sign * m * R * R / J * sv * sv + cv * cv) * pa * pa / den + (p(4) * p(4) + p(5) * p(5)) / (2 * J) +
                   p(2) * p(2) / (2 * J * x * x) + p(3) * p(3) / (2 * J * y * y);
  return T + scn.potential_at(q);
}

/// T_tr + T_int with χ = α̇ + c φ̇, ϑ = β̇.
inline double kinetic_energy_2d(const Scenario2D& scn, const Vec& q, const Vec& qd) {
  scn.require_domain(q);
  const double r = q(0), sv = scn.s(r), cv = scn.c(r);
  const double x = q(4), y = q(5);
  const double lam = (x + y) / std::sqrt(2.0), mu = (y - x) / std::sqrt(2.0);
  const double lamd = (qd(4) + qd(5)) / std::sqrt(2.0), mud = (qd(5) - qd(4)) / std::sqrt(2.0);
  const double alphad = 0.5 * (qd(2) + qd(3)), betad = 0.5 * (qd(2) - qd(3));
  const double chi = alphad + cv * qd(1), th = betad;
  const double Ttr = 0.5 * scn.m * (qd(0) * qd(0) + scn.R * scn.R * sv * sv * qd(1) * qd(1));
  const double Tint = 0.5 * scn.J * (lamd * lamd + mud * mud) + 0.5 * scn.J * (lam * lam + mu * mu) * (chi * chi + th * th) -
                      2.0 * scn.J * lam * mu * chi * th;
  return Ttr + Tint;
}

// ---------------------------------------------------------------------------
// Bridge to the generic frame-bundle state.

namespace detail2d {

inline Mat eps2() { return skew_generator2(); }

struct InternalPieces {
  Mat E, dE;   // frame and ∂_r E
  Mat L;       // rot(α) diag(λ, μ) rot(β)ᵀ
  Mat dL[4];   // ∂L/∂(γ, δ, x, y)
};

inline InternalPieces pieces(const Scenario2D& scn, const Vec& q) {
  PolarOrthonormalFrame F(scn.R, scn.hyperbolic());
  Vec x = q.head(2);
  InternalPieces P;
  P.E = F.frame(x);
  P.dE = F.frame_partials(x)[0];
  const double alpha = 0.5 * (q(2) + q(3)), beta = 0.5 * (q(2) - q(3));
  const double lam = (q(4) + q(5)) / std::sqrt(2.0), mu = (q(5) - q(4)) / std::sqrt(2.0);
  Mat U = rotation2(alpha), V = rotation2(beta);
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = lam;
  D(1, 1) = mu;
  P.L = U * D * V.transpose();
  Mat dA = eps2() * P.L, dB = -P.L * eps2();
  Mat dLam = U.col(0) * V.col(0).transpose(), dMu = U.col(1) * V.col(1).transpose();
  P.dL[0] = 0.5 * (dA + dB);
  P.dL[1] = 0.5 * (dA - dB);
  P.dL[2] = (dLam - dMu) / std::sqrt(2.0);
  P.dL[3] = (dLam + dMu) / std::sqrt(2.0);
  return P;
}

/// ∂z/∂q for z = (x¹, x², e¹_1, e¹_2, e²_1, e²_2).
inline Mat bridge_jacobian(const Scenario2D& scn, const Vec& q) {
  InternalPieces P = pieces(scn, q);
  Mat Jm = Mat::Zero(6, 6);
  Jm(0, 0) = 1.0;
  Jm(1, 1) = 1.0;
  auto put = [&](int col, const Mat& de) {
    for (int i = 0; i < 2; ++i)
      for (int A = 0; A < 2; ++A) Jm(2 + 2 * i + A, col) = de(i, A);
  };
  put(0, P.dE * P.L);
  for (int k = 0; k < 4; ++k) put(2 + k, P.E * P.dL[k]);
  return Jm;
}

}  // namespace detail2d

/// Generic velocity state for (q, q̇).
inline BodyState bridge_velocity_state(const Scenario2D& scn, const Vec& q, const Vec& qd) {
  scn.require_domain(q);
  detail2d::InternalPieces P = detail2d::pieces(scn, q);
  Mat Ldot = Mat::Zero(2, 2);
  for (int k = 0; k < 4; ++k) Ldot += P.dL[k] * qd(2 + k);
  Mat e = P.E * P.L;
  Mat edot = P.dE * P.L * qd(0) + P.E * Ldot;
  return BodyState::with_velocity(q.head(2), e, qd.head(2), edot);
}

/// Generic momentum state for (q, p) through the cotangent lift of q → (x, e).
inline BodyState bridge_momentum_state(const Scenario2D& scn, const Vec& q, const Vec& p) {
  scn.require_domain(q);
  Mat Jm = detail2d::bridge_jacobian(scn, q);
  Vec pz = Jm.transpose().fullPivLu().solve(p);
  Mat e = detail2d::pieces(scn, q).E * detail2d::pieces(scn, q).L;
  Mat P(2, 2);  // P^A_i
  for (int i = 0; i < 2; ++i)
    for (int A = 0; A < 2; ++A) P(A, i) = pz(2 + 2 * i + A);
  return BodyState::with_momentum(q.head(2), e, pz.head(2), P);
}

/// Coordinates q of a generic state (canonical decomposition branch, x ≥ 0).
inline Vec bridge_coordinates(const Scenario2D& scn, const BodyState& s) {
  PolarOrthonormalFrame F(scn.R, scn.hyperbolic());
  Mat L = relative_configuration(s.e, F, s.x);
  if (!(L.determinant() > 0))
    throw DegenerateDeformationError("deformation left the wedge y > |x| (det L <= 0)");
  Decomposition d = decompose(L);
  const double alpha = std::atan2(d.U(1, 0), d.U(0, 0));
  const double beta = std::atan2(d.V(1, 0), d.V(0, 0));
  const double lam = d.D(0, 0), mu = d.D(1, 1);
  Vec q(6);
  q << s.x(0), s.x(1), alpha + beta, alpha - beta, (lam - mu) / std::sqrt(2.0), (lam + mu) / std::sqrt(2.0);
  return q;
}

/// Canonical momenta p_q = (∂z/∂q)ᵀ p_z of a momentum state.
inline Vec bridge_momenta(const Scenario2D& scn, const Vec& q, const BodyState& mom) {
  Mat Jm = detail2d::bridge_jacobian(scn, q);
  const auto& f = mom.momentum();
  Vec pz(6);
  pz.head(2) = f.p;
  for (int i = 0; i < 2; ++i)
    for (int A = 0; A < 2; ++A) pz(2 + 2 * i + A) = f.P(A, i);
  return Jm.transpose() * pz;
}

/// Generic space, inertia and potential equivalent to the scenario.
inline DynamicsModel make_model(const Scenario2D& scn) {
  scn.validate();
  DynamicsModel model;
  if (scn.hyperbolic())
    model.manifold = std::make_shared<Pseudosphere2>(scn.R);
  else
    model.manifold = std::make_shared<Sphere2>(scn.R);
  model.inertia = Inertia(scn.m, scn.J * Mat::Identity(2, 2));
  std::vector<PotentialPtr> parts;
  if (scn.potential.gamma != 0.0) parts.push_back(std::make_shared<RadialDetPotential>(scn.radial_det_factor()));
  const auto& p = scn.potential;
  if (p.family == DeformationFamily::SeparableXY)
    parts.push_back(deformation_xy_potential(p.A, p.B, p.C, p.coupling));
  else if (p.family == DeformationFamily::SeparablePolar)
    parts.push_back(deformation_polar_potential(p.gamma_tilde, p.gamma_hat, p.coupling));
  else if (p.coupling != 0.0)
    parts.push_back(deformation_xy_potential(0.0, 0.0, 0.0, p.coupling));
  if (parts.empty())
    model.potential = std::make_shared<ZeroPotential>();
  else
    model.potential = std::make_shared<SumPotential>(parts);
  return model;
}

// ---------------------------------------------------------------------------
// Conserved quantities.

struct SeparatedQuantities {
  double p_phi, p_gamma, p_delta, p_alpha, p_beta;
  double C_x, C_y;   // x- and y-energies
  double C_def;      // deformation energy C_x + C_y (or polar C)
  double A_sep;      // polar separation constant
};

/// Separated quantities at a point of the 2D phase space.
inline SeparatedQuantities separated_quantities(const Scenario2D& scn, const Vec& q, const Vec& p) {
  const double J = scn.J;
  const double x = q(4), y = q(5);
  SeparatedQuantities s{};
  s.p_phi = p(1);
  s.p_gamma = p(2);
  s.p_delta = p(3);
  s.p_alpha = p(2) + p(3);
  s.p_beta = p(2) - p(3);
  const double cx = p(2) * p(2) / (2 * J * x * x), cy = p(3) * p(3) / (2 * J * y * y);
  s.C_x = p(4) * p(4) / (2 * J) + cx + scn.Vx(x);
  s.C_y = p(5) * p(5) / (2 * J) + cy + scn.Vy(y);
  // polar split: p_ς = (x p_x + y p_y)/ς, p_ε = y p_x − x p_y
  const double sg2 = x * x + y * y;
  const double sg = std::sqrt(sg2);
  const double ep = std::atan2(std::abs(x), std::abs(y));
  const double p_eps = y * p(4) - x * p(5);
  s.A_sep = p_eps * p_eps / (2 * J) + sg2 * (cx + cy) + scn.Veps(ep);
  const double p_sg = (x * p(4) + y * p(5)) / sg;
  if (scn.potential.family == DeformationFamily::SeparablePolar)
    s.C_def = p_sg * p_sg / (2 * J) + s.A_sep / sg2 + scn.Vsigma(sg);
  else
    s.C_def = s.C_x + s.C_y;
  return s;
}

/// Separated quantities of a generic velocity state.
inline SeparatedQuantities separated_quantities(const Scenario2D& scn, const BodyState& vel, const Manifold& M,
                                                const Inertia& I) {
  Vec q = bridge_coordinates(scn, vel);
  Vec p = bridge_momenta(scn, q, legendre(vel, I, M));
  return separated_quantities(scn, q, p);
}

/// Observables p_phi, p_gamma, p_delta, p_alpha, p_beta, C_x, C_y, C_def, A_sep on generic states.
inline MonitoredObservable bridge_observable(const std::string& name, const Scenario2D& scn) {
  static const std::vector<std::string> names{"p_phi", "p_gamma", "p_delta", "p_alpha", "p_beta",
                                              "C_x",   "C_y",     "C_def",   "A_sep"};
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw UnknownObservableError("unknown observable '" + name + "'");
  DynamicsModel model = make_model(scn);
  ManifoldPtr M = model.manifold;
  Inertia I = model.inertia;
  return {name, [=](const BodyState& s) {
            SeparatedQuantities d = separated_quantities(scn, s, *M, I);
            if (name == "p_phi") return d.p_phi;
            if (name == "p_gamma") return d.p_gamma;
            if (name == "p_delta") return d.p_delta;
            if (name == "p_alpha") return d.p_alpha;
            if (name == "p_beta") return d.p_beta;
            if (name == "C_x") return d.C_x;
            if (name == "C_y") return d.C_y;
            if (name == "C_def") return d.C_def;
            return d.A_sep;
          }};
}

struct SeparableReport {
  std::vector<std::pair<std::string, double>> drifts;  // max relative drift per quantity
  double worst() const {
    double w = 0.0;
    for (const auto& d : drifts) w = std::max(w, d.second);
    return w;
  }
  double drift(const std::string& name) const {
    for (const auto& d : drifts)
      if (d.first == name) return d.second;
    throw UnknownObservableError("report has no quantity '" + name + "'");
  }
};

/// Max relative drift of the cyclic momenta and separation constants along a trajectory.
inline SeparableReport separable_check(const TrajectoryRecord& rec, const Scenario2D& scn) {
  std::vector<std::string> need{"p_phi", "p_alpha", "p_beta"};
  if (scn.potential.family == DeformationFamily::SeparablePolar) {
    need.push_back("C_def");
    need.push_back("A_sep");
  } else {
    need.push_back("C_x");
    need.push_back("C_y");
  }
  SeparableReport out;
  for (const auto& n : need) {
    if (!rec.has(n)) throw SchemaError("trajectory lacks observable '" + n + "'");
    out.drifts.emplace_back(n, relative_drift(rec.series(n), 1e-12));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Action variables.

/// Separation constants: energy, l = p_φ, C_α = p_α, C_β = p_β and the deformation constants.
struct SeparationConstants {
  double E = 0.0;
  double l = 0.0, C_alpha = 0.0, C_beta = 0.0;
  double C_x = 0.0, C_y = 0.0;  // SeparableXY
  double C = 0.0, A = 0.0;      // SeparablePolar: deformation energy and angular constant

  double deformation_energy(DeformationFamily f) const {
    return f == DeformationFamily::SeparablePolar ? C : (f == DeformationFamily::SeparableXY ? C_x + C_y : 0.0);
  }
};

struct ActionSet {
  double J_phi = 0.0, J_alpha = 0.0, J_beta = 0.0;
  std::optional<double> J_r, J_x, J_y, J_eps, J_sigma;
};

struct QuadratureOptions {
  double tol = 1e-13;
  int max_depth = 10;
};

/// 2 ∫ √f between the turning points around `guess`, with q = q1 + (q2 − q1) sin²θ.
inline double loop_action(const std::function<double(double)>& f, double lo, double hi, double guess,
                          const QuadratureOptions& opt = {}) {
  // locate a point with f > 0: start from the guess, then scan
  double q0 = guess;
  if (!(q0 > lo && q0 < hi) || !(f(q0) > 0)) {
    const int N = 4000;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < 2 * N; ++i) {
      // uniform grid, then a geometric grid clustered at the lower end
      double q = i < N ? lo + (hi - lo) * i / N : lo + (hi - lo) * std::pow(10.0, -10.0 + 10.0 * (i - N) / N);
      double v = f(q);
      if (std::isfinite(v) && v > best) {
        best = v;
        q0 = q;
      }
    }
    if (!(best > 0)) throw UnboundMotionError("no classically allowed region");
  }
  auto expand = [&](double dir) {
    double step = 1e-3 * (hi - lo);
    double inside = q0;
    for (int it = 0; it < 200; ++it) {
      double q = inside + dir * step;
      if (q <= lo || q >= hi) {
        q = dir > 0 ? hi - (hi - inside) * 1e-3 : lo + (inside - lo) * 1e-3;
        if (std::abs(q - inside) < 1e-15 * (1.0 + std::abs(q))) throw UnboundMotionError("no turning point before the chart edge");
      }
      double v = f(q);
      if (!(v > 0)) {
        std::uintmax_t iters = 200;
        auto tol = boost::math::tools::eps_tolerance<double>(52);
        auto r = dir > 0 ? boost::math::tools::toms748_solve(f, inside, q, f(inside), v, tol, iters)
                         : boost::math::tools::toms748_solve(f, q, inside, v, f(inside), tol, iters);
        return 0.5 * (r.first + r.second);
      }
      inside = q;
      step *= 2.0;
    }
    throw UnboundMotionError("turning point search did not terminate");
  };
  const double q1 = expand(-1.0), q2 = expand(1.0);
  auto g = [&](double th) {
    const double sn = std::sin(th), cs = std::cos(th);
    const double v = f(q1 + (q2 - q1) * sn * sn);
    return std::sqrt(std::max(v, 0.0)) * (q2 - q1) * 2.0 * sn * cs;
  };
  double err = 0.0;
  const double val =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.0, kPi / 2, opt.max_depth, opt.tol, &err);
  if (!std::isfinite(val) || err > 1e-9 * std::max(1.0, std::abs(val))) throw QuadratureError("loop integral did not converge");
  return 2.0 * val;
}

inline void require_deformation_family(const Scenario2D& scn) {
  if (scn.potential.family == DeformationFamily::None)
    throw RegimeError("action variables need a confining deformation potential family");
}

/// Actions by quadrature of the loop integrals.
inline ActionSet action_variables_quadrature(const Scenario2D& scn, const SeparationConstants& k,
                                             const QuadratureOptions& opt = {}) {
  scn.validate();
  require_deformation_family(scn);
  const double m = scn.m, J = scn.J, R = scn.R;
  ActionSet a;
  a.J_phi = 2 * kPi * k.l;
  a.J_alpha = 2 * kPi * k.C_alpha;
  a.J_beta = 2 * kPi * k.C_beta;
  const double Er = k.E - k.deformation_energy(scn.potential.family);
  auto fr = [&](double r) {
    const double sv = scn.s(r), cv = scn.c(r);
    const double w = a.J_phi - a.J_alpha * cv;
    return 2 * m * (Er - scn.radial_potential(r)) - w * w / (4 * kPi * kPi * R * R * sv * sv);
  };
  const double rhi = scn.hyperbolic() ? 300.0 * R : kPi * R;
  a.J_r = loop_action(fr, 0.0, rhi, 0.5 * (scn.hyperbolic() ? R : kPi * R), opt);
  const double jp = a.J_alpha + a.J_beta, jm = a.J_alpha - a.J_beta;
  if (scn.potential.family == DeformationFamily::SeparableXY) {
    auto fx = [&](double x) { return 2 * J * (k.C_x - scn.Vx(x)) - jp * jp / (16 * kPi * kPi * x * x); };
    auto fy = [&](double y) { return 2 * J * (k.C_y - scn.Vy(y)) - jm * jm / (16 * kPi * kPi * y * y); };
    a.J_x = loop_action(fx, 0.0, 1e4, 1.0, opt);
    a.J_y = loop_action(fy, 0.0, 1e4, 1.0, opt);
  } else {
    auto fe = [&](double ep) {
      const double s2 = std::sin(2 * ep);
      return 2 * J * (k.A - scn.Veps(ep)) -
             (a.J_alpha * a.J_alpha + 2 * std::cos(2 * ep) * a.J_alpha * a.J_beta + a.J_beta * a.J_beta) /
                 (4 * kPi * kPi * s2 * s2);
    };
    auto fs = [&](double sg) { return 2 * J * (k.C - scn.Vsigma(sg)) - 2 * J * k.A / (sg * sg); };
    a.J_eps = loop_action(fe, 0.0, kPi / 2, kPi / 4, opt);
    a.J_sigma = loop_action(fs, 0.0, 1e6, 1.0, opt);
  }
  return a;
}

namespace detail2d {
inline double checked_sqrt(double v, const char* what) {
  if (!(v >= 0.0)) throw RegimeError(std::string("imaginary radical in ") + what);
  return std::sqrt(v);
}
}  // namespace detail2d

/// Radial action in closed form.
inline double closed_form_radial(const Scenario2D& scn, double Er, double Jphi, double Jalpha) {
  using detail2d::checked_sqrt;
  const double m = scn.m, R = scn.R, g = scn.potential.gamma, pi2 = kPi * kPi;
  if (!scn.hyperbolic()) {
    return checked_sqrt(8 * m * pi2 * R * R * Er + Jalpha * Jalpha, "J_r") -
           0.5 * checked_sqrt(8 * m * pi2 * R * R * g + (Jphi + Jalpha) * (Jphi + Jalpha), "J_r") -
           0.5 * checked_sqrt(8 * m * pi2 * R * R * g + (Jphi - Jalpha) * (Jphi - Jalpha), "J_r");
  }
  if (!(Jphi * Jalpha > 0) || !(std::abs(Jphi) > std::abs(Jalpha)))
    throw RegimeError("pseudosphere radial closed form needs J_phi J_alpha > 0 and |J_phi| > |J_alpha|");
  return -checked_sqrt(8 * m * pi2 * R * R * (-Er) + Jalpha * Jalpha, "J_r") +
         0.5 * checked_sqrt(8 * m * pi2 * g + (Jphi + Jalpha) * (Jphi + Jalpha), "J_r") -
         0.5 * checked_sqrt(8 * m * pi2 * g + (Jphi - Jalpha) * (Jphi - Jalpha), "J_r");
}

/// Closed-form actions for the families that have them.
inline ActionSet closed_form_actions(const Scenario2D& scn, const SeparationConstants& k) {
  using detail2d::checked_sqrt;
  scn.validate();
  require_deformation_family(scn);
  const double J = scn.J, pi = kPi;
  ActionSet a;
  a.J_phi = 2 * pi * k.l;
  a.J_alpha = 2 * pi * k.C_alpha;
  a.J_beta = 2 * pi * k.C_beta;
  const double Er = k.E - k.deformation_energy(scn.potential.family);
  a.J_r = closed_form_radial(scn, Er, a.J_phi, a.J_alpha);
  const double jp = a.J_alpha + a.J_beta, jm = a.J_alpha - a.J_beta;
  if (scn.potential.family == DeformationFamily::SeparableXY) {
    if (!scn.potential.is_harmonic()) throw RegimeError("closed-form J_x, J_y exist only for the harmonic subclass");
    const double F = scn.potential.B;
    a.J_x = pi * k.C_x * std::sqrt(2 * J / F) - std::abs(jp) / 4;
    a.J_y = pi * k.C_y * std::sqrt(2 * J / F) - pi * checked_sqrt(2 * J * F + jm * jm / (16 * pi * pi), "J_y");
    if (*a.J_x < 0 || *a.J_y < 0) throw RegimeError("separation constants below the deformation-plane minimum");
  } else {
    const double gh = scn.potential.gamma_hat, gt = scn.potential.gamma_tilde;
    a.J_eps = 0.25 * (4 * pi * checked_sqrt(2 * J * (k.A + gh), "J_eps") -
                      checked_sqrt(8 * J * gh * pi * pi + jm * jm, "J_eps") -
                      checked_sqrt(8 * J * gh * pi * pi + jp * jp, "J_eps"));
    if (!(gt < 0) || !(k.C < 0)) throw RegimeError("J_sigma needs gamma_tilde < 0 and C < 0");
    a.J_sigma = std::sqrt(2.0) * pi * (-2 * checked_sqrt(J * k.A, "J_sigma") + std::sqrt(J) * (-gt) / std::sqrt(-k.C));
  }
  return a;
}

/// Energy from the action variables by inverting the closed forms.
inline double energy_from_actions(const Scenario2D& scn, const ActionSet& a) {
  using detail2d::checked_sqrt;
  scn.validate();
  require_deformation_family(scn);
  const double m = scn.m, J = scn.J, R = scn.R, pi = kPi, pi2 = pi * pi, g = scn.potential.gamma;
  if (!a.J_r) throw RegimeError("J_r missing");
  double Cdef = 0.0;
  const double jp = a.J_alpha + a.J_beta, jm = a.J_alpha - a.J_beta;
  if (scn.potential.family == DeformationFamily::SeparableXY) {
    if (!a.J_x || !a.J_y) throw RegimeError("J_x, J_y missing");
    if (scn.potential.is_harmonic()) {
      const double F = scn.potential.B, w = pi * std::sqrt(2 * J / F);
      const double Cx = (*a.J_x + std::abs(jp) / 4) / w;
      const double Cy = (*a.J_y + pi * checked_sqrt(2 * J * F + jm * jm / (16 * pi2), "J_y")) / w;
      Cdef = Cx + Cy;
    } else {
      // numerical inversion of the monotone maps C_x → J_x and C_y → J_y
      auto solve = [&](double target, bool isx) {
        auto act = [&](double Cv) {
          SeparationConstants k;
          k.C_alpha = a.J_alpha / (2 * pi);
          k.C_beta = a.J_beta / (2 * pi);
          const double jj = isx ? jp : jm;
          auto f = [&](double q) {
            return 2 * J * (Cv - (isx ? scn.Vx(q) : scn.Vy(q))) - jj * jj / (16 * pi2 * q * q);
          };
          try {
            return loop_action(f, 0.0, 1e4, 1.0) - target;
          } catch (const UnboundMotionError&) {
            return -target;
          }
        };
        double lo = 0.0, hi = 1.0;
        // lower bound: potential minimum makes the action vanish
        for (int i = 0; i < 200 && act(hi) < 0; ++i) hi *= 2.0;
        double flo = act(lo);
        for (int i = 0; i < 200 && flo > 0; ++i) {
          lo = lo == 0.0 ? -1.0 : lo * 2.0;
          flo = act(lo);
        }
        if (act(hi) < 0 || flo > 0) throw RootFindError("could not bracket the separation constant");
        std::uintmax_t it = 200;
        auto r = boost::math::tools::toms748_solve(act, lo, hi, boost::math::tools::eps_tolerance<double>(50), it);
        return 0.5 * (r.first + r.second);
      };
      Cdef = solve(*a.J_x, true) + solve(*a.J_y, false);
    }
  } else {
    if (!a.J_eps || !a.J_sigma) throw RegimeError("J_eps, J_sigma missing");
    const double gh = scn.potential.gamma_hat, gt = scn.potential.gamma_tilde;
    const double w = (4 * *a.J_eps + checked_sqrt(8 * J * gh * pi2 + jm * jm, "J_eps") +
                      checked_sqrt(8 * J * gh * pi2 + jp * jp, "J_eps")) /
                     (4 * pi);
    const double A = w * w / (2 * J) - gh;
    const double d = *a.J_sigma / (std::sqrt(2.0) * pi) + 2 * checked_sqrt(J * A, "J_sigma");
    if (!(d > 0) || !(gt < 0)) throw RegimeError("J_sigma outside the bound regime");
    Cdef = -J * gt * gt / (d * d);
  }
  double Er;
  if (!scn.hyperbolic()) {
    const double K = *a.J_r + 0.5 * checked_sqrt(8 * m * pi2 * R * R * g + (a.J_phi + a.J_alpha) * (a.J_phi + a.J_alpha), "J_r") +
                     0.5 * checked_sqrt(8 * m * pi2 * R * R * g + (a.J_phi - a.J_alpha) * (a.J_phi - a.J_alpha), "J_r");
    Er = (K * K - a.J_alpha * a.J_alpha) / (8 * m * pi2 * R * R);
  } else {
    const double K = -*a.J_r + 0.5 * checked_sqrt(8 * m * pi2 * g + (a.J_phi + a.J_alpha) * (a.J_phi + a.J_alpha), "J_r") -
                     0.5 * checked_sqrt(8 * m * pi2 * g + (a.J_phi - a.J_alpha) * (a.J_phi - a.J_alpha), "J_r");
    if (K < 0) throw RegimeError("J_r outside the bound regime");
    Er = -(K * K - a.J_alpha * a.J_alpha) / (8 * m * pi2 * R * R);
  }
  return Er + Cdef;
}

// ---------------------------------------------------------------------------
// Reference motions.

/// Point of the polar surface in its embedding: Euclidean R³ for the sphere, Minkowski R^{2,1} for the pseudosphere.
inline Eigen::Vector3d surface_embedding(Space2D sp, double R, const Vec& x) {
  const double r = x(0) / R, ph = x(1);
  if (sp == Space2D::Sphere) return R * Eigen::Vector3d(std::sin(r) * std::cos(ph), std::sin(r) * std::sin(ph), std::cos(r));
  return R * Eigen::Vector3d(std::sinh(r) * std::cos(ph), std::sinh(r) * std::sin(ph), std::cosh(r));
}

inline double embedding_dot(Space2D sp, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return a(0) * b(0) + a(1) * b(1) + (sp == Space2D::Sphere ? 1.0 : -1.0) * a(2) * b(2);
}

/// Chord length between two surface points; agrees with the geodesic distance to second order.
inline double surface_chord(Space2D sp, double R, const Vec& a, const Vec& b) {
  Eigen::Vector3d d = surface_embedding(sp, R, a) - surface_embedding(sp, R, b);
  return std::sqrt(std::max(0.0, embedding_dot(sp, d, d)));
}

/// Position at time t along the geodesic through x0 with velocity v0 (great circle or hyperbola).
inline Vec geodesic_reference(Space2D sp, double R, const Vec& x0, const Vec& v0, double t) {
  const double r = x0(0) / R, ph = x0(1);
  const bool sph = sp == Space2D::Sphere;
  const double s = sph ? std::sin(r) : std::sinh(r), c = sph ? std::cos(r) : std::cosh(r);
  Eigen::Vector3d P0 = surface_embedding(sp, R, x0);
  Eigen::Vector3d dr(c * std::cos(ph), c * std::sin(ph), sph ? -s : s);
  Eigen::Vector3d dphi(-R * s * std::sin(ph), R * s * std::cos(ph), 0.0);
  Eigen::Vector3d w = v0(0) * dr + v0(1) * dphi;
  const double speed = std::sqrt(std::max(0.0, embedding_dot(sp, w, w)));
  Eigen::Vector3d P = P0;
  if (speed > 0) {
    const double a = speed * t / R;
    P = sph ? Eigen::Vector3d(P0 * std::cos(a) + w / speed * R * std::sin(a))
            : Eigen::Vector3d(P0 * std::cosh(a) + w / speed * R * std::sinh(a));
  }
  Vec x(2);
  x(0) = sph ? R * std::atan2(std::hypot(P(0), P(1)), P(2)) : R * std::asinh(std::hypot(P(0), P(1)) / R);
  x(1) = ph + std::remainder(std::atan2(P(1), P(0)) - ph, 2 * kPi);
  return x;
}

struct FlatAffineMotion {
  Vec x, v;
  Mat e, edot;
};

/// Flat-space affine body with internal potential C·Tr(eᵀe) and no translational force:
/// x = x0 + v0 t, and the columns of eW oscillate at ω_A = √(2C/λ_A) where J = WΛWᵀ.
inline FlatAffineMotion flat_affine_reference(const Inertia& I, double C, const Vec& x0, const Vec& v0, const Mat& e0,
                                              const Mat& edot0, double t) {
  if (C < 0) throw RegimeError("internal stiffness must be nonnegative");
  Eigen::SelfAdjointEigenSolver<Mat> es(I.J);
  const Mat& W = es.eigenvectors();
  Mat f0 = e0 * W, fd0 = edot0 * W;
  Mat f = f0, fd = fd0;
  for (int A = 0; A < W.cols(); ++A) {
    const double w = std::sqrt(2 * C / es.eigenvalues()(A));
    if (w == 0.0) {
      f.col(A) = f0.col(A) + t * fd0.col(A);
      continue;
    }
    f.col(A) = f0.col(A) * std::cos(w * t) + fd0.col(A) * (std::sin(w * t) / w);
    fd.col(A) = -f0.col(A) * (w * std::sin(w * t)) + fd0.col(A) * std::cos(w * t);
  }
  return {x0 + t * v0, v0, f * W.transpose(), fd * W.transpose()};
}

/// C·Tr(eᵀge) as an invariant potential.
inline PotentialPtr internal_harmonic_potential(double C) {
  return std::make_shared<InvariantPotential>([=](const std::vector<ADScalar>& a) { return C * a[a.size() - 2]; });
}

}  // namespace gyro
