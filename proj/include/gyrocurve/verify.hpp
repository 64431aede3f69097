#pragma once

#include "gyrocurve/analytic2d.hpp"

#include <random>

namespace gyro {

/// Seeded generator of admissible random states.
class StateSampler {
 public:
  explicit StateSampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  std::mt19937_64& engine() { return rng_; }

  Vec normal_vec(int n, double s = 1.0) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = s * normal();
    return v;
  }
  Mat normal_mat(int n, double s = 1.0) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) m(i, k) = s * normal();
    return m;
  }

  /// Point inside the chart, away from coordinate singularities.
  Vec point(const Manifold& M) {
    const int n = M.dim();
    Vec x(n);
    const std::string nm = M.name();
    if (nm.rfind("sphere", 0) == 0 || nm.rfind("pseudosphere", 0) == 0) {
      const double R = radius_of(M);
      x(0) = nm.rfind("sphere", 0) == 0 ? uniform(0.2, 0.8 * kPi) * R : uniform(0.2, 2.0) * R;
      x(1) = uniform(-kPi, kPi);
    } else {
      for (int i = 0; i < n; ++i) x(i) = uniform(-1.0, 1.0);
    }
    return x;
  }

  /// Frame with det > 0 and moderate conditioning.
  Mat frame(int n) {
    for (;;) {
      Mat e = Mat::Identity(n, n) + normal_mat(n, 0.3);
      if (e.determinant() > 0.2) return e;
    }
  }

  Mat rotation(int n) {
    Eigen::HouseholderQR<Mat> qr(normal_mat(n));
    Mat Q = qr.householderQ();
    if (Q.determinant() < 0) Q.col(0) = -Q.col(0);
    return Q;
  }

  Mat spd(int n, double lo = 0.5) {
    Mat A = normal_mat(n, 0.4);
    return A * A.transpose() + lo * Mat::Identity(n, n);
  }

  BodyState velocity_state(const Manifold& M) {
    const int n = M.dim();
    Vec x = point(M);
    return BodyState::with_velocity(x, frame(n), normal_vec(n, 0.7), normal_mat(n, 0.5));
  }
  BodyState momentum_state(const Manifold& M) {
    const int n = M.dim();
    Vec x = point(M);
    return BodyState::with_momentum(x, frame(n), normal_vec(n, 0.7), normal_mat(n, 0.5));
  }

  /// Two-polar configuration with y > |x| and |x| bounded away from zero.
  Vec two_polar_point(const Scenario2D& scn) {
    Vec q(6);
    q(0) = scn.hyperbolic() ? uniform(0.2, 2.0) * scn.R : uniform(0.2, 0.8 * kPi) * scn.R;
    q(1) = uniform(-kPi, kPi);
    q(2) = uniform(-kPi, kPi);
    q(3) = uniform(-kPi, kPi);
    q(5) = uniform(0.5, 2.0);
    q(4) = (uniform(0, 1) < 0.5 ? -1.0 : 1.0) * uniform(0.2, 0.8) * q(5);
    return q;
  }

  static double radius_of(const Manifold& M) {
    if (auto* p = dynamic_cast<const PolarSurface*>(&M)) return p->radius();
    if (auto* rc = dynamic_cast<const RiemannCartan*>(&M)) return radius_of(rc->base());
    return 1.0;
  }

 private:
  std::mt19937_64 rng_;
};

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  int cases = 0;
  std::string note;
  bool passed() const { return residual <= tolerance; }
};

inline double scaled_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }
inline double scaled_error(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

/// Closed-form brackets against canonical brackets of the chain-rule gradients, every pair of components.
inline CheckResult check_brackets(const Manifold& M, int samples, StateSampler& rs, BracketOptions opt = {}) {
  CheckResult r{"brackets closed form vs canonical", 0.0, 1e-9, 0, ""};
  const auto obs = all_observables(M.dim());
  for (int k = 0; k < samples; ++k) {
    BodyState s = rs.momentum_state(M);
    BracketTable tab(s, M, opt);
    std::vector<PhaseGradient> grads;
    for (const auto& o : obs) grads.push_back(observable_gradient(o, s, M));
    for (std::size_t a = 0; a < obs.size(); ++a)
      for (std::size_t b = 0; b < obs.size(); ++b) {
        r.residual = std::max(r.residual, scaled_error(tab(obs[a], obs[b]), canonical_bracket(grads[a], grads[b])));
        ++r.cases;
      }
  }
  return r;
}

inline CheckResult check_jacobi(const Manifold& M, int samples, StateSampler& rs) {
  CheckResult r{"Jacobi identity", 0.0, 1e-8, 0, ""};
  const auto obs = all_observables(M.dim());
  const int N = static_cast<int>(obs.size());
  for (int k = 0; k < samples; ++k) {
    BodyState s = rs.momentum_state(M);
    const Observable& f = obs[static_cast<std::size_t>(rs.index(N))];
    const Observable& g = obs[static_cast<std::size_t>(rs.index(N))];
    const Observable& h = obs[static_cast<std::size_t>(rs.index(N))];
    r.residual = std::max(r.residual, std::abs(jacobi_residual(f, g, h, s, M)));
    ++r.cases;
  }
  return r;
}

inline CheckResult check_legendre(const Manifold& M, const Inertia& I, int samples, StateSampler& rs) {
  CheckResult r{"Legendre round trip", 0.0, 1e-10, 0, ""};
  for (int k = 0; k < samples; ++k) {
    BodyState s = rs.velocity_state(M);
    BodyState b = inverse_legendre(legendre(s, I, M), I, M);
    r.residual = std::max(r.residual, scaled_error(s.velocity().edot, b.velocity().edot));
    r.residual = std::max(r.residual, scaled_error(Mat(s.velocity().v), Mat(b.velocity().v)));
    ++r.cases;
  }
  return r;
}

/// |g(F_geom, v)| / (|F_geom||v|): the spin–curvature force does no work.
inline CheckResult check_force_power(const Manifold& M, const Inertia& I, int samples, StateSampler& rs) {
  CheckResult r{"spin-curvature force power", 0.0, 1e-11, 0, ""};
  for (int k = 0; k < samples; ++k) {
    BodyState s = rs.velocity_state(M);
    ForceSnapshot F = ForceSnapshot::zero(M.dim());
    BalanceRates br = eom_riemann_cartan(s, I, F, M);
    Mat g = M.metric(s.x);
    const Vec& v = s.velocity().v;
    const double nf = std::sqrt(br.F_geom.dot(g * br.F_geom)), nv = std::sqrt(v.dot(g * v));
    if (nf * nv > 0) r.residual = std::max(r.residual, std::abs(br.F_geom.dot(g * v)) / (nf * nv));
    ++r.cases;
  }
  return r;
}

struct TransformReport {
  double green_isometry = 0, cauchy_orthogonal = 0, sigmahat_spatial = 0, sigma_material = 0;
  double spatial_predictions = 0, material_predictions = 0;
  int cases = 0;
  double max() const {
    return std::max({green_isometry, cauchy_orthogonal, sigmahat_spatial, sigma_material, spatial_predictions,
                     material_predictions});
  }
};

/// Transformation laws: invariants that must not move, and predicted quantities against recomputation.
inline TransformReport check_transformations(const Manifold& M, int cases, StateSampler& rs) {
  TransformReport rep;
  const int n = M.dim();
  auto chart_partials = [&](double s) {
    std::vector<Mat> d;
    for (int k = 0; k < n; ++k) d.push_back(rs.normal_mat(n, s));
    return d;
  };
  for (int c = 0; c < cases; ++c) {
    // spatial: general T for predictions, g-orthogonal T for the Green invariance
    BodyState vs = rs.velocity_state(M);
    BodyState ms = BodyState::with_momentum(vs.x, vs.e, rs.normal_vec(n, 0.7), rs.normal_mat(n, 0.5));
    Mat g = M.metric(vs.x);
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    Mat gh = es.operatorSqrt(), ghi = es.operatorInverseSqrt();
    SpatialMap Tiso{ghi * rs.rotation(n) * gh, chart_partials(0.3)};
    SpatialMap Tgen{rs.frame(n), chart_partials(0.3)};

    Mat G0 = deformation(vs, M).Green;
    rep.green_isometry = std::max(rep.green_isometry, scaled_error(G0, deformation(transform_spatial(vs, Tiso, M).state, M).Green));

    for (const SpatialMap* T : {&Tiso, &Tgen}) {
      TransformPrediction pv = transform_spatial(vs, *T, M);
      KinematicSnapshot k2 = kinematic_snapshot(pv.state, M);
      rep.spatial_predictions = std::max({rep.spatial_predictions, scaled_error(*pv.Omega, k2.Omega),
                                          scaled_error(*pv.OmegaHat, k2.OmegaHat)});
      TransformPrediction pm = transform_spatial(ms, *T, M);
      MomentumSnapshot m0 = momentum_snapshot(ms, M), m2 = momentum_snapshot(pm.state, M);
      rep.sigmahat_spatial = std::max(rep.sigmahat_spatial, scaled_error(m0.SigmaHat, m2.SigmaHat));
      rep.spatial_predictions = std::max({rep.spatial_predictions, scaled_error(*pm.Sigma, m2.Sigma),
                                          scaled_error(Mat(*pm.P_cov), Mat(m2.P_cov))});
    }

    // material: general L for predictions, orthogonal L for the Cauchy invariance
    MaterialMap Lrot{rs.rotation(n), chart_partials(0.3)};
    MaterialMap Lgen{rs.frame(n), chart_partials(0.3)};
    Mat C0 = deformation(vs, M).Cauchy;
    rep.cauchy_orthogonal =
        std::max(rep.cauchy_orthogonal, scaled_error(C0, deformation(transform_material(vs, Lrot, M).state, M).Cauchy));
    for (const MaterialMap* L : {&Lrot, &Lgen}) {
      TransformPrediction pv = transform_material(vs, *L, M);
      KinematicSnapshot k2 = kinematic_snapshot(pv.state, M);
      rep.material_predictions = std::max({rep.material_predictions, scaled_error(*pv.Omega, k2.Omega),
                                           scaled_error(*pv.OmegaHat, k2.OmegaHat)});
      TransformPrediction pm = transform_material(ms, *L, M);
      MomentumSnapshot m0 = momentum_snapshot(ms, M), m2 = momentum_snapshot(pm.state, M);
      rep.sigma_material = std::max(rep.sigma_material, scaled_error(m0.Sigma, m2.Sigma));
      rep.material_predictions = std::max({rep.material_predictions, scaled_error(*pm.SigmaHat, m2.SigmaHat),
                                           scaled_error(Mat(*pm.P_cov), Mat(m2.P_cov))});
    }
    ++rep.cases;
  }
  return rep;
}

struct DecompositionReport {
  double reconstruction = 0, polar = 0, green_spectral = 0, cauchy_spectral = 0, orthogonality = 0;
  int cases = 0;
  double max() const { return std::max({reconstruction, polar, green_spectral, cauchy_spectral, orthogonality}); }
};

/// L = U D V⁻¹ = O·Sym = SigmaSym·O, with G = Lᵀ L = V D² Vᵀ and C = L⁻ᵀ L⁻¹ = U D⁻² Uᵀ.
inline DecompositionReport check_decompositions(int n, int cases, StateSampler& rs) {
  DecompositionReport rep;
  const Mat Id = Mat::Identity(n, n);
  for (int c = 0; c < cases; ++c) {
    Mat L = rs.frame(n);
    if (c % 5 == 4) L = rs.rotation(n) * (1.0 + 0.5 * rs.uniform(0, 1));  // repeated singular values
    Decomposition d = decompose(L);
    rep.reconstruction = std::max(rep.reconstruction, scaled_error(L, Mat(d.U * d.D * d.V.transpose())));
    rep.polar = std::max({rep.polar, scaled_error(L, Mat(d.O * d.Sym)), scaled_error(L, Mat(d.SigmaSym * d.O))});
    Deformation def = deformation(L, Id, Id);
    rep.green_spectral = std::max(rep.green_spectral, scaled_error(def.Green, Mat(d.V * d.D * d.D * d.V.transpose())));
    Mat Dm2 = d.D.diagonal().cwiseInverse().cwiseAbs2().asDiagonal();
    rep.cauchy_spectral = std::max(rep.cauchy_spectral, scaled_error(def.Cauchy, Mat(d.U * Dm2 * d.U.transpose())));
    rep.orthogonality = std::max({rep.orthogonality, scaled_error(Mat(d.U.transpose() * d.U), Id),
                                  scaled_error(Mat(d.V.transpose() * d.V), Id), std::abs(d.U.determinant() - 1.0),
                                  std::abs(d.V.determinant() - 1.0)});
    ++rep.cases;
  }
  return rep;
}

/// Two-polar Hamiltonian against the generic kinetic Hamiltonian plus potential at the bridged momentum state.
inline CheckResult check_bridge_hamiltonian(const Scenario2D& scn, int samples, StateSampler& rs) {
  CheckResult r{"two-polar Hamiltonian vs generic", 0.0, 1e-10, 0, ""};
  DynamicsModel model = make_model(scn);
  for (int k = 0; k < samples; ++k) {
    Vec q = rs.two_polar_point(scn);
    Vec p = rs.normal_vec(6, 0.5);
    BodyState ms = bridge_momentum_state(scn, q, p);
    const double Hg = kinetic_hamiltonian(ms, model.inertia, model.space()) + model.potential_energy(ms);
    r.residual = std::max(r.residual, scaled_error(hamiltonian_2d(scn, q, p), Hg));
    ++r.cases;
  }
  return r;
}

struct AdmissibleSample {
  Vec q, p;
  SeparationConstants k;
};

/// Separation constants of a random bound phase point; rejects points outside the closed-form regime.
inline AdmissibleSample sample_admissible_constants(const Scenario2D& scn, StateSampler& rs, int max_tries = 10000) {
  const bool polar = scn.potential.family == DeformationFamily::SeparablePolar;
  for (int t = 0; t < max_tries; ++t) {
    Vec q(6), p(6);
    const double y = rs.uniform(0.6, 1.4);
    q << rs.uniform(0.6, scn.hyperbolic() ? 1.8 : 2.4) * scn.R, rs.uniform(-kPi, kPi), rs.uniform(-kPi, kPi),
        rs.uniform(-kPi, kPi), rs.uniform(0.15, 0.6) * y, y;
    const double pa = rs.uniform(0.2, 0.6), pb = rs.uniform(-0.3, 0.3);
    p << rs.uniform(-0.2, 0.2), rs.uniform(1.2, 2.0) * pa, 0.5 * (pa + pb), 0.5 * (pa - pb), rs.uniform(-0.1, 0.1),
        rs.uniform(-0.1, 0.1);
    if (polar) {
      p(2) = rs.uniform(0.05, 0.25);
      p(3) = rs.uniform(0.6, 1.0);
      p(1) = rs.uniform(1.2, 2.0) * (p(2) + p(3));
    }
    SeparatedQuantities d = separated_quantities(scn, q, p);
    AdmissibleSample out{q, p, {}};
    out.k.E = hamiltonian_2d(scn, q, p);
    out.k.l = d.p_phi;
    out.k.C_alpha = d.p_alpha;
    out.k.C_beta = d.p_beta;
    out.k.C_x = d.C_x;
    out.k.C_y = d.C_y;
    out.k.C = d.C_def;
    out.k.A = d.A_sep;
    try {
      closed_form_actions(scn, out.k);
      action_variables_quadrature(scn, out.k);
    } catch (const Error&) {
      continue;
    }
    return out;
  }
  throw RegimeError("no admissible separation constants found");
}

/// Largest relative difference between closed-form and quadrature actions.
inline double action_discrepancy(const ActionSet& cf, const ActionSet& q) {
  double rel = 0.0;
  auto cmp = [&](double a, double b) { rel = std::max(rel, std::abs(a - b) / std::max(1e-12, std::abs(b))); };
  cmp(cf.J_phi, q.J_phi);
  cmp(cf.J_alpha, q.J_alpha);
  cmp(cf.J_beta, q.J_beta);
  for (auto [a, b] : {std::pair{cf.J_r, q.J_r}, {cf.J_x, q.J_x}, {cf.J_y, q.J_y}, {cf.J_eps, q.J_eps}, {cf.J_sigma, q.J_sigma}}) {
    if (a.has_value() != b.has_value()) return std::numeric_limits<double>::infinity();
    if (a) cmp(*a, *b);
  }
  return rel;
}

}  // namespace gyro
