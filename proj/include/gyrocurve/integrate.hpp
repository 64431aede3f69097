#pragma once

#include "gyrocurve/dynamics.hpp"

#include <cmath>

namespace gyro {

/// Everything the rate function needs: space, inertia and loads.
struct DynamicsModel {
  ManifoldPtr manifold;
  Inertia inertia;
  PotentialPtr potential = std::make_shared<ZeroPotential>();
  double damping_translational = 0.0;
  double damping_internal = 0.0;
  /// Optional non-potential load evaluated on the velocity state.
  std::function<ForceSnapshot(const BodyState&, const Manifold&)> extra_force;
  /// Use the balance laws for independent metric and connection.
  bool general_connection = false;

  const Manifold& space() const { return *manifold; }

  ForceSnapshot forces(const BodyState& s) const {
    ForceSnapshot f = forces_from_potential(*potential, s, *manifold);
    if (damping_translational != 0.0 || damping_internal != 0.0)
      f += viscous_forces(s, damping_translational, damping_internal, *manifold);
    if (extra_force) f += extra_force(s, *manifold);
    return f;
  }

  double potential_energy(const BodyState& s) const { return potential->value(*manifold, s.x, s.e); }
  double energy(const BodyState& s) const { return kinetic_energy(s, inertia, *manifold) + potential_energy(s); }
};

enum class IntegrationMethod { RK4, ImplicitMidpoint };

struct IntegratorConfig {
  IntegrationMethod method = IntegrationMethod::RK4;
  double dt = 1e-3;
  double t_end = 1.0;
  int stride = 1;
  ConstraintKind constraint = ConstraintKind::None;
  double constraint_tol = 1e-6;
  bool retraction = true;
  int max_iterations = 100;
  double implicit_tol = 1e-14;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw SchemaError("integrator.dt must be positive");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw SchemaError("integrator.t_end must be positive");
    if (stride < 1) throw SchemaError("integrator.stride must be at least 1");
    if (!(constraint_tol > 0.0)) throw SchemaError("integrator.constraint_tol must be positive");
  }
  long steps() const { return static_cast<long>(std::floor(t_end / dt + 1e-9)); }
};

/// First-order layout y = (x, v, vec e, vec V), column-major blocks.
struct PhaseLayout {
  int n;
  int size() const { return 2 * n + 2 * n * n; }

  Vec pack(const Vec& x, const Vec& v, const Mat& e, const Mat& V) const {
    Vec y(size());
    y.segment(0, n) = x;
    y.segment(n, n) = v;
    y.segment(2 * n, n * n) = Eigen::Map<const Vec>(e.data(), n * n);
    y.segment(2 * n + n * n, n * n) = Eigen::Map<const Vec>(V.data(), n * n);
    return y;
  }
  Vec x(const Vec& y) const { return y.segment(0, n); }
  Vec v(const Vec& y) const { return y.segment(n, n); }
  Mat e(const Vec& y) const { return Eigen::Map<const Mat>(y.data() + 2 * n, n, n); }
  Mat V(const Vec& y) const { return Eigen::Map<const Mat>(y.data() + 2 * n + n * n, n, n); }
};

/// Velocity state from (x, v, e, V), inverting V = ė + Γ(v) e.
inline BodyState state_from_phase(const PhaseLayout& L, const Vec& y, const Manifold& M) {
  Vec x = L.x(y), v = L.v(y);
  Mat e = L.e(y), V = L.V(y);
  M.require_domain(x);
  Mat edot = V - connection_matrix(M.connection(x), v) * e;
  return BodyState::with_velocity(x, e, v, edot);
}

inline Vec phase_from_state(const BodyState& s, const Manifold& M) {
  PhaseLayout L{s.dim()};
  return L.pack(s.x, s.velocity().v, s.e, internal_velocity(s, M));
}

/// Forces after the constraint filter, with the ideal reaction added to Q.
inline ForceSnapshot constrained_forces(const DynamicsModel& model, const BodyState& s, ConstraintKind c) {
  ForceSnapshot f = model.forces(s);
  if (c == ConstraintKind::None) return f;
  const Manifold& M = model.space();
  if (!M.metric_compatible()) throw MetricityError("constraints need a metric-compatible connection");
  Mat g = M.metric(s.x);
  ForceSnapshot eff = project_constraint(c, f, s.e, g);
  Mat V = internal_velocity(s, M);
  Mat QR = constraint_reaction(c, s.e, g, V, eff.Q, model.inertia);
  return make_forces(eff.F_cov, eff.Q + QR, s.e);
}

/// Time derivative of the first-order phase vector.
inline Vec phase_rates(const DynamicsModel& model, const Vec& y, ConstraintKind c) {
  const Manifold& M = model.space();
  PhaseLayout L{M.dim()};
  BodyState s = state_from_phase(L, y, M);
  ForceSnapshot f = constrained_forces(model, s, c);
  BalanceRates r = model.general_connection ? eom_general(s, model.inertia, f, M)
                                            : eom_riemann_cartan(s, model.inertia, f, M);
  Tensor3 G = M.connection(s.x);
  const Vec& v = s.velocity().v;
  Mat Gv = connection_matrix(G, v);
  Mat V = L.V(y);
  Vec vdot = r.Dv - contract_connection(G, v, v);
  Mat Vdot = r.DV - Gv * V;
  return L.pack(v, vdot, s.velocity().edot, Vdot);
}

/// e ← e (eᵀ g e)^{-1/2}; the co-moving velocity is projected onto its skew part.
inline Vec retract_gyroscopic(const Vec& y, const Manifold& M) {
  PhaseLayout L{M.dim()};
  Vec x = L.x(y);
  Mat e = L.e(y), V = L.V(y);
  Mat g = M.metric(x);
  Eigen::SelfAdjointEigenSolver<Mat> es(e.transpose() * g * e);
  Mat isqrt = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
              es.eigenvectors().transpose();
  Mat e2 = e * isqrt;
  Mat Oh = invert_frame(e2) * V;
  Mat V2 = e2 * (0.5 * (Oh - Oh.transpose()));
  return L.pack(x, L.v(y), e2, V2);
}

inline Vec integrator_step(const DynamicsModel& model, const Vec& y, double t, const IntegratorConfig& cfg,
                           double dt) {
  auto f = [&](const Vec& z) {
    try {
      Vec r = phase_rates(model, z, cfg.constraint);
      if (!r.allFinite()) throw StepFailure("non-finite rates", t);
      return r;
    } catch (const StepFailure&) {
      throw;
    } catch (const std::exception& ex) {
      throw StepFailure(ex.what(), t);
    }
  };
  Vec out;
  if (cfg.method == IntegrationMethod::RK4) {
    Vec k1 = f(y);
    Vec k2 = f(y + 0.5 * dt * k1);
    Vec k3 = f(y + 0.5 * dt * k2);
    Vec k4 = f(y + dt * k3);
    out = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  } else {
    Vec y1 = y + dt * f(y);
    bool converged = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      Vec next = y + dt * f(0.5 * (y + y1));
      double diff = (next - y1).cwiseAbs().maxCoeff();
      y1 = next;
      if (diff <= cfg.implicit_tol * (1.0 + y1.cwiseAbs().maxCoeff())) {
        converged = true;
        break;
      }
    }
    if (!converged) throw StepFailure("implicit midpoint iteration did not converge", t);
    out = y1;
  }
  if (!out.allFinite()) throw StepFailure("non-finite state after step", t);
  if (cfg.constraint == ConstraintKind::Gyroscopic && cfg.retraction) {
    try {
      out = retract_gyroscopic(out, model.space());
    } catch (const std::exception& ex) {
      throw StepFailure(ex.what(), t);
    }
  }
  return out;
}

/// One step of the configured method from a velocity state.
inline BodyState step(const DynamicsModel& model, const BodyState& s, double t, const IntegratorConfig& cfg) {
  const Manifold& M = model.space();
  Vec y = integrator_step(model, phase_from_state(s, M), t, cfg, cfg.dt);
  return state_from_phase(PhaseLayout{M.dim()}, y, M);
}

/// Named scalar evaluated on each sample.
struct MonitoredObservable {
  std::string name;
  std::function<double(const BodyState&)> eval;
};

struct TrajectorySample {
  double t;
  BodyState state;
  Mat OmegaHat;
  Vec invariants;
  double energy;
  double constraint_residual;
  std::vector<double> observables;
};

struct TrajectoryRecord {
  std::vector<std::string> observable_names;
  std::vector<TrajectorySample> samples;
  long steps = 0;

  /// Column of one monitored observable.
  std::vector<double> series(const std::string& name) const {
    auto it = std::find(observable_names.begin(), observable_names.end(), name);
    if (it == observable_names.end()) throw UnknownObservableError("trajectory has no observable '" + name + "'");
    const auto idx = static_cast<std::size_t>(it - observable_names.begin());
    std::vector<double> out;
    for (const auto& s : samples) out.push_back(s.observables[idx]);
    return out;
  }
  bool has(const std::string& name) const {
    return std::find(observable_names.begin(), observable_names.end(), name) != observable_names.end();
  }
};

/// max |q(t) − q(0)| / max(|q(0)|, floor)
inline double relative_drift(const std::vector<double>& q, double floor = 1e-300) {
  if (q.empty()) return 0.0;
  double ref = std::max(std::abs(q.front()), floor);
  double worst = 0.0;
  for (double v : q) worst = std::max(worst, std::abs(v - q.front()));
  return worst / ref;
}

inline TrajectorySample make_sample(const DynamicsModel& model, const BodyState& s, double t,
                                    const IntegratorConfig& cfg, const std::vector<MonitoredObservable>& obs) {
  const Manifold& M = model.space();
  KinematicSnapshot k = kinematic_snapshot(s, M);
  Mat g = M.metric(s.x);
  double res = std::max(constraint_residual(cfg.constraint, s.e, g),
                        constraint_velocity_residual(cfg.constraint, k.OmegaHat));
  std::vector<double> values;
  for (const auto& o : obs) values.push_back(o.eval(s));
  return {t, s, k.OmegaHat, k.def.invariants, model.energy(s), res, values};
}

/// Integrates from t = 0 to t_end, keeping every stride-th state.
inline TrajectoryRecord run(const DynamicsModel& model, const BodyState& initial, const IntegratorConfig& cfg,
                            const std::vector<MonitoredObservable>& observables = {}) {
  cfg.validate();
  model.inertia.validate();
  const Manifold& M = model.space();
  if (!initial.has_velocity()) throw SchemaError("initial state must carry velocities; apply inverse_legendre first");
  M.require_domain(initial.x);
  if (cfg.constraint == ConstraintKind::Gyroscopic) {
    double r = constraint_residual(cfg.constraint, initial.e, M.metric(initial.x));
    if (r > cfg.constraint_tol) throw ConstraintViolationError("initial frame violates e^T g e = 1 by " + std::to_string(r));
  }
  TrajectoryRecord rec;
  for (const auto& o : observables) rec.observable_names.push_back(o.name);
  PhaseLayout L{M.dim()};
  Vec y = phase_from_state(initial, M);
  const long n = cfg.steps();
  rec.samples.reserve(static_cast<std::size_t>(n / cfg.stride + 1));
  rec.samples.push_back(make_sample(model, initial, 0.0, cfg, observables));
  for (long i = 1; i <= n; ++i) {
    const double t0 = static_cast<double>(i - 1) * cfg.dt;
    y = integrator_step(model, y, t0, cfg, cfg.dt);
    if (i % cfg.stride == 0) {
      const double t = static_cast<double>(i) * cfg.dt;
      try {
        BodyState s = state_from_phase(L, y, M);
        rec.samples.push_back(make_sample(model, s, t, cfg, observables));
        if (cfg.constraint != ConstraintKind::None && rec.samples.back().constraint_residual > cfg.constraint_tol)
          throw ConstraintViolationError("constraint residual " + std::to_string(rec.samples.back().constraint_residual) +
                                         " exceeds tolerance");
      } catch (const StepFailure&) {
        throw;
      } catch (const std::exception& ex) {
        throw StepFailure(ex.what(), t);
      }
    }
  }
  rec.steps = n;
  return rec;
}

/// Integrates a phase vector over a number of steps with a signed step size (for reversibility checks).
inline BodyState integrate_steps(const DynamicsModel& model, const BodyState& s, long steps, double dt,
                                 const IntegratorConfig& cfg) {
  const Manifold& M = model.space();
  Vec y = phase_from_state(s, M);
  for (long i = 0; i < steps; ++i) y = integrator_step(model, y, static_cast<double>(i) * dt, cfg, dt);
  return state_from_phase(PhaseLayout{M.dim()}, y, M);
}

/// Built-in observables: energy, x_i, v_i, Sigma_ij (upper), PHat_A, p_i (canonical).
inline MonitoredObservable builtin_observable(const std::string& name, const DynamicsModel& model) {
  const Manifold* M = model.manifold.get();
  const Inertia I = model.inertia;
  const int n = M->dim();
  auto index = [&](const std::string& prefix, int count) -> std::vector<int> {
    if (name.rfind(prefix, 0) != 0) return {};
    std::string rest = name.substr(prefix.size());
    std::vector<int> idx;
    std::size_t pos = 0;
    while (pos <= rest.size() && static_cast<int>(idx.size()) < count) {
      std::size_t c = rest.find('_', pos);
      std::string tok = rest.substr(pos, c == std::string::npos ? std::string::npos : c - pos);
      if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) return {};
      int k = std::stoi(tok);
      if (k < 0 || k >= n) return {};
      idx.push_back(k);
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (static_cast<int>(idx.size()) != count) return {};
    return idx;
  };
  if (name == "energy") return {name, [model](const BodyState& s) { return model.energy(s); }};
  if (name == "kinetic") return {name, [M, I](const BodyState& s) { return kinetic_energy(s, I, *M); }};
  if (auto k = index("x_", 1); !k.empty()) return {name, [k](const BodyState& s) { return s.x(k[0]); }};
  if (auto k = index("v_", 1); !k.empty()) return {name, [k](const BodyState& s) { return s.velocity().v(k[0]); }};
  if (auto k = index("p_", 1); !k.empty())
    return {name, [k, M, I](const BodyState& s) { return legendre(s, I, *M).momentum().p(k[0]); }};
  if (auto k = index("PHat_", 1); !k.empty())
    return {name, [k, M, I](const BodyState& s) { return momentum_snapshot(legendre(s, I, *M), *M).Phat(k[0]); }};
  if (auto k = index("Sigma_", 2); !k.empty())
    return {name, [k, M, I](const BodyState& s) {
              Mat g = M->metric(s.x);
              Mat Sig = momentum_snapshot(legendre(s, I, *M), *M).Sigma;
              return (Sig * g.inverse())(k[0], k[1]);
            }};
  throw UnknownObservableError("unknown observable '" + name + "'");
}

}  // namespace gyro
