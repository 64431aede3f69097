#include "gyrocurve/cli.hpp"

#include <gtest/gtest.h>

using namespace gyro;

namespace {

struct Loaded {
  ScenarioConfig cfg;
  DynamicsModel model;
  BodyState initial;
  IntegratorConfig integ;
};

Loaded load(const std::string& name) {
  Loaded l;
  l.cfg = cli::load_config_file(std::string(GYRO_SCENARIO_DIR) + "/" + name + ".json");
  l.model = build_model(l.cfg);
  l.initial = build_initial_state(l.cfg, l.model);
  l.integ = build_integrator(l.cfg);
  return l;
}

double phase_distance(const BodyState& a, const BodyState& b, const Manifold& M) {
  return (phase_from_state(a, M) - phase_from_state(b, M)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Integrator, EnergyConservedOnSphere) {
  Loaded l = load("sphere_spin");
  TrajectoryRecord rec = run(l.model, l.initial, l.integ, {builtin_observable("energy", l.model)});
  EXPECT_EQ(rec.steps, 10000);
  EXPECT_LT(relative_drift(rec.series("energy")), 1e-9);
}

TEST(Integrator, RungeKuttaIsFourthOrder) {
  Loaded l = load("sphere_spin");
  const Manifold& M = l.model.space();
  IntegratorConfig c = l.integ;
  auto at = [&](double dt) { return integrate_steps(l.model, l.initial, std::lround(1.0 / dt), dt, c); };
  BodyState ref = at(0.00125);
  const double e1 = phase_distance(at(0.02), ref, M), e2 = phase_distance(at(0.01), ref, M);
  EXPECT_NEAR(e1 / e2, 16.0, 3.2);
}

TEST(Integrator, ImplicitMidpointIsReversible) {
  Loaded l = load("sphere_spin");
  IntegratorConfig c = l.integ;
  c.method = IntegrationMethod::ImplicitMidpoint;
  BodyState fwd = integrate_steps(l.model, l.initial, 200, 0.01, c);
  BodyState back = integrate_steps(l.model, fwd, 200, -0.01, c);
  EXPECT_LT(phase_distance(back, l.initial, l.model.space()), 1e-7);
}

TEST(Integrator, ImplicitMidpointEnergyBounded) {
  Loaded l = load("sphere_spin");
  IntegratorConfig c = l.integ;
  c.method = IntegrationMethod::ImplicitMidpoint;
  c.dt = 0.01;
  c.t_end = 20.0;
  c.stride = 10;
  TrajectoryRecord rec = run(l.model, l.initial, c, {builtin_observable("energy", l.model)});
  EXPECT_LT(relative_drift(rec.series("energy")), 1e-3);
}

TEST(Integrator, GyroscopicConstraintMaintained) {
  Loaded l = load("sphere_free_gyro");
  ASSERT_EQ(l.integ.constraint, ConstraintKind::Gyroscopic);
  TrajectoryRecord rec = run(l.model, l.initial, l.integ, {builtin_observable("energy", l.model)});
  double worst = 0.0;
  for (const auto& s : rec.samples) worst = std::max(worst, s.constraint_residual);
  EXPECT_LT(worst, 1e-7);
  EXPECT_LT(relative_drift(rec.series("energy")), 1e-8);
}

TEST(Integrator, GyroscopicWithoutRetractionStaysClose) {
  Loaded l = load("sphere_free_gyro");
  IntegratorConfig c = l.integ;
  c.retraction = false;
  c.t_end = 1.0;
  TrajectoryRecord rec = run(l.model, l.initial, c);
  for (const auto& s : rec.samples) EXPECT_LT(s.constraint_residual, 1e-7);
}

TEST(Integrator, StrideControlsSampleCount) {
  Loaded l = load("flat_reduction");
  IntegratorConfig c = l.integ;
  c.dt = 0.01;
  c.t_end = 1.0;
  c.stride = 7;
  TrajectoryRecord rec = run(l.model, l.initial, c);
  EXPECT_EQ(rec.steps, 100);
  EXPECT_EQ(rec.samples.size(), 1u + 100u / 7u);
  EXPECT_NEAR(rec.samples.back().t, 0.98, 1e-12);
}

TEST(Integrator, InvalidSettingsRejected) {
  Loaded l = load("flat_reduction");
  IntegratorConfig c = l.integ;
  c.dt = -1.0;
  EXPECT_THROW(run(l.model, l.initial, c), SchemaError);
  c = l.integ;
  c.stride = 0;
  EXPECT_THROW(run(l.model, l.initial, c), SchemaError);
  BodyState mom = legendre(l.initial, l.model.inertia, l.model.space());
  EXPECT_THROW(run(l.model, mom, l.integ), SchemaError);
}

TEST(Integrator, NonOrthonormalInitialFrameViolatesConstraint) {
  Loaded l = load("sphere_free_gyro");
  BodyState s = l.initial;
  s.e *= 1.1;
  EXPECT_THROW(run(l.model, s, l.integ), ConstraintViolationError);
}

TEST(Integrator, StepFailureReportsTime) {
  // a free particle heading straight at the chart pole
  DynamicsModel m{std::make_shared<Sphere2>(1.0), Inertia(1.0, Mat::Identity(2, 2))};
  Vec x(2), v(2);
  x << 0.5, 0.0;
  v << -1.0, 0.0;
  PolarOrthonormalFrame F(1.0, false);
  Mat e = F.frame(x);
  Mat edot = -connection_matrix(m.manifold->connection(x), v) * e;
  IntegratorConfig c;
  c.dt = 0.01;
  c.t_end = 2.0;
  try {
    run(m, BodyState::with_velocity(x, e, v, edot), c);
    FAIL() << "expected StepFailure";
  } catch (const StepFailure& ex) {
    EXPECT_GT(ex.time, 0.3);
    EXPECT_LT(ex.time, 0.6);
  }
}

TEST(Integrator, UnknownObservableRejected) {
  Loaded l = load("flat_reduction");
  EXPECT_THROW(builtin_observable("spin_energy", l.model), UnknownObservableError);
  EXPECT_THROW(builtin_observable("x_7", l.model), UnknownObservableError);
  TrajectoryRecord rec;
  EXPECT_THROW(rec.series("energy"), UnknownObservableError);
}

TEST(Integrator, DampingDissipatesEnergy) {
  Loaded l = load("viscous_damping_demo");
  TrajectoryRecord rec = run(l.model, l.initial, l.integ, {builtin_observable("energy", l.model)});
  auto E = rec.series("energy");
  for (std::size_t i = 1; i < E.size(); ++i) EXPECT_LE(E[i], E[i - 1] + 1e-12);
  EXPECT_LT(E.back(), 0.9 * E.front());
}

TEST(Integrator, FlatFreeBodyKeepsLinearMomentum) {
  DynamicsModel m{std::make_shared<FlatSpace>(3), Inertia(2.0, Mat::Identity(3, 3))};
  m.potential = internal_harmonic_potential(0.7);
  StateSampler rs(5);
  BodyState s = rs.velocity_state(m.space());
  IntegratorConfig c;
  c.dt = 0.01;
  c.t_end = 5.0;
  c.stride = 50;
  std::vector<MonitoredObservable> obs;
  for (int i = 0; i < 3; ++i) obs.push_back(builtin_observable("p_" + std::to_string(i), m));
  TrajectoryRecord rec = run(m, s, c, obs);
  for (int i = 0; i < 3; ++i) {
    auto p = rec.series("p_" + std::to_string(i));
    for (double q : p) EXPECT_NEAR(q, p.front(), 1e-12);
  }
}
