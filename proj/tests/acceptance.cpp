// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include "gyrocurve/cli.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace gyro;

namespace {

using Clock = std::chrono::steady_clock;

ScenarioConfig scenario(const std::string& name) {
  return cli::load_config_file(std::string(GYRO_SCENARIO_DIR) + "/" + name + ".json");
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string sci(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2e", v);
  return b;
}

std::vector<ManifoldPtr> bracket_spaces() {
  return {std::make_shared<Sphere2>(1.3), std::make_shared<Pseudosphere2>(0.8), std::make_shared<FlatSpace>(2)};
}

Scenario2D family(Space2D sp, Potential2D pot) {
  Scenario2D s;
  s.space = sp;
  s.R = 1.0;
  s.m = 1.0;
  s.J = 0.5;
  s.potential = pot;
  return s;
}

Outcome action_oracle() {
  const auto t0 = Clock::now();
  struct Fam {
    const char* name;
    Scenario2D scn;
  };
  const std::vector<Fam> fams{
      {"radial sphere", family(Space2D::Sphere, Potential2D::harmonic(2.0, 0.05))},
      {"free sphere", family(Space2D::Sphere, Potential2D::harmonic(2.0, 0.0))},
      {"harmonic pseudosphere", family(Space2D::Pseudosphere, Potential2D::harmonic(2.0, 0.05))},
      {"polar", family(Space2D::Sphere, Potential2D::polar(-2.0, 0.05, 0.05))},
  };
  StateSampler rs(101);
  double worst = 0.0;
  int sets = 0;
  for (const auto& f : fams) {
    for (int k = 0; k < 20; ++k) {
      AdmissibleSample a = sample_admissible_constants(f.scn, rs);
      worst = std::max(worst, action_discrepancy(closed_form_actions(f.scn, a.k), action_variables_quadrature(f.scn, a.k)));
      ++sets;
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst < 1e-6 && secs < 30.0,
          "max relative difference " + sci(worst) + " over " + std::to_string(sets) + " sets in " + sci(secs) + " s"};
}

Outcome mass_matrix_equivalence() {
  StateSampler rs(102);
  double worst = 0.0;
  for (Space2D sp : {Space2D::Sphere, Space2D::Pseudosphere})
    worst = std::max(worst, check_bridge_hamiltonian(family(sp, Potential2D::harmonic(2.0, 0.05)), 100, rs).residual);
  return {worst < 1e-10, "residual " + sci(worst) + " over 2 x 100 states"};
}

Outcome bracket_algebra() {
  StateSampler rs(103);
  double br = 0.0, jac = 0.0;
  for (const auto& M : bracket_spaces()) {
    br = std::max(br, check_brackets(*M, 50, rs).residual);
    jac = std::max(jac, check_jacobi(*M, 10, rs).residual);
  }
  // flat plane: {Σ^i_j, Σ^k_l} = δ^i_l Σ^k_j − δ^k_j Σ^i_l
  FlatSpace F(2);
  double flat = 0.0;
  for (int t = 0; t < 50; ++t) {
    BodyState s = rs.momentum_state(F);
    BracketTable tab(s, F);
    Mat Sig = momentum_snapshot(s, F).Sigma;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) {
            const double expect = (i == l ? Sig(k, j) : 0.0) - (k == j ? Sig(i, l) : 0.0);
            flat = std::max(flat, std::abs(tab({Observable::Sigma, i, j}, {Observable::Sigma, k, l}) - expect));
          }
  }
  return {br < 1e-9 && jac < 1e-8 && flat < 1e-13,
          "closed vs canonical " + sci(br) + ", Jacobi " + sci(jac) + ", flat gl(n) " + sci(flat)};
}

Outcome conservation_suite() {
  double energy = 0.0, cyclic = 0.0, sep = 0.0;
  long min_steps = 1L << 40;
  auto go = [&](ScenarioConfig c) {
    DynamicsModel m = build_model(c);
    TrajectoryRecord rec = run(m, build_initial_state(c, m), build_integrator(c), build_observables(c, m));
    min_steps = std::min(min_steps, rec.steps);
    return std::make_pair(rec, c);
  };
  {
    auto [rec, c] = go(scenario("sphere_spin"));
    energy = std::max(energy, relative_drift(rec.series("energy"), 1e-12));
    cyclic = std::max(cyclic, relative_drift(rec.series("p_1"), 1e-12));
  }
  for (const char* name : {"sphere_separable_harmonic", "pseudosphere_separable", "sphere_separable_polar"}) {
    auto [rec, c] = go(scenario(name));
    energy = std::max(energy, relative_drift(rec.series("energy"), 1e-12));
    SeparableReport r = separable_check(rec, build_scenario2d(c));
    for (const auto& [q, d] : r.drifts) {
      double& slot = q.rfind("p_", 0) == 0 ? cyclic : sep;
      slot = std::max(slot, d);
    }
  }
  ScenarioConfig bad = scenario("sphere_separable_harmonic");
  bad.coupling = 0.5;
  auto [rec, c] = go(bad);
  const double broken = separable_check(rec, build_scenario2d(c)).drift("C_x");
  return {energy < 1e-8 && cyclic < 1e-8 && sep < 1e-6 && broken > 1e-3 && min_steps >= 10000,
          "energy " + sci(energy) + ", cyclic momenta " + sci(cyclic) + ", separation constants " + sci(sep) +
              ", coupled C_x " + sci(broken) + " (" + std::to_string(min_steps) + " steps)"};
}

Outcome geometric_force() {
  ScenarioConfig c = scenario("sphere_spin");
  c.integrator.stride = 1;
  DynamicsModel m = build_model(c);
  TrajectoryRecord rec = run(m, build_initial_state(c, m), build_integrator(c));
  const Manifold& M = m.space();
  double worst = 0.0;
  for (const auto& s : rec.samples) {
    BalanceRates br = eom_riemann_cartan(s.state, m.inertia, ForceSnapshot::zero(2), M);
    Mat g = M.metric(s.state.x);
    const Vec& v = s.state.velocity().v;
    const Vec& F = br.F_geom;
    const double scale = std::sqrt(F.dot(g * F)) * std::sqrt(v.dot(g * v));
    if (scale > 0) worst = std::max(worst, std::abs(F.dot(g * v)) / scale);
  }
  auto geo = cli::simulate(scenario("sphere_geodesic")).summary["geodesic_deviation"].get<double>();
  return {worst < 1e-11 && geo < 1e-7, "max |F.v|/(|F||v|) " + sci(worst) + " over " + std::to_string(rec.samples.size()) +
                                           " states, geodesic deviation " + sci(geo)};
}

Outcome gyroscopic_constraint() {
  ScenarioConfig c = scenario("sphere_free_gyro");
  c.integrator.stride = 10;
  DynamicsModel m = build_model(c);
  IntegratorConfig ic = build_integrator(c);
  TrajectoryRecord rec = run(m, build_initial_state(c, m), ic);
  const Manifold& M = m.space();
  StateSampler rs(106);
  double res = 0.0, power = 0.0;
  for (const auto& s : rec.samples) {
    res = std::max(res, s.constraint_residual);
    Mat g = M.metric(s.state.x);
    ForceSnapshot f = m.forces(s.state);
    Mat QR = constraint_reaction(ConstraintKind::Gyroscopic, s.state.e, g, internal_velocity(s.state, M), f.Q, m.inertia);
    Mat W = rs.normal_mat(2);
    W = (W - W.transpose()).eval();
    W /= W.norm();
    power = std::max(power, std::abs(reaction_power(QR, s.state.e, W)));
  }
  return {res < 1e-7 && power < 1e-12 && rec.steps >= 10000,
          "constraint residual " + sci(res) + ", reaction power " + sci(power) + " (" + std::to_string(rec.steps) + " steps)"};
}

Outcome flat_reduction() {
  StateSampler rs(107);
  double geom = 0.0;
  for (int n : {2, 3}) {
    FlatSpace F(n);
    for (int k = 0; k < 20; ++k) {
      Vec x = rs.point(F);
      geom = std::max({geom, connection_at(F, x).max_abs(), curvature_at(F, x).max_abs(), torsion_at(F, x).max_abs()});
    }
  }
  ScenarioConfig c = scenario("flat_reduction");
  auto sum = cli::simulate(c).summary;
  double dev = sum["flat_closed_form_deviation"].get<double>();
  // harmonic internal potential against the modal closed form, and momentum with no translational force
  DynamicsModel h{std::make_shared<FlatSpace>(2), build_inertia(c)};
  h.potential = internal_harmonic_potential(0.8);
  BodyState s0 = build_initial_state(c, h);
  IntegratorConfig ic = build_integrator(c);
  std::vector<MonitoredObservable> obs{builtin_observable("p_0", h), builtin_observable("p_1", h)};
  TrajectoryRecord rec = run(h, s0, ic, obs);
  double mom = 0.0;
  for (const auto& s : rec.samples) {
    FlatAffineMotion f = flat_affine_reference(h.inertia, 0.8, s0.x, s0.velocity().v, s0.e, s0.velocity().edot, s.t);
    dev = std::max({dev, (f.x - s.state.x).cwiseAbs().maxCoeff(), (f.e - s.state.e).cwiseAbs().maxCoeff(),
                    (f.edot - s.state.velocity().edot).cwiseAbs().maxCoeff()});
    for (std::size_t i = 0; i < 2; ++i) mom = std::max(mom, std::abs(s.observables[i] - rec.samples.front().observables[i]));
  }
  return {geom == 0.0 && dev < 1e-9 && mom == 0.0 && rec.steps >= 10000,
          "flat geometry " + sci(geom) + ", closed-form deviation " + sci(dev) + ", momentum change " + sci(mom)};
}

Outcome transformation_laws() {
  StateSampler rs(108);
  double worst = 0.0;
  int cases = 0;
  for (const auto& M : bracket_spaces()) {
    TransformReport r = check_transformations(*M, 200, rs);
    worst = std::max(worst, r.max());
    cases += r.cases;
  }
  return {worst < 1e-10, "max residual " + sci(worst) + " over " + std::to_string(cases) + " cases"};
}

Outcome decompositions() {
  StateSampler rs(109);
  double worst = 0.0;
  int cases = 0;
  for (int n : {2, 3}) {
    DecompositionReport r = check_decompositions(n, 500, rs);
    worst = std::max(worst, r.max());
    cases += r.cases;
  }
  return {worst < 1e-12, "max residual " + sci(worst) + " over " + std::to_string(cases) + " matrices"};
}

Outcome self_convergence() {
  ScenarioConfig c = scenario("sphere_spin");
  DynamicsModel m = build_model(c);
  BodyState s0 = build_initial_state(c, m);
  IntegratorConfig ic = build_integrator(c);
  const Manifold& M = m.space();
  auto at = [&](double dt) { return phase_from_state(integrate_steps(m, s0, std::lround(1.0 / dt), dt, ic), M); };
  Vec ref = at(0.00125);
  const double e1 = (at(0.02) - ref).cwiseAbs().maxCoeff(), e2 = (at(0.01) - ref).cwiseAbs().maxCoeff();
  const double ratio = e1 / e2;
  return {std::abs(ratio - 16.0) <= 3.2, "error ratio " + sci(ratio) + " (errors " + sci(e1) + ", " + sci(e2) + ")"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*fn)();
  };
  const Criterion all[] = {
      {"closed-form action oracle", action_oracle},
      {"mass-matrix equivalence", mass_matrix_equivalence},
      {"bracket algebra", bracket_algebra},
      {"conservation suite", conservation_suite},
      {"geometric-force structure", geometric_force},
      {"gyroscopic constraint", gyroscopic_constraint},
      {"flat-space reduction", flat_reduction},
      {"transformation laws", transformation_laws},
      {"decomposition round-trips", decompositions},
      {"integrator self-convergence", self_convergence},
  };
  int failed = 0, idx = 0;
  for (const auto& c : all) {
    ++idx;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << idx << " " << c.name << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
