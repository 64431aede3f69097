#include "gyrocurve/verify.hpp"

#include <gtest/gtest.h>

using namespace gyro;

namespace {

Tensor3 sample_torsion() {
  Tensor3 S(2);
  S(0, 0, 1) = 0.2;
  S(0, 1, 0) = -0.2;
  S(1, 0, 1) = -0.1;
  S(1, 1, 0) = 0.1;
  return S;
}

std::vector<ManifoldPtr> spaces() {
  const Tensor3 S = sample_torsion();
  auto sph = std::make_shared<Sphere2>(1.3);
  return {std::make_shared<FlatSpace>(2), std::make_shared<FlatSpace>(3), sph, std::make_shared<Pseudosphere2>(0.8),
          std::make_shared<RiemannCartan>(sph, [S](const Vec&) { return S; })};
}

}  // namespace

TEST(KineticEnergy, FormsAgree) {
  StateSampler rs(21);
  for (const auto& M : spaces()) {
    Inertia I(1.4, rs.spd(M->dim()));
    for (int k = 0; k < 10; ++k) {
      BodyState s = rs.velocity_state(*M);
      const double T = kinetic_energy(s, I, *M);
      auto [tr, in] = kinetic_energy_parts(s, I, *M);
      EXPECT_LT(scaled_error(T, tr + in), 1e-14);
      EXPECT_LT(scaled_error(T, kinetic_energy_comoving(s, I, *M)), 1e-13);
      EXPECT_LT(scaled_error(T, kinetic_energy_spatial(s, I, *M)), 1e-13);
      BodyState p = legendre(s, I, *M);
      EXPECT_LT(scaled_error(T, kinetic_hamiltonian(p, I, *M)), 1e-12);
      EXPECT_LT(scaled_error(T, kinetic_hamiltonian_comoving(p, I, *M)), 1e-12);
      // hand-written reference: (m/2) g v v + ½ Tr(Vᵀ g V J)
      Mat g = M->metric(s.x);
      Mat V = internal_velocity(s, *M);
      const Vec& v = s.velocity().v;
      EXPECT_LT(scaled_error(T, 0.5 * I.m * v.dot(g * v) + 0.5 * (V.transpose() * g * V * I.J).trace()), 1e-14);
    }
  }
}

TEST(KineticEnergy, AlternativeFormsComovingEqualsSpatial) {
  StateSampler rs(22);
  for (const auto& M : spaces()) {
    for (int k = 0; k < 5; ++k) {
      BodyState s = rs.velocity_state(*M);
      AffineEnergyConstants c{1.2, 0.7, 0.2, -0.1};
      auto a = affine_isotropic_kinetic(s, c, *M);
      auto b = metrical_affine_kinetic(s, c, *M);
      EXPECT_LT(scaled_error(a.first, a.second), 1e-12);
      EXPECT_LT(scaled_error(b.first, b.second), 1e-12);
      Inertia I(1.1, 0.6 * Mat::Identity(M->dim(), M->dim()));
      EXPECT_LT(scaled_error(cauchy_kinetic_energy(s, I, *M), cauchy_kinetic_energy_comoving(s, I, *M)), 1e-12);
    }
  }
}

TEST(KineticEnergy, TwoPolarFormMatchesGenericInternalEnergy) {
  StateSampler rs(23);
  for (bool hyp : {false, true}) {
    const double R = hyp ? 0.8 : 1.3;
    auto M = hyp ? ManifoldPtr(std::make_shared<Pseudosphere2>(R)) : ManifoldPtr(std::make_shared<Sphere2>(R));
    PolarOrthonormalFrame F(R, hyp);
    const double Iso = 0.7;
    Inertia I(1.0, Iso * Mat::Identity(2, 2));
    for (int k = 0; k < 10; ++k) {
      BodyState s = rs.velocity_state(*M);
      TwoPolarVariables q = two_polar_variables(s, F, *M);
      EXPECT_LT(scaled_error(two_polar_kinetic(q, Iso), kinetic_energy_parts(s, I, *M).second), 1e-11);
      EXPECT_LT(scaled_error(q.chi, Mat(-q.chi.transpose())), 1e-12);
      EXPECT_LT(scaled_error(q.theta, Mat(-q.theta.transpose())), 1e-12);
    }
  }
}

TEST(Brackets, ClosedFormMatchesCanonical) {
  StateSampler rs(24);
  for (const auto& M : spaces()) {
    CheckResult r = check_brackets(*M, 8, rs);
    EXPECT_LT(r.residual, 1e-9) << M->name();
  }
}

TEST(Brackets, JacobiIdentity) {
  StateSampler rs(25);
  for (const auto& M : spaces()) EXPECT_LT(check_jacobi(*M, 8, rs).residual, 1e-8) << M->name();
}

TEST(Brackets, FlippedCurvatureSignFailsOnCurvedSpaces) {
  StateSampler rs(26);
  BracketOptions opt;
  opt.curvature_sign = -1.0;
  for (const auto& M : spaces()) {
    const double r = check_brackets(*M, 3, rs, opt).residual;
    if (M->name().rfind("flat", 0) == 0)
      EXPECT_LT(r, 1e-12);
    else
      EXPECT_GT(r, 1e-3) << M->name();
  }
}

TEST(Brackets, FlatSpaceAffineAlgebra) {
  // {Σ^i_j, Σ^k_l} = δ^i_l Σ^k_j − δ^k_j Σ^i_l, {P_i, ·} = 0 on translation-invariant observables.
  StateSampler rs(27);
  for (int n : {2, 3}) {
    FlatSpace M(n);
    for (int t = 0; t < 3; ++t) {
      BodyState s = rs.momentum_state(M);
      BracketTable tab(s, M);
      Mat Sig = momentum_snapshot(s, M).Sigma;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) {
              const double expect = (i == l ? Sig(k, j) : 0.0) - (k == j ? Sig(i, l) : 0.0);
              EXPECT_NEAR(tab({Observable::Sigma, i, j}, {Observable::Sigma, k, l}), expect, 1e-14);
            }
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          EXPECT_EQ(tab({Observable::P, i, 0}, {Observable::P, j, 0}), 0.0);
          for (int k = 0; k < n; ++k) EXPECT_EQ(tab({Observable::P, i, 0}, {Observable::Sigma, j, k}), 0.0);
        }
    }
  }
}

TEST(Brackets, Antisymmetry) {
  StateSampler rs(28);
  auto M = std::make_shared<Sphere2>(1.3);
  BodyState s = rs.momentum_state(*M);
  BracketTable tab(s, *M);
  auto obs = all_observables(2);
  for (const auto& f : obs)
    for (const auto& g : obs) EXPECT_NEAR(tab(f, g), -tab(g, f), 1e-13);
}

TEST(Potentials, InvariantPotentialGradientsMatchDifferences) {
  StateSampler rs(29);
  auto xy = deformation_xy_potential(0.3, 0.4, 0.5, 0.2);
  auto pol = deformation_polar_potential(-1.0, 0.2, 0.1);
  for (auto M : {ManifoldPtr(std::make_shared<Sphere2>(1.3)), ManifoldPtr(std::make_shared<Pseudosphere2>(0.8))}) {
    for (const auto& U : {xy, pol}) {
      FunctionPotential ref([&](const Vec& x, const Mat& e) { return U->value(*M, x, e); });
      ref.set_fd_step(1e-4);
      for (int k = 0; k < 5; ++k) {
        Vec x = rs.point(*M);
        Mat e = rs.frame(2);
        if (!(e.transpose() * M->metric(x) * e).determinant()) continue;
        EXPECT_LT(scaled_error(Mat(U->grad_x(*M, x, e)), Mat(ref.grad_x(*M, x, e))), 1e-7);
        EXPECT_LT(scaled_error(U->grad_e(*M, x, e), ref.grad_e(*M, x, e)), 1e-7);
      }
    }
  }
}

TEST(Potentials, RadialDetGradient) {
  StateSampler rs(30);
  auto M = std::make_shared<Sphere2>(1.3);
  RadialDetPotential U(0.4);
  FunctionPotential ref([&](const Vec& x, const Mat& e) { return U.value(*M, x, e); });
  for (int k = 0; k < 5; ++k) {
    Vec x = rs.point(*M);
    Mat e = rs.frame(2);
    EXPECT_LT(scaled_error(Mat(U.grad_x(*M, x, e)), Mat(ref.grad_x(*M, x, e))), 1e-8);
    EXPECT_NEAR(U.value(*M, x, e), 0.4 / M->metric(x).determinant(), 1e-14);
  }
}

TEST(Potentials, TabulatedRangeAndSlope) {
  std::vector<double> vals;
  for (int i = 0; i <= 40; ++i) vals.push_back(std::pow(0.5 + 0.05 * i, 2));
  TabulatedPotential U(0, 0.5, 0.05, vals);
  FlatSpace M(2);
  Vec x(2);
  x << 1.2, 0.0;
  Mat e = Mat::Identity(2, 2);
  EXPECT_NEAR(U.value(M, x, e), 1.44, 1e-4);
  EXPECT_NEAR(U.grad_x(M, x, e)(0), 2.4, 1e-3);
  x(0) = 3.0;
  EXPECT_THROW(U.value(M, x, e), DomainError);
}

TEST(Forces, PotentialForcesAndHyperforce) {
  StateSampler rs(31);
  auto M = std::make_shared<Sphere2>(1.3);
  auto U = deformation_xy_potential(0.3, 0.4, 0.5);
  BodyState s = rs.velocity_state(*M);
  ForceSnapshot F = forces_from_potential(*U, s, *M);
  // along a motion with parallel-transported frame, F·v = −dU/dt
  for (int k = 0; k < 2; ++k) {
    Vec v = Vec::Unit(2, k);
    Mat Gv = connection_matrix(M->connection(s.x), v);
    auto Ut = [&](double t) { return U->value(*M, Vec(s.x + t * v), Mat(s.e - t * Gv * s.e)); };
    const double h = 1e-5;
    const double dU = (-Ut(2 * h) + 8 * Ut(h) - 8 * Ut(-h) + Ut(-2 * h)) / (12 * h);
    EXPECT_NEAR(F.F_cov(k), -dU, 1e-8);
  }
  EXPECT_LT(scaled_error(F.Q, Mat(-U->grad_e(*M, s.x, s.e))), 1e-14);
  EXPECT_LT(scaled_error(F.N, Mat(s.e * F.Q.transpose())), 1e-14);
  // potential depending only on invariants exerts no net torque: g-skew part of N vanishes
  Mat g = M->metric(s.x);
  Mat Nu = F.N_upper(g);
  EXPECT_LT(scaled_error(Nu, Mat(Nu.transpose())), 1e-10);
}

TEST(Forces, ViscousDampingDissipates) {
  StateSampler rs(32);
  for (const auto& M : spaces()) {
    BodyState s = rs.velocity_state(*M);
    ForceSnapshot F = viscous_forces(s, 0.3, 0.2, *M);
    Mat V = internal_velocity(s, *M);
    const double power = F.F_cov.dot(s.velocity().v) + (F.Q.transpose() * V).trace();
    EXPECT_LT(power, 0.0);
  }
}

TEST(BalanceLaws, GeneralFormReducesToRiemannCartan) {
  StateSampler rs(33);
  for (const auto& M : spaces()) {
    Inertia I(1.2, rs.spd(M->dim()));
    auto U = std::make_shared<RadialDetPotential>(0.3);
    for (int k = 0; k < 5; ++k) {
      BodyState s = rs.velocity_state(*M);
      ForceSnapshot F = forces_from_potential(*U, s, *M);
      F.Q += rs.normal_mat(M->dim(), 0.1);
      F.N = s.e * F.Q.transpose();
      BalanceRates a = eom_riemann_cartan(s, I, F, *M), b = eom_general(s, I, F, *M);
      EXPECT_LT(scaled_error(Mat(a.Dv), Mat(b.Dv)), 1e-11) << M->name();
      EXPECT_LT(scaled_error(a.DV, b.DV), 1e-11) << M->name();
    }
  }
}

TEST(BalanceLaws, RiemannCartanRequiresCompatibleConnection) {
  auto base = std::make_shared<Sphere2>(1.0);
  GeneralConnection M(base, [base](const Vec& x) {
    Tensor3 G = base->connection(x);
    G(0, 0, 0) += 0.3;
    return G;
  });
  StateSampler rs(34);
  BodyState s = rs.velocity_state(M);
  Inertia I(1.0, Mat::Identity(2, 2));
  EXPECT_THROW(eom_riemann_cartan(s, I, ForceSnapshot::zero(2), M), MetricityError);
  EXPECT_NO_THROW(eom_general(s, I, ForceSnapshot::zero(2), M));
}

TEST(BalanceLaws, SpinCurvatureForceDoesNoWork) {
  StateSampler rs(35);
  for (const auto& M : spaces()) {
    Inertia I(1.2, rs.spd(M->dim()));
    CheckResult r = check_force_power(*M, I, 20, rs);
    EXPECT_LT(r.residual, 1e-11) << M->name();
    if (M->name().rfind("flat", 0) == 0) {
      BodyState s = rs.velocity_state(*M);
      EXPECT_EQ(eom_riemann_cartan(s, I, ForceSnapshot::zero(M->dim()), *M).F_geom.cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(BalanceLaws, TorsionForceDoesNoWork) {
  StateSampler rs(36);
  const Tensor3 S = sample_torsion();
  RiemannCartan M(std::make_shared<Sphere2>(1.3), [S](const Vec&) { return S; });
  Inertia I(1.2, rs.spd(2));
  for (int k = 0; k < 10; ++k) {
    BodyState s = rs.velocity_state(M);
    BalanceRates br = eom_riemann_cartan(s, I, ForceSnapshot::zero(2), M);
    Mat g = M.metric(s.x);
    EXPECT_NEAR(br.F_torsion.dot(g * s.velocity().v), 0.0, 1e-13);
  }
}

TEST(Constraints, NormalBasesAreOrthonormalComplements) {
  StateSampler rs(37);
  for (int n : {2, 3}) {
    for (auto c : {ConstraintKind::Gyroscopic, ConstraintKind::Incompressible, ConstraintKind::Rotationless}) {
      auto B = constraint_normal_basis(c, n);
      for (std::size_t a = 0; a < B.size(); ++a)
        for (std::size_t b = 0; b < B.size(); ++b)
          EXPECT_NEAR((B[a].transpose() * B[b]).trace(), a == b ? 1.0 : 0.0, 1e-14);
      // an admissible Ω̂ is orthogonal to every normal direction
      Mat W = rs.normal_mat(n);
      if (c == ConstraintKind::Gyroscopic) W = (W - W.transpose()).eval();
      if (c == ConstraintKind::Incompressible) W -= W.trace() / n * Mat::Identity(n, n);
      if (c == ConstraintKind::Rotationless) W = (W + W.transpose()).eval();
      EXPECT_NEAR(constraint_velocity_residual(c, W), 0.0, 1e-14);
      for (const auto& b : B) EXPECT_NEAR((b.transpose() * W).trace(), 0.0, 1e-13);
    }
  }
}

TEST(Constraints, ReactionKeepsMotionAdmissibleAndDoesNoVirtualWork) {
  StateSampler rs(38);
  auto M = std::make_shared<Sphere2>(1.3);
  PolarOrthonormalFrame F(1.3, false);
  Inertia I(1.0, rs.spd(2));
  for (int k = 0; k < 10; ++k) {
    Vec x = rs.point(*M);
    Mat e = F.frame(x) * rs.rotation(2);
    Mat g = M->metric(x);
    Mat W0 = rs.normal_mat(2);
    Mat OmH = W0 - W0.transpose();
    Mat V = e * OmH;
    Mat Q = rs.normal_mat(2);
    Mat QR = constraint_reaction(ConstraintKind::Gyroscopic, e, g, V, Q, I);
    // constrained DV = g⁻¹(Q + Q_R)J⁻¹: d/dt (Ω̂ + Ω̂ᵀ) = 0 requires e⁻¹DV − Ω̂² symmetric-free
    Mat DV = g.inverse() * (Q + QR) * I.Jinv();
    Mat Acc = invert_frame(e) * DV - OmH * OmH;
    EXPECT_LT((Acc + Acc.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Mat Wv = rs.normal_mat(2);
    Wv = (Wv - Wv.transpose()).eval();
    EXPECT_LT(std::abs(reaction_power(QR, e, Wv)), 1e-12);
  }
}

TEST(Constraints, GyroscopicProjectionChecksState) {
  auto M = std::make_shared<Sphere2>(1.0);
  Vec x(2);
  x << 1.0, 0.0;
  BodyState bad = BodyState::with_velocity(x, 2.0 * Mat::Identity(2, 2), Vec::Zero(2), Mat::Zero(2, 2));
  EXPECT_THROW(project_gyroscopic(ForceSnapshot::zero(2), bad, *M), ConstraintViolationError);
  PolarOrthonormalFrame F(1.0, false);
  BodyState good = BodyState::with_velocity(x, F.frame(x), Vec::Zero(2), Mat::Zero(2, 2));
  ForceSnapshot Fs = ForceSnapshot::zero(2);
  Fs.Q = Mat::Identity(2, 2);
  Fs.Q(0, 1) = 0.4;
  Fs.N = good.e * Fs.Q.transpose();
  ForceSnapshot P = project_gyroscopic(Fs, good, *M);
  Mat Nu = P.N_upper(M->metric(x));
  EXPECT_LT((Nu + Nu.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}
