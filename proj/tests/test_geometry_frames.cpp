#include "gyrocurve/verify.hpp"

#include <gtest/gtest.h>

using namespace gyro;

namespace {

ManifoldPtr sphere(double R = 1.3) { return std::make_shared<Sphere2>(R); }
ManifoldPtr pseudosphere(double R = 0.8) { return std::make_shared<Pseudosphere2>(R); }

Tensor3 sample_torsion() {
  Tensor3 S(2);
  S(0, 0, 1) = 0.2;
  S(0, 1, 0) = -0.2;
  S(1, 0, 1) = -0.1;
  S(1, 1, 0) = 0.1;
  return S;
}

}  // namespace

TEST(FlatSpace, ConnectionCurvatureTorsionVanish) {
  StateSampler rs(1);
  for (int n : {2, 3, 4}) {
    FlatSpace M(n);
    for (int k = 0; k < 5; ++k) {
      Vec x = rs.point(M);
      EXPECT_EQ(connection_at(M, x).max_abs(), 0.0);
      EXPECT_EQ(curvature_at(M, x).max_abs(), 0.0);
      EXPECT_EQ(torsion_at(M, x).max_abs(), 0.0);
      EXPECT_EQ((M.metric(x) - Mat::Identity(n, n)).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(PolarSurface, ConnectionMatchesLeviCivitaOfMetric) {
  StateSampler rs(2);
  for (auto M : {sphere(), pseudosphere()}) {
    for (int k = 0; k < 10; ++k) {
      Vec x = rs.point(*M);
      Tensor3 closed = M->connection(x);
      Tensor3 lc = M->levi_civita(x);
      EXPECT_LT((closed - lc).max_abs(), 1e-14);
      // partials against differencing the closed form
      auto dG = M->connection_partials(x);
      for (int l = 0; l < 2; ++l) {
        Tensor3 fd = central_diff_t3([&](const Vec& y) { return M->connection(y); }, x, l, 1e-4);
        EXPECT_LT((dG[static_cast<std::size_t>(l)] - fd).max_abs(), 1e-9);
      }
    }
  }
}

TEST(PolarSurface, SectionalCurvatureIsConstant) {
  StateSampler rs(3);
  for (auto M : {sphere(1.3), pseudosphere(0.8)}) {
    const double K = dynamic_cast<const PolarSurface&>(*M).gauss_curvature();
    for (int k = 0; k < 10; ++k) {
      Vec x = rs.point(*M);
      Tensor4 R = curvature_at(*M, x);
      Vec u = rs.normal_vec(2), v = rs.normal_vec(2);
      EXPECT_NEAR(sectional_curvature(R, M->metric(x), u, v), K, 1e-10);
    }
  }
}

TEST(Curvature, AlgebraicSymmetriesOfLeviCivita) {
  StateSampler rs(4);
  for (auto M : {sphere(), pseudosphere()}) {
    Vec x = rs.point(*M);
    Tensor4 R = curvature_at(*M, x);
    for (int l = 0; l < 2; ++l)
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            EXPECT_NEAR(R(l, k, i, j), -R(l, k, j, i), 1e-12);
            EXPECT_NEAR(R(l, k, i, j) + R(l, i, j, k) + R(l, j, k, i), 0.0, 1e-12);
          }
  }
}

TEST(RiemannCartan, TorsionRecoveredAndMetricityHolds) {
  StateSampler rs(5);
  const Tensor3 S = sample_torsion();
  RiemannCartan M(sphere(), [S](const Vec&) { return S; });
  for (int k = 0; k < 10; ++k) {
    Vec x = rs.point(M);
    EXPECT_LT((torsion_at(M, x) - S).max_abs(), 1e-13);
    EXPECT_LT(metricity_residual(M, x).max_abs(), 1e-12);
  }
  EXPECT_TRUE(M.metric_compatible());
}

TEST(GeneralConnection, MetricityDefectDetected) {
  StateSampler rs(6);
  auto base = sphere();
  GeneralConnection M(base, [base](const Vec& x) {
    Tensor3 G = base->connection(x);
    G(0, 0, 0) += 0.3;
    return G;
  });
  Vec x = rs.point(M);
  EXPECT_GT(metricity_residual(M, x).max_abs(), 0.1);
  EXPECT_FALSE(M.metric_compatible());
}

TEST(Domain, PoleAndNonFinitePointsRejected) {
  Sphere2 S(1.0);
  Pseudosphere2 H(1.0);
  Vec pole(2);
  pole << 0.0, 0.3;
  EXPECT_THROW(S.require_domain(pole), DomainError);
  EXPECT_THROW(H.require_domain(pole), DomainError);
  Vec south(2);
  south << kPi, 0.0;
  EXPECT_THROW(S.require_domain(south), DomainError);
  Vec nan(2);
  nan << std::nan(""), 0.0;
  EXPECT_THROW(S.require_domain(nan), DomainError);
  EXPECT_THROW(Sphere2(-1.0), DomainError);
}

TEST(Frames, PolarOrthonormalFrameIsOrthonormal) {
  StateSampler rs(7);
  for (auto M : {sphere(), pseudosphere()}) {
    const auto& P = dynamic_cast<const PolarSurface&>(*M);
    PolarOrthonormalFrame F(P);
    for (int k = 0; k < 10; ++k) {
      Vec x = rs.point(*M);
      EXPECT_LT(orthonormality_residual(F, *M, x), 1e-14);
      auto dE = F.frame_partials(x);
      for (int l = 0; l < 2; ++l) {
        Mat fd = central_diff([&](const Vec& y) { return F.frame(y); }, x, l, 1e-4);
        EXPECT_LT((dE[static_cast<std::size_t>(l)] - fd).cwiseAbs().maxCoeff(), 1e-9);
      }
    }
  }
}

TEST(Frames, NonholonomyEqualsTwiceFrameTorsion) {
  // [E_A, E_B] = Ω^C_AB E_C and the teleparallel torsion S^C_AB = ½ Ω^C_AB in the frame basis.
  StateSampler rs(8);
  auto M = sphere();
  PolarOrthonormalFrame F(1.3, false);
  for (int k = 0; k < 5; ++k) {
    Vec x = rs.point(*M);
    Tensor3 W = nonholonomy_at(F, x);
    Tensor3 S = frame_torsion_at(F, x);
    Mat E = F.frame(x), Ei = F.coframe(x);
    for (int C = 0; C < 2; ++C)
      for (int A = 0; A < 2; ++A)
        for (int B = 0; B < 2; ++B) {
          double s = 0.0;
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int l = 0; l < 2; ++l) s += Ei(C, i) * S(i, j, l) * E(j, A) * E(l, B);
          EXPECT_NEAR(s, 0.5 * W(C, A, B), 1e-9);
        }
    EXPECT_LT((torsion_from(teleparallel_connection_at(F, x)) - S).max_abs(), 1e-12);
  }
}

TEST(Frames, TeleparallelConnectionIsFlat) {
  StateSampler rs(9);
  PolarOrthonormalFrame F(1.3, false);
  Vec x = rs.point(*sphere());
  Tensor3 G = teleparallel_connection_at(F, x);
  Tensor4 R = curvature_from(G, teleparallel_connection_partials(F, x));
  EXPECT_LT(R.max_abs(), 1e-8);
}

TEST(Frames, NonholonomicCoefficientsVanishForTeleparallelConnection) {
  StateSampler rs(10);
  PolarOrthonormalFrame F(1.3, false);
  Vec x = rs.point(*sphere());
  EXPECT_LT(nonholonomic_coeffs(F, teleparallel_connection_at(F, x), x).max_abs(), 1e-14);
}

TEST(Frames, CoordinateFrameIsHolonomic) {
  CoordinateFrame F(3);
  Vec x = Vec::Zero(3);
  EXPECT_EQ(nonholonomy_at(F, x).max_abs(), 0.0);
  EXPECT_EQ(frame_torsion_at(F, x).max_abs(), 0.0);
}

TEST(Frames, SingularConfigurationRejected) {
  PolarOrthonormalFrame F(1.0, false);
  Vec x(2);
  x << 1.0, 0.0;
  EXPECT_THROW(relative_configuration(Mat::Zero(2, 2), F, x), SingularFrameError);
}
