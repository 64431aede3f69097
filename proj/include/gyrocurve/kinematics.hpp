#pragma once

#include "gyrocurve/frames.hpp"

#include <array>
#include <optional>
#include <variant>

namespace gyro {

struct VelocityFibre {
  Vec v;     // dx^i/dt
  Mat edot;  // de^i_A/dt
};

struct MomentumFibre {
  Vec p;  // holonomic p_i
  Mat P;  // P^A_i, row A, column i
};

/// Point of the frame bundle plus velocity or canonical-momentum fibre.
struct BodyState {
  Vec x;
  Mat e;  // e^i_A, columns are legs
  std::variant<VelocityFibre, MomentumFibre> fibre;

  int dim() const { return static_cast<int>(x.size()); }
  bool has_velocity() const { return std::holds_alternative<VelocityFibre>(fibre); }
  bool has_momentum() const { return std::holds_alternative<MomentumFibre>(fibre); }
  const VelocityFibre& velocity() const {
    if (!has_velocity()) throw SchemaError("state carries momenta, velocities requested");
    return std::get<VelocityFibre>(fibre);
  }
  const MomentumFibre& momentum() const {
    if (!has_momentum()) throw SchemaError("state carries velocities, momenta requested");
    return std::get<MomentumFibre>(fibre);
  }

  static BodyState with_velocity(Vec x, Mat e, Vec v, Mat edot) {
    return BodyState{std::move(x), std::move(e), VelocityFibre{std::move(v), std::move(edot)}};
  }
  static BodyState with_momentum(Vec x, Mat e, Vec p, Mat P) {
    return BodyState{std::move(x), std::move(e), MomentumFibre{std::move(p), std::move(P)}};
  }
};

/// Translational mass m and micromaterial inertia J^AB.
struct Inertia {
  double m = 1.0;
  Mat J;

  Inertia() = default;
  Inertia(double mass, Mat j) : m(mass), J(std::move(j)) { validate(); }

  void validate() const {
    if (!(m > 0)) throw SingularInertiaError("mass must be positive");
    if (J.rows() != J.cols()) throw SingularInertiaError("inertia J must be square");
    if ((J - J.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + J.cwiseAbs().maxCoeff()))
      throw SingularInertiaError("inertia J must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    if (es.eigenvalues().minCoeff() <= 0) throw SingularInertiaError("inertia J must be positive definite");
  }
  /// J̃ = J⁻¹ (the matrix inverse, never the η-lowered J).
  Mat Jinv() const { return J.inverse(); }
};

inline Mat invert_frame(const Mat& e) {
  Eigen::FullPivLU<Mat> lu(e);
  if (!lu.isInvertible()) throw SingularFrameError("internal frame e is singular");
  return lu.inverse();
}

/// Γ_i as matrices: (Γ_i)^k_j = Γ^k_ji.
inline std::vector<Mat> connection_slices(const Tensor3& G) {
  const int n = G.dim();
  std::vector<Mat> out(n, Mat::Zero(n, n));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) out[i](k, j) = G(k, j, i);
  return out;
}

/// V^i_A = de^i_A/dt + Γ^i_jk e^j_A dx^k/dt.
inline Mat internal_velocity(const Manifold& M, const Vec& x, const Mat& e, const Vec& v, const Mat& edot) {
  M.require_domain(x);
  return edot + connection_matrix(M.connection(x), v) * e;
}

inline Mat internal_velocity(const BodyState& s, const Manifold& M) {
  const auto& f = s.velocity();
  return internal_velocity(M, s.x, s.e, f.v, f.edot);
}

struct AffineVelocity {
  Mat Omega;     // Ω^i_j = V^i_A e^A_j
  Mat OmegaHat;  // Ω̂^A_B = e^A_i V^i_B
};

inline AffineVelocity affine_velocity(const BodyState& s, const Manifold& M) {
  Mat V = internal_velocity(s, M);
  Mat ei = invert_frame(s.e);
  return {V * ei, ei * V};
}

struct RelativeDriveSplit {
  Mat L, Ldot;
  Mat OmegaHatRelative;  // L⁻¹ dL/dt
  Mat OmegaHatDrive;     // L⁻¹ Γ^A_BC v̂^C L
  Mat OmegaHat;          // sum of the two
};

/// Split of the co-moving affine velocity into relative and drive parts with respect to a frame field.
inline RelativeDriveSplit split_relative_drive(const BodyState& s, const FrameField& F, const Manifold& M) {
  M.require_domain(s.x);
  const auto& f = s.velocity();
  const int n = s.dim();
  Mat Ei = F.coframe(s.x);
  auto dEi = F.coframe_partials(s.x);
  Mat Eidot = Mat::Zero(n, n);
  for (int k = 0; k < n; ++k) Eidot += dEi[k] * f.v(k);
  RelativeDriveSplit out;
  out.L = relative_configuration(s.e, F, s.x);
  out.Ldot = Eidot * s.e + Ei * f.edot;
  Mat Li = invert_frame(out.L);
  out.OmegaHatRelative = Li * out.Ldot;
  Tensor3 Gnh = nonholonomic_coeffs(F, M, s.x);
  Vec vE = Ei * f.v;
  Mat Gv = Mat::Zero(n, n);
  for (int A = 0; A < n; ++A)
    for (int B = 0; B < n; ++B)
      for (int C = 0; C < n; ++C) Gv(A, B) += Gnh(A, B, C) * vE(C);
  out.OmegaHatDrive = Li * Gv * out.L;
  out.OmegaHat = out.OmegaHatRelative + out.OmegaHatDrive;
  return out;
}

struct Deformation {
  Mat Green;      // G_AB = g_ij e^i_A e^j_B
  Mat Cauchy;     // C_ij = η_AB e^A_i e^B_j
  Mat GreenInv;   // G̃^AB
  Mat CauchyInv;  // C̃^ij
  Vec invariants; // 𝔎_a = Tr(Ĝ^a), a = 1..n
};

inline Deformation deformation(const Mat& e, const Mat& g, const Mat& eta) {
  Mat ei = invert_frame(e);
  Deformation d;
  d.Green = e.transpose() * g * e;
  d.Cauchy = ei.transpose() * eta * ei;
  d.GreenInv = d.Green.inverse();
  d.CauchyInv = d.Cauchy.inverse();
  const int n = static_cast<int>(e.rows());
  Mat Ghat = eta.inverse() * d.Green;
  d.invariants.resize(n);
  Mat pw = Mat::Identity(n, n);
  for (int a = 0; a < n; ++a) {
    pw = pw * Ghat;
    d.invariants(a) = pw.trace();
  }
  return d;
}

inline Deformation deformation(const BodyState& s, const Manifold& M, const Mat& eta) {
  return deformation(s.e, metric_at(M, s.x), eta);
}
inline Deformation deformation(const BodyState& s, const Manifold& M) {
  return deformation(s, M, Mat::Identity(s.dim(), s.dim()));
}

/// 𝔎_a evaluated through the Cauchy tensor: Tr(Ĉ^(−a)) with Ĉ^i_j = g^ik C_kj.
inline Vec invariants_from_cauchy(const Mat& C, const Mat& g) {
  const int n = static_cast<int>(C.rows());
  Mat Chat = g.inverse() * C;
  Mat Ci = Chat.inverse();
  Vec k(n);
  Mat pw = Mat::Identity(n, n);
  for (int a = 0; a < n; ++a) {
    pw = pw * Ci;
    k(a) = pw.trace();
  }
  return k;
}

struct KinematicSnapshot {
  Mat V, Omega, OmegaHat;
  Vec vhat;
  Deformation def;
};

inline KinematicSnapshot kinematic_snapshot(const BodyState& s, const Manifold& M) {
  KinematicSnapshot k;
  k.V = internal_velocity(s, M);
  Mat ei = invert_frame(s.e);
  k.Omega = k.V * ei;
  k.OmegaHat = ei * k.V;
  k.vhat = ei * s.velocity().v;
  k.def = deformation(s, M);
  return k;
}

struct SpinVorticity {
  Mat spin;       // S^i_j = Σ^i_j − g^ik g_jl Σ^l_k
  Mat vorticity;  // V̂^A_B = Σ̂^A_B − η^AC η_BD Σ̂^D_C
};

inline SpinVorticity spin_and_vorticity(const Mat& Sigma, const Mat& SigmaHat, const Mat& g, const Mat& eta) {
  return {Sigma - g.inverse() * Sigma.transpose() * g, SigmaHat - eta.inverse() * SigmaHat.transpose() * eta};
}

// ---------------------------------------------------------------------------
// Polar and two-polar decompositions.

struct Decomposition {
  Mat O, Sym, SigmaSym;  // L = O Sym = SigmaSym O
  Mat U, D, V;           // L = U D V⁻¹, D descending, det U = det V = +1
};

namespace detail {

inline void canonicalize_cluster(Mat& V, int first, int last) {
  const int n = static_cast<int>(V.rows());
  const int size = last - first;
  Mat basis = V.middleCols(first, size);
  Mat P = basis * basis.transpose();
  Mat chosen(n, size);
  int got = 0;
  for (int k = 0; k < n && got < size; ++k) {
    Vec w = P.col(k);
    for (int c = 0; c < got; ++c) w -= chosen.col(c).dot(w) * chosen.col(c);
    double nw = w.norm();
    if (nw > 1e-6) chosen.col(got++) = w / nw;
  }
  if (got == size) V.middleCols(first, size) = chosen;
}

}  // namespace detail

inline Decomposition decompose(const Mat& L) {
  const int n = static_cast<int>(L.rows());
  if (!(L.determinant() > 0)) throw SingularFrameError("decomposition requires det(L) > 0");
  Eigen::JacobiSVD<Mat> svd(L, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec d = svd.singularValues();
  Mat V = svd.matrixV();
  // Deterministic bases inside clusters of (numerically) equal singular values.
  int start = 0;
  for (int i = 1; i <= n; ++i) {
    bool split = (i == n) || (d(i - 1) - d(i) > 1e-10 * d(0));
    if (split) {
      if (i - start > 1) detail::canonicalize_cluster(V, start, i);
      start = i;
    }
  }
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) {
      if (std::abs(V(r, c)) > 1e-8) {
        if (V(r, c) < 0) V.col(c) = -V.col(c);
        break;
      }
    }
  }
  if (V.determinant() < 0) V.col(n - 1) = -V.col(n - 1);
  Mat U(n, n);
  for (int c = 0; c < n; ++c) U.col(c) = L * V.col(c) / d(c);
  // Re-orthonormalise U against rounding (Gram-Schmidt in column order).
  Eigen::HouseholderQR<Mat> qr(U);
  Mat Q = qr.householderQ();
  Mat Rq = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < n; ++c)
    if (Rq(c, c) < 0) Q.col(c) = -Q.col(c);
  U = Q;
  Decomposition out;
  out.U = U;
  out.V = V;
  out.D = d.asDiagonal();
  out.O = U * V.transpose();
  out.Sym = V * out.D * V.transpose();
  out.SigmaSym = U * out.D * U.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Legendre map and momentum quantities.

inline Mat edot_to_V(const Mat& edot, const Mat& e, const Tensor3& G, const Vec& v) {
  return edot + connection_matrix(G, v) * e;
}

/// Velocities to canonical momenta. P^A_i = g_ij V^j_B J^BA with V the covariant
/// internal velocity; p_i = m g_ij v^j + e^j_A P^A_k Γ^k_ji.
inline BodyState legendre(const BodyState& s, const Inertia& I, const Manifold& M) {
  I.validate();
  M.require_domain(s.x);
  const auto& f = s.velocity();
  Mat g = M.metric(s.x);
  Tensor3 G = M.connection(s.x);
  Mat V = edot_to_V(f.edot, s.e, G, f.v);
  Mat P = I.J * V.transpose() * g;
  Mat Sigma = s.e * P;
  auto Gi = connection_slices(G);
  Vec p = I.m * g * f.v;
  for (int i = 0; i < s.dim(); ++i) p(i) += (Sigma * Gi[i]).trace();
  return BodyState::with_momentum(s.x, s.e, p, P);
}

/// Covariant momentum P_i = p_i − e^j_A P^A_k Γ^k_ji.
inline Vec covariant_momentum(const Vec& p, const Mat& e, const Mat& P, const Tensor3& G) {
  Vec out = p;
  Mat Sigma = e * P;
  auto Gi = connection_slices(G);
  for (int i = 0; i < static_cast<int>(p.size()); ++i) out(i) -= (Sigma * Gi[i]).trace();
  return out;
}

inline BodyState inverse_legendre(const BodyState& s, const Inertia& I, const Manifold& M) {
  I.validate();
  M.require_domain(s.x);
  const auto& f = s.momentum();
  Mat g = M.metric(s.x);
  Mat gi = g.inverse();
  Tensor3 G = M.connection(s.x);
  Vec Pc = covariant_momentum(f.p, s.e, f.P, G);
  Vec v = gi * Pc / I.m;
  Mat V = gi * f.P.transpose() * I.Jinv();
  Mat edot = V - connection_matrix(G, v) * s.e;
  return BodyState::with_velocity(s.x, s.e, v, edot);
}

struct MomentumSnapshot {
  Vec P_hol;      // p_i
  Vec P_cov;      // P_i
  Mat P_int;      // P^A_i
  Mat Sigma;      // Σ^i_j = e^i_A P^A_j
  Mat SigmaHat;   // Σ̂^A_B = P^A_i e^i_B
  Vec Phat;       // P̂_A = P_i e^i_A
};

inline MomentumSnapshot momentum_snapshot(const BodyState& s, const Manifold& M) {
  M.require_domain(s.x);
  invert_frame(s.e);
  const auto& f = s.momentum();
  MomentumSnapshot m;
  m.P_hol = f.p;
  m.P_int = f.P;
  m.P_cov = covariant_momentum(f.p, s.e, f.P, M.connection(s.x));
  m.Sigma = s.e * f.P;
  m.SigmaHat = f.P * s.e;
  m.Phat = s.e.transpose() * m.P_cov;
  return m;
}

/// The four pairings of the duality chain, in order:
/// p·v + Tr(P ė), P_cov·v + Tr(P V), P_cov·v + Tr(Σ Ω), P̂·v̂ + Tr(Σ̂ Ω̂).
inline std::array<double, 4> duality_pairings(const BodyState& vel, const BodyState& mom, const Manifold& M) {
  const auto& fv = vel.velocity();
  const auto& fm = mom.momentum();
  MomentumSnapshot ms = momentum_snapshot(mom, M);
  AffineVelocity av = affine_velocity(vel, M);
  Mat V = internal_velocity(vel, M);
  Vec vhat = invert_frame(vel.e) * fv.v;
  return {fm.p.dot(fv.v) + (fm.P * fv.edot).trace(), ms.P_cov.dot(fv.v) + (fm.P * V).trace(),
          ms.P_cov.dot(fv.v) + (ms.Sigma * av.Omega).trace(), ms.Phat.dot(vhat) + (ms.SigmaHat * av.OmegaHat).trace()};
}

// ---------------------------------------------------------------------------
// Transformation laws.

/// Mixed tensor field T^i_j sampled at a point together with its partials.
struct SpatialMap {
  Mat T;
  std::vector<Mat> dT;  // ∂_k T
};

/// Micromaterial map L^A_B(x) sampled at a point with partials.
struct MaterialMap {
  Mat L;
  std::vector<Mat> dL;  // ∂_k L
};

/// ∇_k T^i_m = ∂_k T^i_m + Γ^i_ak T^a_m − Γ^a_mk T^i_a; element k of the result.
inline std::vector<Mat> covariant_derivative_mixed(const SpatialMap& T, const Tensor3& G) {
  auto Gi = connection_slices(G);
  std::vector<Mat> out;
  for (std::size_t k = 0; k < T.dT.size(); ++k) out.push_back(T.dT[k] + Gi[k] * T.T - T.T * Gi[k]);
  return out;
}

/// Quantities predicted by the transformation laws, without recomputing from the new state.
struct TransformPrediction {
  BodyState state;                 // the transformed state itself
  std::optional<Mat> Omega, OmegaHat;
  std::optional<Mat> Sigma, SigmaHat;
  std::optional<Vec> P_cov;
};

/// Spatial action e → T(x) e (cotangent lift on momenta).
inline TransformPrediction transform_spatial(const BodyState& s, const SpatialMap& T, const Manifold& M) {
  M.require_domain(s.x);
  const int n = s.dim();
  Mat Ti = invert_frame(T.T);
  Tensor3 G = M.connection(s.x);
  auto nablaT = covariant_derivative_mixed(T, G);
  Mat e2 = T.T * s.e;
  if (s.has_velocity()) {
    const auto& f = s.velocity();
    Mat Tdot = Mat::Zero(n, n), nvT = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k) {
      Tdot += T.dT[k] * f.v(k);
      nvT += nablaT[k] * f.v(k);
    }
    BodyState out = BodyState::with_velocity(s.x, e2, f.v, Tdot * s.e + T.T * f.edot);
    AffineVelocity av = affine_velocity(s, M);
    Mat ei = invert_frame(s.e);
    TransformPrediction p{out, {}, {}, {}, {}, {}};
    p.Omega = T.T * av.Omega * Ti + nvT * Ti;
    p.OmegaHat = av.OmegaHat + ei * Ti * nvT * s.e;
    return p;
  }
  const auto& f = s.momentum();
  Mat P2 = f.P * Ti;
  Vec p2 = f.p;
  for (int k = 0; k < n; ++k) p2(k) -= (P2 * T.dT[k] * s.e).trace();
  BodyState out = BodyState::with_momentum(s.x, e2, p2, P2);
  MomentumSnapshot ms = momentum_snapshot(s, M);
  TransformPrediction p{out, {}, {}, {}, {}, {}};
  p.Sigma = T.T * ms.Sigma * Ti;
  p.SigmaHat = ms.SigmaHat;
  Vec Pc = ms.P_cov;
  for (int i = 0; i < n; ++i) Pc(i) -= (ms.Sigma * Ti * nablaT[i]).trace();
  p.P_cov = Pc;
  return p;
}

/// Micromaterial action e → e L(x).
inline TransformPrediction transform_material(const BodyState& s, const MaterialMap& L, const Manifold& M) {
  M.require_domain(s.x);
  const int n = s.dim();
  Mat Li = invert_frame(L.L);
  Mat e2 = s.e * L.L;
  if (s.has_velocity()) {
    const auto& f = s.velocity();
    Mat Ldot = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k) Ldot += L.dL[k] * f.v(k);
    BodyState out = BodyState::with_velocity(s.x, e2, f.v, f.edot * L.L + s.e * Ldot);
    AffineVelocity av = affine_velocity(s, M);
    Mat ei = invert_frame(s.e);
    TransformPrediction p{out, {}, {}, {}, {}, {}};
    p.Omega = av.Omega + s.e * Ldot * Li * ei;
    p.OmegaHat = Li * av.OmegaHat * L.L + Li * Ldot;
    return p;
  }
  const auto& f = s.momentum();
  Mat P2 = Li * f.P;
  MomentumSnapshot ms = momentum_snapshot(s, M);
  Vec p2 = f.p;
  for (int k = 0; k < n; ++k) p2(k) -= (Li * ms.SigmaHat * L.dL[k]).trace();
  BodyState out = BodyState::with_momentum(s.x, e2, p2, P2);
  TransformPrediction p{out, {}, {}, {}, {}, {}};
  p.Sigma = ms.Sigma;
  p.SigmaHat = Li * ms.SigmaHat * L.L;
  Vec Pc = ms.P_cov;
  for (int i = 0; i < n; ++i) Pc(i) -= (ms.SigmaHat * L.dL[i] * Li).trace();
  p.P_cov = Pc;
  return p;
}

}  // namespace gyro
