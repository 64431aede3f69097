#pragma once

#include "gyrocurve/geometry.hpp"

namespace gyro {

/// Smooth field of reference frames E^i_A (columns are the legs E_A).
class FrameField {
 public:
  virtual ~FrameField() = default;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  virtual Mat frame(const Vec& x) const = 0;

  /// Element k holds ∂E^i_A/∂x^k.
  virtual std::vector<Mat> frame_partials(const Vec& x) const {
    std::vector<Mat> out;
    for (int k = 0; k < dim(); ++k)
      out.push_back(central_diff([this](const Vec& y) { return frame(y); }, x, k, fd_step_));
    return out;
  }

  virtual bool orthonormal() const { return false; }

  Mat coframe(const Vec& x) const {
    Mat E = frame(x);
    Eigen::FullPivLU<Mat> lu(E);
    if (!lu.isInvertible()) throw SingularFrameError("frame field is singular at the requested point");
    return lu.inverse();
  }

  /// ∂_k E^A_j = −E^A_a ∂_k E^a_B E^B_j.
  std::vector<Mat> coframe_partials(const Vec& x) const {
    Mat Ei = coframe(x);
    std::vector<Mat> dE = frame_partials(x);
    std::vector<Mat> out;
    for (const Mat& d : dE) out.push_back(-Ei * d * Ei);
    return out;
  }

  void set_fd_step(double h) { fd_step_ = h; }

 protected:
  double fd_step_ = 1e-5;
};

using FrameFieldPtr = std::shared_ptr<const FrameField>;

/// Holonomic chart frame ∂/∂x^i.
class CoordinateFrame : public FrameField {
 public:
  explicit CoordinateFrame(int n) : n_(n) {}
  int dim() const override { return n_; }
  std::string name() const override { return "coordinate"; }
  Mat frame(const Vec&) const override { return Mat::Identity(n_, n_); }
  std::vector<Mat> frame_partials(const Vec&) const override {
    return std::vector<Mat>(n_, Mat::Zero(n_, n_));
  }
  bool orthonormal() const override { return orthonormal_; }
  void declare_orthonormal(bool v) { orthonormal_ = v; }

 private:
  int n_;
  bool orthonormal_ = false;
};

/// E_(r) = ∂_r, E_(φ) = (R s(r/R))⁻¹ ∂_φ on a PolarSurface.
class PolarOrthonormalFrame : public FrameField {
 public:
  explicit PolarOrthonormalFrame(const PolarSurface& surface)
      : R_(surface.radius()), hyp_(surface.hyperbolic()) {}
  PolarOrthonormalFrame(double radius, bool hyperbolic) : R_(radius), hyp_(hyperbolic) {}

  int dim() const override { return 2; }
  std::string name() const override { return "polar-orthonormal"; }
  bool orthonormal() const override { return true; }

  Mat frame(const Vec& x) const override {
    Mat E = Mat::Zero(2, 2);
    E(0, 0) = 1.0;
    E(1, 1) = 1.0 / (R_ * s(x(0)));
    return E;
  }
  std::vector<Mat> frame_partials(const Vec& x) const override {
    std::vector<Mat> d(2, Mat::Zero(2, 2));
    const double sv = s(x(0));
    d[0](1, 1) = -c(x(0)) / (R_ * R_ * sv * sv);
    return d;
  }

 private:
  double s(double r) const { return hyp_ ? std::sinh(r / R_) : std::sin(r / R_); }
  double c(double r) const { return hyp_ ? std::cosh(r / R_) : std::cos(r / R_); }
  double R_;
  bool hyp_;
};

/// Frame given by an arbitrary function; derivatives by finite differences.
class FunctionFrame : public FrameField {
 public:
  using Fn = std::function<Mat(const Vec&)>;
  FunctionFrame(int n, Fn f, bool orthonormal = false, std::string name = "function")
      : n_(n), f_(std::move(f)), orth_(orthonormal), name_(std::move(name)) {}
  int dim() const override { return n_; }
  std::string name() const override { return name_; }
  Mat frame(const Vec& x) const override { return f_(x); }
  bool orthonormal() const override { return orth_; }

 private:
  int n_;
  Fn f_;
  bool orth_;
  std::string name_;
};

/// Lie bracket [X,Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i of two legs of the field.
inline Vec frame_lie_bracket(const FrameField& F, const Vec& x, int A, int B) {
  Mat E = F.frame(x);
  auto dE = F.frame_partials(x);
  const int n = F.dim();
  Vec out = Vec::Zero(n);
  for (int j = 0; j < n; ++j) out += E(j, A) * dE[j].col(B) - E(j, B) * dE[j].col(A);
  return out;
}

/// Ω^C_AB with [E_A, E_B] = Ω^C_AB E_C; stored as (C, A, B).
inline Tensor3 nonholonomy_at(const FrameField& F, const Vec& x) {
  const int n = F.dim();
  Mat Ei = F.coframe(x);
  Tensor3 W(n);
  for (int A = 0; A < n; ++A)
    for (int B = 0; B < n; ++B) {
      if (A == B) continue;
      Vec br = Ei * frame_lie_bracket(F, x, A, B);
      for (int C = 0; C < n; ++C) W(C, A, B) = br(C);
    }
  return W;
}

/// Γ_tel^i_jk = E^i_A ∂_k E^A_j.
inline Tensor3 teleparallel_connection_at(const FrameField& F, const Vec& x) {
  const int n = F.dim();
  Mat E = F.frame(x);
  auto dEi = F.coframe_partials(x);
  Tensor3 G(n);
  for (int k = 0; k < n; ++k) {
    Mat m = E * dEi[k];  // (i, j)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j, k) = m(i, j);
  }
  return G;
}

/// Partials of Γ_tel by differencing the teleparallel connection itself.
inline std::vector<Tensor3> teleparallel_connection_partials(const FrameField& F, const Vec& x, double h = 1e-5) {
  std::vector<Tensor3> out;
  for (int k = 0; k < F.dim(); ++k)
    out.push_back(central_diff_t3([&F](const Vec& y) { return teleparallel_connection_at(F, y); }, x, k, h));
  return out;
}

/// Torsion of the teleparallel connection from the coframe directly:
/// S^i_jk = ½ E^i_A (∂_k E^A_j − ∂_j E^A_k).
inline Tensor3 frame_torsion_at(const FrameField& F, const Vec& x) {
  const int n = F.dim();
  Mat E = F.frame(x);
  auto dEi = F.coframe_partials(x);
  Tensor3 S(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int A = 0; A < n; ++A) s += E(i, A) * (dEi[k](A, j) - dEi[j](A, k));
        S(i, j, k) = 0.5 * s;
      }
  return S;
}

/// Non-holonomic coefficients Γ^A_BC with Γ − Γ_tel = E^i_A Γ^A_BC E^B_j E^C_k.
inline Tensor3 nonholonomic_coeffs(const FrameField& F, const Tensor3& Gamma, const Vec& x) {
  const int n = F.dim();
  Mat E = F.frame(x);
  Mat Ei = F.coframe(x);
  Tensor3 D = Gamma - teleparallel_connection_at(F, x);
  Tensor3 out(n);
  for (int A = 0; A < n; ++A)
    for (int B = 0; B < n; ++B)
      for (int C = 0; C < n; ++C) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) s += Ei(A, i) * D(i, j, k) * E(j, B) * E(k, C);
        out(A, B, C) = s;
      }
  return out;
}

inline Tensor3 nonholonomic_coeffs(const FrameField& F, const Manifold& M, const Vec& x) {
  M.require_domain(x);
  return nonholonomic_coeffs(F, M.connection(x), x);
}

/// L with e_A = E_B L^B_A, i.e. L = E(x)⁻¹ e.
inline Mat relative_configuration(const Mat& e, const FrameField& F, const Vec& x) {
  Eigen::FullPivLU<Mat> lu(e);
  if (!lu.isInvertible()) throw SingularFrameError("internal frame is singular");
  return F.coframe(x) * e;
}

struct RelativeVelocities {
  Mat spatial;   // (dL/dt) L⁻¹
  Mat comoving;  // L⁻¹ (dL/dt)
};

inline RelativeVelocities relative_velocities(const Mat& L, const Mat& Ldot) {
  Eigen::FullPivLU<Mat> lu(L);
  if (!lu.isInvertible()) throw SingularFrameError("relative configuration L is singular");
  Mat Li = lu.inverse();
  return {Ldot * Li, Li * Ldot};
}

/// η-orthonormality residual max |E^T g E − I|.
inline double orthonormality_residual(const FrameField& F, const Manifold& M, const Vec& x) {
  Mat E = F.frame(x);
  return (E.transpose() * M.metric(x) * E - Mat::Identity(F.dim(), F.dim())).cwiseAbs().maxCoeff();
}

}  // namespace gyro
