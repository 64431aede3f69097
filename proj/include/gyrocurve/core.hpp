#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace gyro {

inline constexpr double kPi = std::numbers::pi;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Errors. Each maps onto one failure family of the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error { using Error::Error; };
struct SingularMetricError : Error { using Error::Error; };
struct MetricityError : Error { using Error::Error; };
struct SingularFrameError : Error { using Error::Error; };
struct SingularInertiaError : Error { using Error::Error; };
struct ConstraintViolationError : Error { using Error::Error; };
struct StepFailure : Error {
  double time = 0.0;
  StepFailure(const std::string& what, double t) : Error(what), time(t) {}
};
struct UnknownObservableError : Error { using Error::Error; };
struct UnboundMotionError : Error { using Error::Error; };
struct QuadratureError : Error { using Error::Error; };
struct RegimeError : Error { using Error::Error; };
struct RootFindError : Error { using Error::Error; };
struct DegenerateDeformationError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };

/// Dense rank-3 array T(i,j,k), row-major, all indices of range n.
/// Used for connection coefficients Γ^i_jk (last index = differentiation direction).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), d_(static_cast<std::size_t>(n) * n * n, 0.0) {}

  int dim() const { return n_; }
  double& operator()(int i, int j, int k) { return d_[(static_cast<std::size_t>(i) * n_ + j) * n_ + k]; }
  double operator()(int i, int j, int k) const { return d_[(static_cast<std::size_t>(i) * n_ + j) * n_ + k]; }

  Tensor3& operator+=(const Tensor3& o) {
    for (std::size_t a = 0; a < d_.size(); ++a) d_[a] += o.d_[a];
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    for (std::size_t a = 0; a < d_.size(); ++a) d_[a] -= o.d_[a];
    return *this;
  }
  Tensor3& operator*=(double s) {
    for (double& v : d_) v *= s;
    return *this;
  }
  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (double v : d_) m = std::max(m, std::abs(v));
    return m;
  }
  const std::vector<double>& data() const { return d_; }
  std::vector<double>& data() { return d_; }

 private:
  int n_ = 0;
  std::vector<double> d_;
};

/// Dense rank-4 array, used for curvature R^l_kij.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int n) : n_(n), d_(static_cast<std::size_t>(n) * n * n * n, 0.0) {}

  int dim() const { return n_; }
  double& operator()(int a, int b, int c, int d) { return d_[idx(a, b, c, d)]; }
  double operator()(int a, int b, int c, int d) const { return d_[idx(a, b, c, d)]; }

  double max_abs() const {
    double m = 0.0;
    for (double v : d_) m = std::max(m, std::abs(v));
    return m;
  }
  Tensor4& operator*=(double s) {
    for (double& v : d_) v *= s;
    return *this;
  }
  const std::vector<double>& data() const { return d_; }

 private:
  std::size_t idx(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * n_ + b) * n_ + c) * n_ + d;
  }
  int n_ = 0;
  std::vector<double> d_;
};

/// Fourth-order central difference of a vector/matrix valued function along coordinate k.
template <class F>
auto central_diff(const F& f, const Vec& x, int k, double h) {
  Vec xp2 = x, xp1 = x, xm1 = x, xm2 = x;
  xp2(k) += 2 * h;
  xp1(k) += h;
  xm1(k) -= h;
  xm2(k) -= 2 * h;
  using R = std::decay_t<decltype(f(x))>;
  const R a = f(xp2), b = f(xp1), c = f(xm1), d = f(xm2);
  return R((-a + 8.0 * b - 8.0 * c + d) / (12.0 * h));
}

/// Same stencil for Tensor3-valued functions.
template <class F>
Tensor3 central_diff_t3(const F& f, const Vec& x, int k, double h) {
  Vec xp2 = x, xp1 = x, xm1 = x, xm2 = x;
  xp2(k) += 2 * h;
  xp1(k) += h;
  xm1(k) -= h;
  xm2(k) -= 2 * h;
  Tensor3 a = f(xp2), b = f(xp1), c = f(xm1), d = f(xm2);
  Tensor3 r(a.dim());
  for (std::size_t i = 0; i < r.data().size(); ++i)
    r.data()[i] = (-a.data()[i] + 8.0 * b.data()[i] - 8.0 * c.data()[i] + d.data()[i]) / (12.0 * h);
  return r;
}

inline Mat rotation2(double angle) {
  Mat r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

inline Mat skew_generator2() {
  Mat s(2, 2);
  s << 0.0, -1.0, 1.0, 0.0;
  return s;
}

}  // namespace gyro
