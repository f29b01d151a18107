#pragma once

// Constant-curvature vector algebra in the kappa-stereographic model.
//
// A point of M^d_kappa is a vector m in R^d with -kappa * |m|^2 < 1. For
// kappa < 0 this is the open ball of radius 1/sqrt(-kappa); for kappa >= 0 it
// is all of R^d. The basepoint used by every origin-based map is the zero
// vector. kappa == 0 is an exact Euclidean branch, never a limit.
//
// Two layers of API live here:
//   * kstereo::  raw kernels on Eigen vectors plus the derivative helpers the
//                encoder and the optimizers need for backpropagation;
//   * free functions on ManifoldPoint / TangentVector that validate shapes
//     and domains.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"

namespace curvlink {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kKappaMax = 10.0;
// Points with kappa < 0 are kept at norm <= (1 - kBallEps) / sqrt(-kappa).
inline constexpr double kBallEps = 1e-7;
// Floor applied to tangent norms before dividing by them.
inline constexpr double kMinNorm = 1e-15;
inline constexpr double kMinDenominator = 1e-15;

class Curvature {
 public:
  constexpr Curvature() = default;

  explicit Curvature(double kappa, double kappa_max = kKappaMax)
      : kappa_(kappa), flat_(kappa == 0.0) {
    if (!std::isfinite(kappa)) {
      throw DomainError("curvature must be finite");
    }
    if (std::abs(kappa) > kappa_max) {
      throw DomainError("|kappa| = " + std::to_string(std::abs(kappa)) +
                        " exceeds the maximum " + std::to_string(kappa_max));
    }
  }

  static Curvature flat() { return Curvature{}; }

  double value() const noexcept { return kappa_; }
  bool is_flat() const noexcept { return flat_; }
  bool is_hyperbolic() const noexcept { return !flat_ && kappa_ < 0.0; }
  bool is_spherical() const noexcept { return !flat_ && kappa_ > 0.0; }
  double sqrt_abs() const noexcept { return std::sqrt(std::abs(kappa_)); }

  friend bool operator==(const Curvature& a, const Curvature& b) noexcept {
    return a.kappa_ == b.kappa_ && a.flat_ == b.flat_;
  }

 private:
  double kappa_ = 0.0;
  bool flat_ = true;
};

enum class Trig { tan, tan_inv, cos, sin };

// Curvature-sign-selected trigonometry: hyperbolic functions for kappa < 0,
// circular ones for kappa > 0. The flat branch returns the shared limit
// (x for tan, tan_inv and sin; 1 for cos).
inline double trig_kappa(Trig kind, double x, Curvature k) {
  if (!std::isfinite(x)) {
    throw DomainError("trig_kappa: non-finite argument");
  }
  if (k.is_flat()) {
    return kind == Trig::cos ? 1.0 : x;
  }
  if (k.is_hyperbolic()) {
    switch (kind) {
      case Trig::tan:
        return std::tanh(x);
      case Trig::tan_inv: {
        constexpr double lim = 1.0 - kBallEps;
        return std::atanh(std::clamp(x, -lim, lim));
      }
      case Trig::cos:
        return std::cosh(x);
      case Trig::sin:
        return std::sinh(x);
    }
  }
  switch (kind) {
    case Trig::tan:
      return std::tan(x);
    case Trig::tan_inv:
      return std::atan(x);
    case Trig::cos:
      return std::cos(x);
    case Trig::sin:
      return std::sin(x);
  }
  return x;
}

namespace kstereo {

using ConstRef = Eigen::Ref<const Vector>;

inline double tan_k(double x, Curvature k) { return trig_kappa(Trig::tan, x, k); }
inline double artan_k(double x, Curvature k) {
  return trig_kappa(Trig::tan_inv, x, k);
}

inline double max_norm(Curvature k) {
  if (k.is_hyperbolic()) return (1.0 - kBallEps) / k.sqrt_abs();
  return std::numeric_limits<double>::infinity();
}

inline bool in_domain(const ConstRef& x, Curvature k) {
  if (!x.allFinite()) return false;
  return -k.value() * x.squaredNorm() < 1.0;
}

// Pulls x back inside the clamped ball; identity for kappa >= 0.
inline Vector project(Vector x, Curvature k) {
  if (k.is_hyperbolic()) {
    const double n = x.norm();
    const double lim = max_norm(k);
    if (n > lim) x *= lim / n;
  }
  return x;
}

inline double conformal_factor(const ConstRef& x, Curvature k) {
  if (k.is_flat()) return 2.0;
  return 2.0 / (1.0 + k.value() * x.squaredNorm());
}

inline Vector mobius_add(const ConstRef& x, const ConstRef& y, Curvature k) {
  if (k.is_flat()) return x + y;
  const double kv = k.value();
  const double xy = x.dot(y);
  const double x2 = x.squaredNorm();
  const double y2 = y.squaredNorm();
  const double den = 1.0 - 2.0 * kv * xy + kv * kv * x2 * y2;
  if (std::abs(den) < kMinDenominator) {
    throw NumericError("mobius_add: vanishing denominator");
  }
  return ((1.0 - 2.0 * kv * xy - kv * y2) * x + (1.0 + kv * x2) * y) / den;
}

inline Vector gyro_scale(double r, const ConstRef& x, Curvature k) {
  if (k.is_flat()) return r * x;
  const double n = x.norm();
  if (n == 0.0 || r == 0.0) return Vector::Zero(x.size());
  const double sk = k.sqrt_abs();
  const double t = tan_k(r * artan_k(sk * n, k), k) / sk;
  return project(t / n * x, k);
}

inline Vector exp_map(const ConstRef& x, const ConstRef& v, Curvature k) {
  if (k.is_flat()) return x + v;
  const double n = v.norm();
  if (n == 0.0) return x;
  const double sk = k.sqrt_abs();
  const double lam = conformal_factor(x, k);
  const double nn = std::max(n, kMinNorm);
  const Vector second = (tan_k(sk * lam * nn / 2.0, k) / (sk * nn)) * v;
  return project(mobius_add(x, second, k), k);
}

inline Vector log_map(const ConstRef& x, const ConstRef& y, Curvature k) {
  if (k.is_flat()) return y - x;
  if (x == y) return Vector::Zero(x.size());
  const Vector u = mobius_add(-x, y, k);
  const double n = u.norm();
  if (n == 0.0) return Vector::Zero(x.size());
  const double sk = k.sqrt_abs();
  const double lam = conformal_factor(x, k);
  const double nn = std::max(n, kMinNorm);
  return (2.0 / (lam * sk) * artan_k(sk * nn, k) / nn) * u;
}

inline double distance(const ConstRef& x, const ConstRef& y, Curvature k) {
  if (k.is_flat()) return 2.0 * (x - y).norm();
  if (x == y) return 0.0;
  const double sk = k.sqrt_abs();
  const double n = mobius_add(-x, y, k).norm();
  return 2.0 / sk * artan_k(sk * n, k);
}

// Radial maps y = g(|x|) * x. `dg_over_r` is g'(r) / r, which is what the
// Jacobian  g * I + (g'(r) / r) * x x^T  needs.
struct Radial {
  double g = 1.0;
  double dg_over_r = 0.0;
};

namespace detail {

// Below this |s| the closed forms of phi'(s)/s cancel badly; use series.
inline constexpr double kSeriesCutoff = 1e-2;

// tanh(s)/s (sign < 0) or tan(s)/s (sign > 0).
inline Radial tan_over(double s, double c, bool hyperbolic) {
  Radial out;
  if (s < kSeriesCutoff) {
    const double s2 = s * s;
    if (hyperbolic) {
      out.g = 1.0 - s2 / 3.0 + 2.0 * s2 * s2 / 15.0;
      out.dg_over_r =
          c * (-2.0 / 3.0 + 8.0 * s2 / 15.0 - 102.0 * s2 * s2 / 315.0 +
               496.0 * s2 * s2 * s2 / 2835.0);
    } else {
      out.g = 1.0 + s2 / 3.0 + 2.0 * s2 * s2 / 15.0;
      out.dg_over_r =
          c * (2.0 / 3.0 + 8.0 * s2 / 15.0 + 102.0 * s2 * s2 / 315.0 +
               496.0 * s2 * s2 * s2 / 2835.0);
    }
    if (s > 0.0) out.g = (hyperbolic ? std::tanh(s) : std::tan(s)) / s;
    return out;
  }
  if (hyperbolic) {
    const double t = std::tanh(s);
    const double sech2 = 1.0 - t * t;
    out.g = t / s;
    out.dg_over_r = c * (s * sech2 - t) / (s * s * s);
  } else {
    const double t = std::tan(s);
    const double sec2 = 1.0 + t * t;
    out.g = t / s;
    out.dg_over_r = c * (s * sec2 - t) / (s * s * s);
  }
  return out;
}

// atanh(s)/s (clamped) or atan(s)/s.
inline Radial artan_over(double s, double c, bool hyperbolic) {
  Radial out;
  if (hyperbolic && s > 1.0 - kBallEps) {
    const double a = std::atanh(1.0 - kBallEps);
    out.g = a / s;
    out.dg_over_r = -c * a / (s * s * s);
    return out;
  }
  if (s < kSeriesCutoff) {
    const double s2 = s * s;
    if (hyperbolic) {
      out.g = 1.0 + s2 / 3.0 + s2 * s2 / 5.0;
      out.dg_over_r = c * (2.0 / 3.0 + 4.0 * s2 / 5.0 + 6.0 * s2 * s2 / 7.0 +
                           8.0 * s2 * s2 * s2 / 9.0);
    } else {
      out.g = 1.0 - s2 / 3.0 + s2 * s2 / 5.0;
      out.dg_over_r = c * (-2.0 / 3.0 + 4.0 * s2 / 5.0 - 6.0 * s2 * s2 / 7.0 +
                           8.0 * s2 * s2 * s2 / 9.0);
    }
    if (s > 0.0) out.g = (hyperbolic ? std::atanh(s) : std::atan(s)) / s;
    return out;
  }
  if (hyperbolic) {
    const double a = std::atanh(s);
    out.g = a / s;
    out.dg_over_r = c * (s / (1.0 - s * s) - a) / (s * s * s);
  } else {
    const double a = std::atan(s);
    out.g = a / s;
    out.dg_over_r = c * (s / (1.0 + s * s) - a) / (s * s * s);
  }
  return out;
}

}  // namespace detail

// exp at the origin: exp_0(v) = tan_k(sqrt|k| |v|) / (sqrt|k| |v|) * v.
inline Radial exp0_factor(double r, Curvature k) {
  if (k.is_flat()) return {};
  const double c = std::abs(k.value());
  return detail::tan_over(std::sqrt(c) * r, c, k.is_hyperbolic());
}

// log at the origin: log_0(x) = artan_k(sqrt|k| |x|) / (sqrt|k| |x|) * x.
inline Radial log0_factor(double r, Curvature k) {
  if (k.is_flat()) return {};
  const double c = std::abs(k.value());
  return detail::artan_over(std::sqrt(c) * r, c, k.is_hyperbolic());
}

// Gyro scaling by one half: tan_k(artan_k(s)/2)/s = 1 / (1 + sqrt(1 + k r^2)).
inline Radial half_factor(double r, Curvature k) {
  if (k.is_flat()) return {0.5, 0.0};
  const double kv = k.value();
  const double q = std::sqrt(std::max(1.0 + kv * r * r, kMinDenominator));
  return {1.0 / (1.0 + q), -kv / (q * (1.0 + q) * (1.0 + q))};
}

inline Vector exp0(const ConstRef& v, Curvature k) {
  return project(exp0_factor(v.norm(), k).g * v, k);
}

inline Vector log0(const ConstRef& x, Curvature k) {
  return log0_factor(x.norm(), k).g * x;
}

// Backward of y = g(|x|) x:  dx = g dy + (g'(r)/r) (x . dy) x.
inline Vector radial_backward(const ConstRef& x, const Radial& f,
                              const ConstRef& dy) {
  return f.g * dy + (f.dg_over_r * x.dot(dy)) * x;
}

// Weighted gyromidpoint of the rows of `points`:
//   mu = (1/2) (x) sum_i [w_i lambda_i / sum_j w_j (lambda_j - 1)] x_i.
// At kappa = 0 this is the weighted arithmetic mean.
inline Vector gyromidpoint(const Matrix& points, const ConstRef& weights,
                           Curvature k) {
  const Index n = points.rows();
  Vector lam(n);
  double den = 0.0;
  for (Index i = 0; i < n; ++i) {
    lam[i] = conformal_factor(points.row(i).transpose(), k);
    den += weights[i] * (lam[i] - 1.0);
  }
  if (std::abs(den) < kMinDenominator) {
    den = std::copysign(kMinDenominator, den);
  }
  Vector y = Vector::Zero(points.cols());
  for (Index i = 0; i < n; ++i) {
    y += (weights[i] * lam[i] / den) * points.row(i).transpose();
  }
  return project(half_factor(y.norm(), k).g * y, k);
}

// Backward of gyromidpoint. Accumulates into d_points / d_weights.
inline void gyromidpoint_backward(const Matrix& points, const ConstRef& weights,
                                  Curvature k, const ConstRef& d_out,
                                  Matrix& d_points, Vector& d_weights) {
  const Index n = points.rows();
  Vector lam(n);
  double den = 0.0;
  for (Index i = 0; i < n; ++i) {
    lam[i] = conformal_factor(points.row(i).transpose(), k);
    den += weights[i] * (lam[i] - 1.0);
  }
  if (std::abs(den) < kMinDenominator) {
    den = std::copysign(kMinDenominator, den);
  }
  Vector coef(n);
  Vector y = Vector::Zero(points.cols());
  for (Index i = 0; i < n; ++i) {
    coef[i] = weights[i] * lam[i] / den;
    y += coef[i] * points.row(i).transpose();
  }
  const Vector dy = radial_backward(y, half_factor(y.norm(), k), d_out);
  double g_sum = 0.0;
  Vector dcoef(n);
  for (Index i = 0; i < n; ++i) {
    dcoef[i] = dy.dot(points.row(i).transpose());
    g_sum += dcoef[i] * coef[i];
  }
  const double kv = k.is_flat() ? 0.0 : k.value();
  for (Index i = 0; i < n; ++i) {
    d_points.row(i) += coef[i] * dy.transpose();
    d_weights[i] += (dcoef[i] * lam[i] - g_sum * (lam[i] - 1.0)) / den;
    const double dlam = weights[i] * (dcoef[i] - g_sum) / den;
    d_points.row(i) += (-kv * lam[i] * lam[i] * dlam) * points.row(i);
  }
}

// Squared geodesic distance through the closed form
//   u = 2 |x - y|^2 / ((1 + k|x|^2)(1 + k|y|^2)),
//   d = acosh(1 + c u)/sqrt(c)  (k = -c < 0),  acos(1 - k u)/sqrt(k)  (k > 0),
// with optional gradients. Equal to distance(x, y, k)^2 up to rounding.
inline double sqdist(const ConstRef& x, const ConstRef& y, Curvature k,
                     Vector* grad_x = nullptr, Vector* grad_y = nullptr) {
  const Vector diff = x - y;
  const double diff2 = diff.squaredNorm();
  if (k.is_flat()) {
    if (grad_x) *grad_x = 8.0 * diff;
    if (grad_y) *grad_y = -8.0 * diff;
    return 4.0 * diff2;
  }
  const double kv = k.value();
  const double c = std::abs(kv);
  const double a = std::max(1.0 + kv * x.squaredNorm(), kMinDenominator);
  const double b = std::max(1.0 + kv * y.squaredNorm(), kMinDenominator);
  const double u = 2.0 * diff2 / (a * b);
  const double w = c * u;
  double d = 0.0;
  double df_du = 2.0;  // d(d^2)/du at u -> 0
  if (kv < 0.0) {
    d = 2.0 * std::asinh(std::sqrt(w / 2.0)) / std::sqrt(c);
    const double root = std::sqrt(w * (2.0 + w));
    if (root > 0.0) df_du = 2.0 * std::sqrt(c) * d / root;
  } else {
    const double h = std::min(w / 2.0, 1.0);
    d = 2.0 * std::asin(std::sqrt(h)) / std::sqrt(c);
    const double root = std::sqrt(std::max(w * (2.0 - w), 0.0));
    if (root > 0.0) df_du = 2.0 * std::sqrt(c) * d / root;
  }
  if (grad_x || grad_y) {
    const double pre = 4.0 / (a * b) * df_du;
    if (grad_x) *grad_x = pre * (diff - (diff2 * kv / a) * x);
    if (grad_y) *grad_y = pre * (-diff - (diff2 * kv / b) * y);
  }
  return d * d;
}

}  // namespace kstereo

// A point of the kappa-stereographic model. The domain constraint is checked
// on construction.
class ManifoldPoint {
 public:
  ManifoldPoint(Vector coords, Curvature k) : coords_(std::move(coords)), k_(k) {
    if (!kstereo::in_domain(coords_, k_)) {
      throw DomainError("point outside the kappa-stereographic domain");
    }
  }

  static ManifoldPoint origin(Index dim, Curvature k) {
    return ManifoldPoint(Vector::Zero(dim), k);
  }

  // Clamps into the domain instead of rejecting.
  static ManifoldPoint projected(Vector coords, Curvature k) {
    if (!coords.allFinite()) {
      throw NumericError("non-finite manifold coordinates");
    }
    return ManifoldPoint(kstereo::project(std::move(coords), k), k);
  }

  const Vector& coords() const noexcept { return coords_; }
  Curvature curvature() const noexcept { return k_; }
  Index dim() const noexcept { return coords_.size(); }

 private:
  Vector coords_;
  Curvature k_;
};

class TangentVector {
 public:
  TangentVector(Vector coords, ManifoldPoint base)
      : coords_(std::move(coords)), base_(std::move(base)) {
    if (coords_.size() != base_.dim()) {
      throw DomainError("tangent vector dimension differs from its basepoint");
    }
  }

  const Vector& coords() const noexcept { return coords_; }
  const ManifoldPoint& basepoint() const noexcept { return base_; }

 private:
  Vector coords_;
  ManifoldPoint base_;
};

namespace detail {

inline void require_compatible(const ManifoldPoint& x, const ManifoldPoint& y,
                               const char* op) {
  if (!(x.curvature() == y.curvature())) {
    throw DomainError(std::string(op) + ": points on different manifolds");
  }
  if (x.dim() != y.dim()) {
    throw DomainError(std::string(op) + ": dimension mismatch");
  }
}

}  // namespace detail

inline double conformal_factor(const ManifoldPoint& x) {
  return kstereo::conformal_factor(x.coords(), x.curvature());
}

inline ManifoldPoint mobius_add(const ManifoldPoint& x, const ManifoldPoint& y) {
  detail::require_compatible(x, y, "mobius_add");
  return ManifoldPoint::projected(
      kstereo::mobius_add(x.coords(), y.coords(), x.curvature()), x.curvature());
}

inline ManifoldPoint gyro_scale(double r, const ManifoldPoint& x) {
  if (!std::isfinite(r)) throw DomainError("gyro_scale: non-finite scalar");
  return ManifoldPoint::projected(kstereo::gyro_scale(r, x.coords(), x.curvature()),
                                  x.curvature());
}

inline ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v) {
  detail::require_compatible(x, v.basepoint(), "exp_map");
  return ManifoldPoint::projected(
      kstereo::exp_map(x.coords(), v.coords(), x.curvature()), x.curvature());
}

inline TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y) {
  detail::require_compatible(x, y, "log_map");
  return TangentVector(kstereo::log_map(x.coords(), y.coords(), x.curvature()), x);
}

inline double distance(const ManifoldPoint& x, const ManifoldPoint& y) {
  detail::require_compatible(x, y, "distance");
  return kstereo::distance(x.coords(), y.coords(), x.curvature());
}

// M (x) x = exp_0(M log_0(x)). A numerically zero image maps to the origin.
inline ManifoldPoint mobius_matvec(const Matrix& m, const ManifoldPoint& x) {
  if (m.cols() != x.dim()) {
    throw DomainError("mobius_matvec: matrix has " + std::to_string(m.cols()) +
                      " columns, point has dimension " + std::to_string(x.dim()));
  }
  const Curvature k = x.curvature();
  const Vector image = m * kstereo::log0(x.coords(), k);
  if (image.norm() < kMinNorm) return ManifoldPoint::origin(m.rows(), k);
  return ManifoldPoint::projected(kstereo::exp0(image, k), k);
}

inline ManifoldPoint gyromidpoint(std::span<const ManifoldPoint> points,
                                  std::span<const double> weights) {
  if (points.empty()) throw DomainError("gyromidpoint: no points");
  if (points.size() != weights.size()) {
    throw DomainError("gyromidpoint: points and weights differ in length");
  }
  const Curvature k = points.front().curvature();
  Matrix pts(static_cast<Index>(points.size()), points.front().dim());
  Vector w(static_cast<Index>(weights.size()));
  bool any_positive = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::require_compatible(points.front(), points[i], "gyromidpoint");
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw DomainError("gyromidpoint: weights must be finite and non-negative");
    }
    any_positive = any_positive || weights[i] > 0.0;
    pts.row(static_cast<Index>(i)) = points[i].coords().transpose();
    w[static_cast<Index>(i)] = weights[i];
  }
  if (!any_positive) throw DomainError("gyromidpoint: all weights are zero");
  return ManifoldPoint::projected(kstereo::gyromidpoint(pts, w, k), k);
}

inline ManifoldPoint gyromidpoint(std::span<const ManifoldPoint> points) {
  std::vector<double> w(points.size(), 1.0);
  return gyromidpoint(points, w);
}

// Lift a flat vector (a tangent vector at the origin) onto the manifold.
inline ManifoldPoint lift_to_manifold(const Vector& flat, Curvature k) {
  if (!flat.allFinite()) throw DomainError("lift_to_manifold: non-finite input");
  return ManifoldPoint::projected(kstereo::exp0(flat, k), k);
}

// Tangent coordinates at the origin; inverse of lift_to_manifold.
inline Vector drop_to_tangent(const ManifoldPoint& x) {
  return kstereo::log0(x.coords(), x.curvature());
}

}  // namespace curvlink
