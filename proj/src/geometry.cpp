#include "rio/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace rio::so3 {

namespace {
// Below this squared angle the trigonometric coefficients are replaced by
// their 2nd-order Taylor expansions (||theta|| < 1e-8 switches at 1e-16).
constexpr double kTaylorThresholdSq = 1e-16;
}  // namespace

Mat3 hat(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return m;
}

Mat3 exp(const Vec3& theta) {
  const double t2 = theta.squaredNorm();
  double a;  // sin(t)/t
  double b;  // (1-cos(t))/t^2
  if (t2 < kTaylorThresholdSq) {
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    const double t = std::sqrt(t2);
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
  const Mat3 s = hat(theta);
  return Mat3::Identity() + a * s + b * s * s;
}

Vec3 log(const Mat3& rotation) {
  // vee(R - R^T) = 2 sin(t) * axis
  const Vec3 w(rotation(2, 1) - rotation(1, 2),
               rotation(0, 2) - rotation(2, 0),
               rotation(1, 0) - rotation(0, 1));
  const double sin_t = 0.5 * w.norm();
  const double cos_t = std::clamp(0.5 * (rotation.trace() - 1.0), -1.0, 1.0);
  const double t = std::atan2(sin_t, cos_t);

  if (cos_t > -0.99999) {
    if (sin_t < 1e-9) {
      // t/(2 sin t) ~ 0.5 (1 + t^2/6)
      return (0.5 + t * t / 12.0) * w;
    }
    return (t / (2.0 * sin_t)) * w;
  }

  // Near pi: R_kk = cos t + (1-cos t) a_k^2, recover the axis through the
  // dominant diagonal element.
  int k = 0;
  rotation.diagonal().maxCoeff(&k);
  const int i = (k + 1) % 3;
  const int j = (k + 2) % 3;
  const double one_minus_c = 1.0 - cos_t;
  Vec3 axis;
  axis[k] = std::sqrt(std::max(rotation(k, k) - cos_t, 0.0) / one_minus_c);
  axis[i] = (rotation(k, i) + rotation(i, k)) / (2.0 * axis[k] * one_minus_c);
  axis[j] = (rotation(k, j) + rotation(j, k)) / (2.0 * axis[k] * one_minus_c);
  axis.normalize();
  if (axis.dot(w) < 0.0) axis = -axis;
  return t * axis;
}

Mat3 right_jacobian(const Vec3& theta) {
  const double t2 = theta.squaredNorm();
  double a;  // (1-cos t)/t^2
  double b;  // (t - sin t)/t^3
  if (t2 < kTaylorThresholdSq) {
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double t = std::sqrt(t2);
    a = (1.0 - std::cos(t)) / t2;
    b = (t - std::sin(t)) / (t2 * t);
  }
  const Mat3 s = hat(theta);
  return Mat3::Identity() - a * s + b * s * s;
}

Mat3 right_jacobian_inverse(const Vec3& theta) {
  const double t2 = theta.squaredNorm();
  double c;  // 1/t^2 - (1+cos t)/(2 t sin t)
  if (t2 < kTaylorThresholdSq) {
    c = 1.0 / 12.0 + t2 / 720.0;
  } else {
    const double t = std::sqrt(t2);
    c = 1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  }
  const Mat3 s = hat(theta);
  return Mat3::Identity() + 0.5 * s + c * s * s;
}

Mat3 project(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) *= -1.0;
  }
  return u * v.transpose();
}

}  // namespace rio::so3
