#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// SO(3) maps on 3x3 direction cosine matrices. Angle-axis tangent vectors,
// angles in radians. All functions total: small-angle and near-pi branches
// switch to series / stable-axis forms instead of failing.
namespace so3 {

Mat3 hat(const Vec3& v);

// Rodrigues formula; exp(0) = I.
Mat3 exp(const Vec3& theta);

// Inverse of exp. Angle in [0, pi]; at exactly pi the axis sign follows the
// dominant diagonal element (axis component for the largest R_kk >= 0).
Vec3 log(const Mat3& rotation);

// Right Jacobian of exp and its inverse: exp(theta + d) ~ exp(theta) exp(Jr d).
Mat3 right_jacobian(const Vec3& theta);
Mat3 right_jacobian_inverse(const Vec3& theta);

// Nearest rotation in Frobenius norm (polar decomposition via SVD).
Mat3 project(const Mat3& m);

}  // namespace so3

// Rotation mapping vectors from child frame to parent frame (R_AB: B -> A).
class Rotation {
 public:
  Rotation() : dcm_(Mat3::Identity()) {}
  explicit Rotation(const Mat3& dcm) : dcm_(dcm) {}

  static Rotation exp(const Vec3& theta) { return Rotation(so3::exp(theta)); }
  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    return Rotation(q.normalized().toRotationMatrix());
  }

  Vec3 log() const { return so3::log(dcm_); }
  Rotation inverse() const { return Rotation(dcm_.transpose()); }
  Rotation orthonormalized() const { return Rotation(so3::project(dcm_)); }

  Rotation operator*(const Rotation& rhs) const { return Rotation(dcm_ * rhs.dcm_); }
  Vec3 operator*(const Vec3& v) const { return dcm_ * v; }

  const Mat3& matrix() const { return dcm_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(dcm_); }

  bool is_approx(const Rotation& rhs, double tol = 1e-9) const {
    return dcm_.isApprox(rhs.dcm_, tol);
  }

 private:
  Mat3 dcm_;
};

// Rigid transform T_AB = (R_AB, t_AB): x_A = R_AB x_B + t_AB.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation{Vec3::Zero()};

  RigidTransform() = default;
  RigidTransform(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    const Rotation rinv = rotation.inverse();
    return {rinv, -(rinv * translation)};
  }
};

}  // namespace rio
