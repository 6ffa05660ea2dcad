#pragma once

#include <Eigen/Core>

#include "rio/geometry.hpp"

namespace rio {

using Vec15 = Eigen::Matrix<double, 15, 1>;

// Block layout of all 15-dimensional state vectors, residuals, and Jacobians:
// [rotation(3), position(3), velocity(3), gyro_bias(3), accel_bias(3)].
inline constexpr int kRotBlock = 0;
inline constexpr int kPosBlock = 3;
inline constexpr int kVelBlock = 6;
inline constexpr int kBgBlock = 9;
inline constexpr int kBaBlock = 12;
inline constexpr int kStateDim = 15;

// Navigation state at one radar timestamp. Rotation and position are the
// body (IMU) frame expressed in the inertial frame; velocity is inertial.
struct NavState {
  Rotation rotation;               // R_IB
  Vec3 position{Vec3::Zero()};     // t_IB [m]
  Vec3 velocity{Vec3::Zero()};     // v_IB [m/s]
  Vec3 gyro_bias{Vec3::Zero()};    // [rad/s], body frame
  Vec3 accel_bias{Vec3::Zero()};   // [m/s^2], body frame
  double stamp{0.0};               // [s]
};

// Manifold update: rotation by right-multiplied exponential, the remaining
// blocks additively. Throws std::invalid_argument on non-finite delta.
NavState retract(const NavState& state, const Vec15& delta);

// Inverse of retract: local_coordinates(x, retract(x, d)) == d.
Vec15 local_coordinates(const NavState& origin, const NavState& target);

}  // namespace rio
