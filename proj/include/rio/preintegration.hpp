#pragma once

#include <Eigen/Core>
#include <span>

#include "rio/geometry.hpp"
#include "rio/state.hpp"
#include "rio/types.hpp"

namespace rio {

using Mat9 = Eigen::Matrix<double, 9, 9>;

enum class ImuIntegration { kMidpoint, kEuler };

// Accumulated relative motion between two radar states: gravity-free
// orientation/velocity/position deltas, their 9x9 covariance in block order
// [rotation, velocity, position], and first-order bias Jacobians around the
// linearization bias.
struct PreintegratedImu {
  Rotation delta_rotation;
  Vec3 delta_velocity{Vec3::Zero()};
  Vec3 delta_position{Vec3::Zero()};
  double delta_time{0.0};
  double start_time{0.0};

  Mat9 covariance{Mat9::Zero()};

  Vec3 gyro_bias_lin{Vec3::Zero()};
  Vec3 accel_bias_lin{Vec3::Zero()};
  Mat3 d_rotation_d_bg{Mat3::Zero()};
  Mat3 d_velocity_d_bg{Mat3::Zero()};
  Mat3 d_velocity_d_ba{Mat3::Zero()};
  Mat3 d_position_d_bg{Mat3::Zero()};
  Mat3 d_position_d_ba{Mat3::Zero()};
};

// Integrates samples over [start_time, end_time] with zero-order hold at the
// boundaries and the configured per-step rule between samples. Throws
// std::invalid_argument on an empty list, non-increasing timestamps, or a
// non-positive interval.
PreintegratedImu preintegrate(std::span<const ImuSample> samples,
                              const Vec3& gyro_bias_lin, const Vec3& accel_bias_lin,
                              const NoiseConfig& noise, double start_time, double end_time,
                              ImuIntegration scheme = ImuIntegration::kMidpoint);

// Bias-corrected deltas at the given state biases (first-order correction
// around the linearization point).
struct CorrectedDeltas {
  Rotation rotation;
  Vec3 velocity;
  Vec3 position;
};
CorrectedDeltas bias_corrected_deltas(const PreintegratedImu& pim, const Vec3& gyro_bias,
                                      const Vec3& accel_bias);

// Forward state propagation through the preintegrated deltas.
NavState apply_preintegration(const NavState& state, const PreintegratedImu& pim,
                              const Vec3& gravity);

}  // namespace rio
