#include "rio/preintegration.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace rio {

namespace {

struct Step {
  double dt;
  Vec3 gyro;
  Vec3 accel;
};

// Zero-order hold outside the sample range, per-interval values inside.
// Midpoint averages the two bounding samples, Euler holds the left one.
std::vector<Step> build_steps(std::span<const ImuSample> samples, double start_time,
                              double end_time, ImuIntegration scheme) {
  std::vector<Step> steps;
  steps.reserve(samples.size() + 1);
  auto emit = [&](double t0, double t1, const Vec3& w, const Vec3& a) {
    const double lo = std::max(t0, start_time);
    const double hi = std::min(t1, end_time);
    if (hi > lo) steps.push_back({hi - lo, w, a});
  };

  emit(start_time, samples.front().stamp, samples.front().angular_velocity,
       samples.front().linear_acceleration);
  for (size_t k = 0; k + 1 < samples.size(); ++k) {
    const ImuSample& s0 = samples[k];
    const ImuSample& s1 = samples[k + 1];
    if (scheme == ImuIntegration::kMidpoint) {
      emit(s0.stamp, s1.stamp, 0.5 * (s0.angular_velocity + s1.angular_velocity),
           0.5 * (s0.linear_acceleration + s1.linear_acceleration));
    } else {
      emit(s0.stamp, s1.stamp, s0.angular_velocity, s0.linear_acceleration);
    }
  }
  emit(samples.back().stamp, end_time, samples.back().angular_velocity,
       samples.back().linear_acceleration);
  return steps;
}

}  // namespace

PreintegratedImu preintegrate(std::span<const ImuSample> samples, const Vec3& gyro_bias_lin,
                              const Vec3& accel_bias_lin, const NoiseConfig& noise,
                              double start_time, double end_time, ImuIntegration scheme) {
  if (samples.empty()) {
    throw std::invalid_argument("preintegrate: empty sample list");
  }
  for (size_t k = 0; k + 1 < samples.size(); ++k) {
    if (samples[k + 1].stamp <= samples[k].stamp) {
      throw std::invalid_argument("preintegrate: timestamps not strictly increasing");
    }
  }
  if (end_time <= start_time) {
    throw std::invalid_argument("preintegrate: non-positive integration interval");
  }

  PreintegratedImu pim;
  pim.start_time = start_time;
  pim.delta_time = end_time - start_time;
  pim.gyro_bias_lin = gyro_bias_lin;
  pim.accel_bias_lin = accel_bias_lin;

  const double gyro_var = noise.gyro_noise_density * noise.gyro_noise_density;
  const double accel_var = noise.accel_noise_density * noise.accel_noise_density;

  Mat3 delta_r = Mat3::Identity();
  for (const Step& step : build_steps(samples, start_time, end_time, scheme)) {
    const double dt = step.dt;
    const Vec3 w = step.gyro - gyro_bias_lin;
    const Vec3 a = step.accel - accel_bias_lin;

    const Mat3 step_r = so3::exp(w * dt);
    // Orientation used for the acceleration terms: half-step ahead for the
    // midpoint rule, current for Euler.
    const Mat3 r_acc = scheme == ImuIntegration::kMidpoint
                           ? Mat3(delta_r * so3::exp(0.5 * w * dt))
                           : delta_r;
    const Mat3 a_hat = so3::hat(a);

    // Covariance propagation, block order [rotation, velocity, position].
    Mat9 transition = Mat9::Identity();
    transition.block<3, 3>(0, 0) = step_r.transpose();
    transition.block<3, 3>(3, 0) = -r_acc * a_hat * dt;
    transition.block<3, 3>(6, 0) = -0.5 * r_acc * a_hat * dt * dt;
    transition.block<3, 3>(6, 3) = Mat3::Identity() * dt;

    pim.covariance = transition * pim.covariance * transition.transpose();
    const Mat3 jr = so3::right_jacobian(w * dt);
    pim.covariance.block<3, 3>(0, 0) += jr * jr.transpose() * gyro_var * dt;
    pim.covariance.block<3, 3>(3, 3) += r_acc * r_acc.transpose() * accel_var * dt;
    pim.covariance.block<3, 3>(6, 6) += 0.25 * r_acc * r_acc.transpose() * accel_var * dt * dt * dt;

    // Bias Jacobians before updating the deltas they refer to.
    pim.d_position_d_bg += pim.d_velocity_d_bg * dt - 0.5 * r_acc * a_hat * pim.d_rotation_d_bg * dt * dt;
    pim.d_position_d_ba += pim.d_velocity_d_ba * dt - 0.5 * r_acc * dt * dt;
    pim.d_velocity_d_bg -= r_acc * a_hat * pim.d_rotation_d_bg * dt;
    pim.d_velocity_d_ba -= r_acc * dt;
    pim.d_rotation_d_bg = step_r.transpose() * pim.d_rotation_d_bg - jr * dt;

    pim.delta_position += pim.delta_velocity * dt + 0.5 * r_acc * a * dt * dt;
    pim.delta_velocity += r_acc * a * dt;
    delta_r = delta_r * step_r;
  }

  pim.delta_rotation = Rotation(so3::project(delta_r));
  return pim;
}

CorrectedDeltas bias_corrected_deltas(const PreintegratedImu& pim, const Vec3& gyro_bias,
                                      const Vec3& accel_bias) {
  const Vec3 dbg = gyro_bias - pim.gyro_bias_lin;
  const Vec3 dba = accel_bias - pim.accel_bias_lin;
  CorrectedDeltas out;
  out.rotation = pim.delta_rotation * Rotation::exp(pim.d_rotation_d_bg * dbg);
  out.velocity = pim.delta_velocity + pim.d_velocity_d_bg * dbg + pim.d_velocity_d_ba * dba;
  out.position = pim.delta_position + pim.d_position_d_bg * dbg + pim.d_position_d_ba * dba;
  return out;
}

NavState apply_preintegration(const NavState& state, const PreintegratedImu& pim,
                              const Vec3& gravity) {
  const CorrectedDeltas d = bias_corrected_deltas(pim, state.gyro_bias, state.accel_bias);
  const double dt = pim.delta_time;
  NavState out = state;
  out.rotation = state.rotation * d.rotation;
  out.position = state.position + state.velocity * dt + 0.5 * gravity * dt * dt +
                 state.rotation * d.position;
  out.velocity = state.velocity + gravity * dt + state.rotation * d.velocity;
  out.stamp = pim.start_time + dt;
  return out;
}

}  // namespace rio
