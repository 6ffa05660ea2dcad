#include "rio/factors.hpp"

#include <cmath>
#include <stdexcept>

#include "rio/atmosphere.hpp"

namespace rio {

double doppler_residual(const NavState& state, const Vec3& angular_velocity,
                        const RadarDetection& detection, const Calibration& calib,
                        DopplerJacobians* jacobians) {
  if (std::abs(detection.bearing.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("doppler_residual: bearing is not a unit vector");
  }
  const Mat3& r_ib = state.rotation.matrix();
  const Mat3& r_br = calib.T_BR.rotation.matrix();
  const Vec3& t_br = calib.T_BR.translation;
  const Vec3& e = detection.bearing;

  // Lever-arm velocity in the body frame, then the radar-frame projection:
  // r = -e^T R_BR^T (R_IB^T v_IB + (omega - b_g) x t_BR) - v_d.
  const Vec3 lever = (angular_velocity - state.gyro_bias).cross(t_br);
  const Vec3 v_body = r_ib.transpose() * state.velocity;
  const double residual = -e.dot(r_br.transpose() * (v_body + lever)) - detection.doppler;

  if (jacobians) {
    const RowVec3 e_br = e.transpose() * r_br.transpose();
    jacobians->d_rotation = -e_br * so3::hat(v_body);
    jacobians->d_velocity = -e_br * r_ib.transpose();
    jacobians->d_gyro_bias = -e_br * so3::hat(t_br);
  }
  return residual;
}

double baro_residual(const NavState& state, const BaroSample& baro, double h0,
                     RowVec3* d_position) {
  if (d_position) {
    *d_position = RowVec3(0.0, 0.0, 1.0);
  }
  return state.position.z() + h0 - pressure_to_altitude(baro.pressure);
}

Vec3 track_residual(const NavState& state, const Vec3& track_position,
                    const RadarDetection& detection, const Calibration& calib,
                    TrackJacobians* jacobians) {
  const Mat3& r_ib = state.rotation.matrix();
  const Mat3& r_br = calib.T_BR.rotation.matrix();
  const Vec3 in_body = r_ib.transpose() * (track_position - state.position);
  const Vec3 residual = r_br.transpose() * (in_body - calib.T_BR.translation) - detection.position;

  if (jacobians) {
    jacobians->d_rotation = r_br.transpose() * so3::hat(in_body);
    jacobians->d_position = -r_br.transpose() * r_ib.transpose();
    jacobians->d_track = r_br.transpose() * r_ib.transpose();
  }
  return residual;
}

Vec15 imu_residual(const NavState& state_i, const NavState& state_j,
                   const PreintegratedImu& pim, const Vec3& gravity, Mat15* d_state_i,
                   Mat15* d_state_j) {
  const double dt = pim.delta_time;
  if (std::abs(state_i.stamp - pim.start_time) > 1e-3 ||
      std::abs(state_j.stamp - (pim.start_time + dt)) > 1e-3) {
    throw std::invalid_argument("imu_residual: state stamps do not match the preintegration interval");
  }

  const CorrectedDeltas d = bias_corrected_deltas(pim, state_i.gyro_bias, state_i.accel_bias);
  const Mat3 r_i_t = state_i.rotation.matrix().transpose();

  const Mat3 e_rot = d.rotation.matrix().transpose() * r_i_t * state_j.rotation.matrix();
  const Vec3 r_rot = so3::log(e_rot);
  const Vec3 p_term = r_i_t * (state_j.position - state_i.position - state_i.velocity * dt -
                               0.5 * gravity * dt * dt);
  const Vec3 v_term = r_i_t * (state_j.velocity - state_i.velocity - gravity * dt);

  Vec15 residual;
  residual.segment<3>(kRotBlock) = r_rot;
  residual.segment<3>(kPosBlock) = p_term - d.position;
  residual.segment<3>(kVelBlock) = v_term - d.velocity;
  residual.segment<3>(kBgBlock) = state_j.gyro_bias - state_i.gyro_bias;
  residual.segment<3>(kBaBlock) = state_j.accel_bias - state_i.accel_bias;

  if (d_state_i || d_state_j) {
    const Mat3 jr_inv = so3::right_jacobian_inverse(r_rot);
    const Mat3 r_j_t_r_i = state_j.rotation.matrix().transpose() * state_i.rotation.matrix();
    const Vec3 dbg = state_i.gyro_bias - pim.gyro_bias_lin;
    const Vec3 bias_twist = pim.d_rotation_d_bg * dbg;

    if (d_state_i) {
      Mat15& J = *d_state_i;
      J.setZero();
      J.block<3, 3>(kRotBlock, kRotBlock) = -jr_inv * r_j_t_r_i;
      J.block<3, 3>(kRotBlock, kBgBlock) =
          -jr_inv * e_rot.transpose() * so3::right_jacobian(bias_twist) * pim.d_rotation_d_bg;
      J.block<3, 3>(kPosBlock, kRotBlock) = so3::hat(p_term);
      J.block<3, 3>(kPosBlock, kPosBlock) = -r_i_t;
      J.block<3, 3>(kPosBlock, kVelBlock) = -r_i_t * dt;
      J.block<3, 3>(kPosBlock, kBgBlock) = -pim.d_position_d_bg;
      J.block<3, 3>(kPosBlock, kBaBlock) = -pim.d_position_d_ba;
      J.block<3, 3>(kVelBlock, kRotBlock) = so3::hat(v_term);
      J.block<3, 3>(kVelBlock, kVelBlock) = -r_i_t;
      J.block<3, 3>(kVelBlock, kBgBlock) = -pim.d_velocity_d_bg;
      J.block<3, 3>(kVelBlock, kBaBlock) = -pim.d_velocity_d_ba;
      J.block<3, 3>(kBgBlock, kBgBlock) = -Mat3::Identity();
      J.block<3, 3>(kBaBlock, kBaBlock) = -Mat3::Identity();
    }
    if (d_state_j) {
      Mat15& J = *d_state_j;
      J.setZero();
      J.block<3, 3>(kRotBlock, kRotBlock) = jr_inv;
      J.block<3, 3>(kPosBlock, kPosBlock) = r_i_t;
      J.block<3, 3>(kVelBlock, kVelBlock) = r_i_t;
      J.block<3, 3>(kBgBlock, kBgBlock) = Mat3::Identity();
      J.block<3, 3>(kBaBlock, kBaBlock) = Mat3::Identity();
    }
  }
  return residual;
}

Vec15 prior_residual(const NavState& state, const NavState& prior, Mat15* d_state) {
  Vec15 residual;
  const Vec3 r_rot = so3::log(state.rotation.matrix().transpose() * prior.rotation.matrix());
  residual.segment<3>(kRotBlock) = r_rot;
  residual.segment<3>(kPosBlock) = state.position - prior.position;
  residual.segment<3>(kVelBlock) = state.velocity - prior.velocity;
  residual.segment<3>(kBgBlock) = state.gyro_bias - prior.gyro_bias;
  residual.segment<3>(kBaBlock) = state.accel_bias - prior.accel_bias;

  if (d_state) {
    d_state->setIdentity();
    d_state->block<3, 3>(kRotBlock, kRotBlock) =
        -so3::right_jacobian_inverse(r_rot) * so3::exp(-r_rot);
  }
  return residual;
}

}  // namespace rio
