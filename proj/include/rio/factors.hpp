#pragma once

#include <Eigen/Core>

#include "rio/preintegration.hpp"
#include "rio/state.hpp"
#include "rio/types.hpp"

namespace rio {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using RowVec3 = Eigen::Matrix<double, 1, 3>;

// All Jacobians are with respect to right-perturbations of the rotation and
// additive perturbations of the remaining blocks, matching retract().

// Bearing Doppler residual [m/s]:
//   r = -((R_IB R_BR)^T v_IR)^T e_T - v_d,
//   v_IR = v_IB + R_IB ((omega - b_g) x t_BR).
// omega is the raw gyro sample nearest the radar stamp (zero-order hold).
// Throws std::invalid_argument if the detection bearing is not unit length.
struct DopplerJacobians {
  RowVec3 d_rotation;
  RowVec3 d_velocity;
  RowVec3 d_gyro_bias;
};
double doppler_residual(const NavState& state, const Vec3& angular_velocity,
                        const RadarDetection& detection, const Calibration& calib,
                        DopplerJacobians* jacobians = nullptr);

// Barometric residual [m]: r = e_z^T t_IB + h0 - h(p). Jacobian w.r.t.
// position is the constant e_z^T.
double baro_residual(const NavState& state, const BaroSample& baro, double h0,
                     RowVec3* d_position = nullptr);

// Zero-velocity track residual [m]:
//   r = (R_IB R_BR)^T (l - t_IB - R_IB t_BR) - p_T.
struct TrackJacobians {
  Mat3 d_rotation;
  Mat3 d_position;
  Mat3 d_track;
};
Vec3 track_residual(const NavState& state, const Vec3& track_position,
                    const RadarDetection& detection, const Calibration& calib,
                    TrackJacobians* jacobians = nullptr);

// Preintegrated IMU residual, blocks [r_dR, r_dt, r_dv, r_dbg, r_dba].
// Throws std::invalid_argument when the state stamps disagree with the
// preintegration interval by more than 1 ms.
Vec15 imu_residual(const NavState& state_i, const NavState& state_j,
                   const PreintegratedImu& pim, const Vec3& gravity,
                   Mat15* d_state_i = nullptr, Mat15* d_state_j = nullptr);

// Prior residual: log-map rotation block, additive remainder.
Vec15 prior_residual(const NavState& state, const NavState& prior,
                     Mat15* d_state = nullptr);

}  // namespace rio
