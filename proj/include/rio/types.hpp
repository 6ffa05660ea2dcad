#pragma once

#include <Eigen/Core>

#include "rio/geometry.hpp"

namespace rio {

// Ground-truth provenance of a simulated detection; kUnknown for real data.
enum class DetectionLabel { kUnknown, kStatic, kMover, kGhost };

// One CFAR radar target, expressed in the radar frame.
struct RadarDetection {
  Vec3 position{Vec3::Zero()};  // p_T [m]
  Vec3 bearing{Vec3::UnitX()};  // e_T = p_T / ||p_T||
  double doppler{0.0};          // v_d [m/s], negative = approaching
  double range{0.0};            // ||p_T|| [m]
  double snr{0.0};              // [dB]
  double noise{0.0};            // [dB]
  double stamp{0.0};            // [s]
  DetectionLabel label{DetectionLabel::kUnknown};

  static RadarDetection from_position(const Vec3& p, double doppler, double snr,
                                      double noise, double stamp,
                                      DetectionLabel label = DetectionLabel::kUnknown) {
    RadarDetection d;
    d.position = p;
    d.range = p.norm();
    d.bearing = p / d.range;
    d.doppler = doppler;
    d.snr = snr;
    d.noise = noise;
    d.stamp = stamp;
    d.label = label;
    return d;
  }
};

struct ImuSample {
  Vec3 angular_velocity{Vec3::Zero()};     // [rad/s], body frame
  Vec3 linear_acceleration{Vec3::Zero()};  // specific force [m/s^2], body frame
  double stamp{0.0};                       // [s]
};

struct BaroSample {
  double pressure{101325.0};  // [Pa]
  double stamp{0.0};          // [s]
};

// Fixed sensor geometry and constants shared by factors and the simulator.
struct Calibration {
  RigidTransform T_BR;                // IMU-to-radar extrinsics
  Vec3 gravity{0.0, 0.0, -9.81};      // inertial frame [m/s^2]
};

// Noise parameters for factor weighting. Continuous-time IMU densities.
struct NoiseConfig {
  double sigma_doppler{0.05};  // [m/s]
  double sigma_baro{0.2};      // [m]
  Vec3 sigma_track{0.1, 0.1, 0.1};  // [m], diagonal of Sigma_T^(1/2)

  double gyro_noise_density{2.4e-4};    // [rad/s/sqrt(Hz)]
  double accel_noise_density{1.8e-3};   // [m/s^2/sqrt(Hz)]
  double gyro_bias_random_walk{1e-5};   // [rad/s^2/sqrt(Hz)]
  double accel_bias_random_walk{1e-4};  // [m/s^3/sqrt(Hz)]

  // Initial prior standard deviations per state block.
  Vec3 prior_sigma_rotation{0.01, 0.01, 1e-3};  // roll, pitch, yaw [rad]
  Vec3 prior_sigma_position{1e-3, 1e-3, 1e-3};  // [m]
  Vec3 prior_sigma_velocity{1e-3, 1e-3, 1e-3};  // [m/s]
  Vec3 prior_sigma_gyro_bias{1e-4, 1e-4, 1e-3};  // [rad/s], z loose: yaw bias
  Vec3 prior_sigma_accel_bias{0.1, 0.1, 0.1};    // [m/s^2]
};

}  // namespace rio
