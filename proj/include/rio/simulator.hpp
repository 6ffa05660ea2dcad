#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rio/geometry.hpp"
#include "rio/types.hpp"

namespace rio {

// Analytic ground-truth trajectories. All profiles start level at the origin
// after a standstill interval and ramp the speed with a C2 profile, so IMU
// streams derived from them integrate cleanly at 400 Hz.
struct TrajectoryConfig {
  enum class Type { kHover, kLine, kCircle, kSlalom };
  Type type{Type::kHover};
  double speed{1.0};           // cruise [m/s]
  double radius{5.0};          // circle [m]
  double amplitude{1.0};       // slalom lateral amplitude [m]
  double wavelength{8.0};      // slalom period along track [m]
  double ramp_duration{1.0};   // speed ramp [s]
  double static_interval{1.5}; // standstill for turn-on calibration [s]
  Vec3 line_direction{1.0, 0.0, 0.0};
  bool yaw_follow{true};       // circle: heading tracks the tangent
};

struct StaticTarget {
  Vec3 position{Vec3::Zero()};   // inertial frame [m]
  double detectability{1.0};     // per-frame detection probability
};

struct MoverConfig {
  Vec3 start_position{Vec3::Zero()};
  Vec3 velocity{Vec3::Zero()};
  double start_time{0.0};
  double duration{0.0};
  std::vector<Vec3> point_offsets{Vec3::Zero()};  // reflection points on the body
};

struct GroundEffectEvent {
  double time{0.0};      // onset [s]
  double duration{1.0};  // [s]
  double delta_pa{0.0};  // peak pressure disturbance [Pa]
};

struct Scenario {
  std::string name{"scenario"};
  std::uint64_t seed{1};
  double duration{10.0};  // [s]
  TrajectoryConfig trajectory;

  std::vector<StaticTarget> targets;
  std::vector<MoverConfig> movers;
  double ghost_rate{0.0};  // expected ghosts per frame

  double imu_rate{400.0};
  double radar_rate{8.0};
  double baro_rate{50.0};

  double max_range{10.95};             // [m]
  double max_radial_velocity{2.56};    // [m/s]
  double doppler_resolution{0.04};     // [m/s]
  bool quantize_doppler{false};
  double fov_azimuth_deg{60.0};
  double fov_elevation_deg{40.0};
  double elevation_bias_deg{0.0};      // systematic DoA bias

  bool noise_enabled{true};
  double sigma_doppler{0.05};          // [m/s]
  double sigma_baro_m{0.2};            // altitude-equivalent [m]
  double gyro_noise_density{2.4e-4};   // [rad/s/sqrt(Hz)]
  double accel_noise_density{1.8e-3};  // [m/s^2/sqrt(Hz)]
  Vec3 gyro_bias{Vec3::Zero()};
  Vec3 accel_bias{Vec3::Zero()};

  bool baro_enabled{true};
  double base_altitude{0.0};  // inertial z = 0 maps to this altitude [m]
  std::vector<GroundEffectEvent> ground_effects;

  Calibration calibration;
};

// Kinematically consistent truth sample (analytic derivatives).
struct TrajectorySample {
  double stamp{0.0};
  Rotation rotation;                      // R_IB
  Vec3 position{Vec3::Zero()};            // [m]
  Vec3 velocity{Vec3::Zero()};            // inertial [m/s]
  Vec3 acceleration{Vec3::Zero()};        // inertial [m/s^2]
  Vec3 angular_velocity{Vec3::Zero()};    // body [rad/s]
};

struct RadarFrame {
  double stamp{0.0};
  std::vector<RadarDetection> detections;
};

struct SimulationResult {
  std::vector<ImuSample> imu;
  std::vector<RadarFrame> radar;
  std::vector<BaroSample> baro;
  std::vector<TrajectorySample> truth_imu_rate;
  std::vector<TrajectorySample> truth_radar_rate;
};

// Deterministic generator: a fixed seed reproduces every stream bit for bit.
// Static scenes (zero body velocity and rate) re-emit identical static
// detections with exactly zero Doppler, which is what makes zero-velocity
// association possible downstream.
class Simulator {
 public:
  explicit Simulator(const Scenario& scenario);

  TrajectorySample sample_trajectory(double t) const;

  std::vector<ImuSample> generate_imu();
  std::vector<BaroSample> generate_baro();
  std::vector<RadarFrame> generate_radar();

  // One radar frame at time t; exposed for targeted tests. The mutable cache
  // carries static-scene detections between consecutive frame calls.
  RadarFrame generate_radar_frame(double t);

  SimulationResult run();

  const Scenario& scenario() const { return scenario_; }

 private:
  bool target_visible(const Vec3& in_radar) const;
  RadarDetection make_detection(const Vec3& target_inertial, const Vec3& target_velocity,
                                const TrajectorySample& truth, double t, DetectionLabel label,
                                double snr, double noise_db, std::mt19937_64& rng,
                                bool* visible) const;

  Scenario scenario_;
  std::vector<double> target_snr_;
  std::vector<double> target_noise_;

  std::mt19937_64 radar_rng_;
  std::mt19937_64 imu_rng_;
  std::mt19937_64 baro_rng_;

  struct StaticCache {
    bool valid{false};
    RadarDetection detection;
  };
  std::vector<StaticCache> static_cache_;
  bool prev_frame_static_{false};
};

}  // namespace rio
