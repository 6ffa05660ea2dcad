#include "rio/simulator.hpp"

#include <cmath>
#include <stdexcept>

#include "rio/atmosphere.hpp"

namespace rio {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

// C2 speed ramp: smoothstep sigma(u) = 6u^5 - 15u^4 + 10u^3 and its integral.
struct Progress {
  double s;       // arc length [m]
  double ds;      // speed [m/s]
  double dds;     // tangential acceleration [m/s^2]
};

Progress progress(const TrajectoryConfig& cfg, double t) {
  const double tau = t - cfg.static_interval;
  if (tau <= 0.0 || cfg.speed == 0.0) {
    return {0.0, 0.0, 0.0};
  }
  const double ramp = std::max(cfg.ramp_duration, 1e-6);
  if (tau < ramp) {
    const double u = tau / ramp;
    const double sigma = ((6.0 * u - 15.0) * u + 10.0) * u * u * u;
    const double sigma_int = ((u - 3.0) * u + 2.5) * u * u * u * u;
    const double sigma_prime = ((30.0 * u - 60.0) * u + 30.0) * u * u;
    return {cfg.speed * ramp * sigma_int, cfg.speed * sigma, cfg.speed / ramp * sigma_prime};
  }
  return {cfg.speed * (0.5 * ramp + (tau - ramp)), cfg.speed, 0.0};
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed * 6364136223846793005ULL + stream * 1442695040888963407ULL + 1ULL;
}

}  // namespace

Simulator::Simulator(const Scenario& scenario)
    : scenario_(scenario),
      radar_rng_(stream_seed(scenario.seed, 1)),
      imu_rng_(stream_seed(scenario.seed, 2)),
      baro_rng_(stream_seed(scenario.seed, 3)) {
  std::mt19937_64 placement_rng(stream_seed(scenario.seed, 4));
  std::uniform_real_distribution<double> snr_dist(25.0, 40.0);
  std::uniform_real_distribution<double> noise_dist(5.0, 15.0);
  target_snr_.reserve(scenario_.targets.size());
  target_noise_.reserve(scenario_.targets.size());
  for (size_t i = 0; i < scenario_.targets.size(); ++i) {
    target_snr_.push_back(snr_dist(placement_rng));
    target_noise_.push_back(noise_dist(placement_rng));
  }
  static_cache_.resize(scenario_.targets.size());
}

TrajectorySample Simulator::sample_trajectory(double t) const {
  const TrajectoryConfig& cfg = scenario_.trajectory;
  const Progress pr = progress(cfg, t);

  TrajectorySample out;
  out.stamp = t;
  switch (cfg.type) {
    case TrajectoryConfig::Type::kHover:
      break;
    case TrajectoryConfig::Type::kLine: {
      const Vec3 d = cfg.line_direction.normalized();
      out.position = d * pr.s;
      out.velocity = d * pr.ds;
      out.acceleration = d * pr.dds;
      break;
    }
    case TrajectoryConfig::Type::kCircle: {
      const double r = cfg.radius;
      const double phi = pr.s / r;
      const double phi_dot = pr.ds / r;
      out.position = Vec3(r * std::sin(phi), r * (1.0 - std::cos(phi)), 0.0);
      out.velocity = Vec3(pr.ds * std::cos(phi), pr.ds * std::sin(phi), 0.0);
      out.acceleration = Vec3(pr.dds * std::cos(phi) - pr.ds * phi_dot * std::sin(phi),
                              pr.dds * std::sin(phi) + pr.ds * phi_dot * std::cos(phi), 0.0);
      if (cfg.yaw_follow) {
        out.rotation = Rotation::exp(Vec3(0.0, 0.0, phi));
        out.angular_velocity = Vec3(0.0, 0.0, phi_dot);
      }
      break;
    }
    case TrajectoryConfig::Type::kSlalom: {
      const double k = 2.0 * M_PI / cfg.wavelength;
      const double a = cfg.amplitude;
      out.position = Vec3(pr.s, a * std::sin(k * pr.s), 0.0);
      out.velocity = Vec3(pr.ds, a * k * std::cos(k * pr.s) * pr.ds, 0.0);
      out.acceleration =
          Vec3(pr.dds, a * k * (std::cos(k * pr.s) * pr.dds - k * std::sin(k * pr.s) * pr.ds * pr.ds),
               0.0);
      break;
    }
  }
  return out;
}

std::vector<ImuSample> Simulator::generate_imu() {
  const int count = static_cast<int>(std::floor(scenario_.duration * scenario_.imu_rate - 1e-9)) + 1;
  const double sigma_gyro =
      scenario_.noise_enabled ? scenario_.gyro_noise_density * std::sqrt(scenario_.imu_rate) : 0.0;
  const double sigma_accel =
      scenario_.noise_enabled ? scenario_.accel_noise_density * std::sqrt(scenario_.imu_rate) : 0.0;
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<ImuSample> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / scenario_.imu_rate;
    if (t >= scenario_.duration) break;
    const TrajectorySample truth = sample_trajectory(t);
    ImuSample s;
    s.stamp = t;
    s.angular_velocity = truth.angular_velocity + scenario_.gyro_bias;
    s.linear_acceleration =
        truth.rotation.inverse() * (truth.acceleration - scenario_.calibration.gravity) +
        scenario_.accel_bias;
    if (scenario_.noise_enabled) {
      s.angular_velocity += sigma_gyro * Vec3(gauss(imu_rng_), gauss(imu_rng_), gauss(imu_rng_));
      s.linear_acceleration +=
          sigma_accel * Vec3(gauss(imu_rng_), gauss(imu_rng_), gauss(imu_rng_));
    }
    out.push_back(s);
  }
  return out;
}

std::vector<BaroSample> Simulator::generate_baro() {
  std::vector<BaroSample> out;
  if (!scenario_.baro_enabled) return out;
  const int count = static_cast<int>(std::floor(scenario_.duration * scenario_.baro_rate - 1e-9)) + 1;
  std::normal_distribution<double> gauss(0.0, 1.0);
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / scenario_.baro_rate;
    if (t >= scenario_.duration) break;
    const TrajectorySample truth = sample_trajectory(t);
    double pressure = altitude_to_pressure(truth.position.z() + scenario_.base_altitude);
    for (const GroundEffectEvent& event : scenario_.ground_effects) {
      const double tau = t - event.time;
      if (tau >= 0.0 && tau <= event.duration) {
        pressure += event.delta_pa * 0.5 * (1.0 - std::cos(2.0 * M_PI * tau / event.duration));
      }
    }
    if (scenario_.noise_enabled && scenario_.sigma_baro_m > 0.0) {
      const double sigma_pa =
          scenario_.sigma_baro_m / std::abs(altitude_pressure_derivative(pressure));
      pressure += sigma_pa * gauss(baro_rng_);
    }
    out.push_back({pressure, t});
  }
  return out;
}

bool Simulator::target_visible(const Vec3& in_radar) const {
  const double range = in_radar.norm();
  if (range < 0.2 || range > scenario_.max_range) return false;
  // Radar frame: x positive azimuth, y boresight, z positive elevation.
  const double azimuth = std::atan2(in_radar.x(), in_radar.y());
  const double elevation = std::atan2(in_radar.z(), std::hypot(in_radar.x(), in_radar.y()));
  return std::abs(azimuth) <= scenario_.fov_azimuth_deg * kDegToRad &&
         std::abs(elevation) <= scenario_.fov_elevation_deg * kDegToRad;
}

RadarDetection Simulator::make_detection(const Vec3& target_inertial, const Vec3& target_velocity,
                                         const TrajectorySample& truth, double t,
                                         DetectionLabel label, double snr, double noise_db,
                                         std::mt19937_64& rng, bool* visible) const {
  const Calibration& calib = scenario_.calibration;
  const Rotation r_ir = truth.rotation * calib.T_BR.rotation;
  const Vec3 radar_origin = truth.position + truth.rotation * calib.T_BR.translation;
  const Vec3 in_radar = r_ir.inverse() * (target_inertial - radar_origin);

  *visible = target_visible(in_radar);
  RadarDetection det;
  if (!*visible) return det;

  const Vec3 radar_velocity =
      truth.velocity + truth.rotation * (truth.angular_velocity.cross(calib.T_BR.translation));
  const Vec3 bearing = in_radar.normalized();
  double doppler = bearing.dot(r_ir.inverse() * (target_velocity - radar_velocity));

  const bool zero_bin = doppler == 0.0;
  if (!zero_bin) {
    if (scenario_.noise_enabled && scenario_.sigma_doppler > 0.0) {
      std::normal_distribution<double> gauss(0.0, scenario_.sigma_doppler);
      doppler += gauss(rng);
    }
    if (scenario_.quantize_doppler && scenario_.doppler_resolution > 0.0) {
      doppler = std::round(doppler / scenario_.doppler_resolution) * scenario_.doppler_resolution;
    }
  } else {
    doppler = 0.0;  // exact zero-Doppler bin
  }
  if (std::abs(doppler) > scenario_.max_radial_velocity) {
    *visible = false;
    return det;
  }

  // Reconstruct the measured position through spherical angles so the
  // systematic elevation bias acts on the reported direction of arrival.
  const double range = in_radar.norm();
  double azimuth = std::atan2(in_radar.x(), in_radar.y());
  double elevation = std::atan2(in_radar.z(), std::hypot(in_radar.x(), in_radar.y()));
  elevation += scenario_.elevation_bias_deg * kDegToRad;
  const Vec3 measured(range * std::cos(elevation) * std::sin(azimuth),
                      range * std::cos(elevation) * std::cos(azimuth),
                      range * std::sin(elevation));

  return RadarDetection::from_position(measured, doppler, snr, noise_db, t, label);
}

RadarFrame Simulator::generate_radar_frame(double t) {
  const TrajectorySample truth = sample_trajectory(t);
  const bool frame_static = truth.velocity.isZero(0.0) && truth.angular_velocity.isZero(0.0);
  if (!frame_static) {
    for (StaticCache& c : static_cache_) c.valid = false;
  }

  RadarFrame frame;
  frame.stamp = t;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (size_t i = 0; i < scenario_.targets.size(); ++i) {
    const StaticTarget& target = scenario_.targets[i];
    if (frame_static && static_cache_[i].valid) {
      RadarDetection det = static_cache_[i].detection;
      det.stamp = t;
      frame.detections.push_back(det);
      continue;
    }
    if (target.detectability < 1.0 && unit(radar_rng_) > target.detectability) {
      continue;
    }
    const double range_guess = (target.position - truth.position).norm();
    const double snr = target_snr_[i] - 20.0 * std::log10(std::max(range_guess, 0.5));
    bool visible = false;
    RadarDetection det = make_detection(target.position, Vec3::Zero(), truth, t,
                                        DetectionLabel::kStatic, snr, target_noise_[i], radar_rng_,
                                        &visible);
    if (!visible) continue;
    if (frame_static) {
      static_cache_[i].valid = true;
      static_cache_[i].detection = det;
    }
    frame.detections.push_back(det);
  }
  prev_frame_static_ = frame_static;

  for (const MoverConfig& mover : scenario_.movers) {
    if (t < mover.start_time || t > mover.start_time + mover.duration) continue;
    const Vec3 base = mover.start_position + mover.velocity * (t - mover.start_time);
    for (const Vec3& offset : mover.point_offsets) {
      bool visible = false;
      std::uniform_real_distribution<double> snr_dist(20.0, 35.0);
      const double snr = snr_dist(radar_rng_);
      RadarDetection det = make_detection(base + offset, mover.velocity, truth, t,
                                          DetectionLabel::kMover, snr, 10.0, radar_rng_, &visible);
      if (visible) frame.detections.push_back(det);
    }
  }

  if (scenario_.ghost_rate > 0.0) {
    std::poisson_distribution<int> count_dist(scenario_.ghost_rate);
    std::uniform_real_distribution<double> az_dist(-scenario_.fov_azimuth_deg * kDegToRad,
                                                   scenario_.fov_azimuth_deg * kDegToRad);
    std::uniform_real_distribution<double> el_dist(-scenario_.fov_elevation_deg * kDegToRad,
                                                   scenario_.fov_elevation_deg * kDegToRad);
    std::uniform_real_distribution<double> range_dist(1.0, scenario_.max_range);
    std::uniform_real_distribution<double> doppler_dist(-scenario_.max_radial_velocity,
                                                        scenario_.max_radial_velocity);
    std::uniform_real_distribution<double> snr_dist(15.0, 25.0);
    std::uniform_real_distribution<double> noise_dist(5.0, 15.0);
    const int ghosts = count_dist(radar_rng_);
    for (int g = 0; g < ghosts; ++g) {
      const double az = az_dist(radar_rng_);
      const double el = el_dist(radar_rng_);
      const double range = range_dist(radar_rng_);
      const Vec3 p(range * std::cos(el) * std::sin(az), range * std::cos(el) * std::cos(az),
                   range * std::sin(el));
      frame.detections.push_back(RadarDetection::from_position(
          p, doppler_dist(radar_rng_), snr_dist(radar_rng_), noise_dist(radar_rng_), t,
          DetectionLabel::kGhost));
    }
  }
  return frame;
}

std::vector<RadarFrame> Simulator::generate_radar() {
  std::vector<RadarFrame> out;
  const int count = static_cast<int>(std::floor(scenario_.duration * scenario_.radar_rate - 1e-9)) + 1;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / scenario_.radar_rate;
    if (t >= scenario_.duration) break;
    out.push_back(generate_radar_frame(t));
  }
  return out;
}

SimulationResult Simulator::run() {
  SimulationResult result;
  result.imu = generate_imu();
  result.baro = generate_baro();
  result.radar = generate_radar();
  for (const ImuSample& s : result.imu) {
    result.truth_imu_rate.push_back(sample_trajectory(s.stamp));
  }
  for (const RadarFrame& f : result.radar) {
    result.truth_radar_rate.push_back(sample_trajectory(f.stamp));
  }
  return result;
}

}  // namespace rio
