#include "rio/estimator.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rio/atmosphere.hpp"

namespace rio {

namespace {

constexpr double kEigenvalueFloor = 1e-12;

Mat3 roll_pitch_rotation(const Vec3& specific_force) {
  const Vec3 f = specific_force.normalized();
  const double pitch = std::asin(std::clamp(-f.x(), -1.0, 1.0));
  const double roll = std::atan2(f.y(), f.z());
  const Mat3 ry = so3::exp(Vec3(0.0, pitch, 0.0));
  const Mat3 rx = so3::exp(Vec3(roll, 0.0, 0.0));
  return ry * rx;
}

Eigen::MatrixXd pseudo_inverse_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double cutoff = std::max(vals.cwiseAbs().maxCoeff() * kEigenvalueFloor, 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
  for (int i = 0; i < vals.size(); ++i) {
    if (vals[i] > cutoff) inv[i] = 1.0 / vals[i];
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

InitializationResult initialize(std::span<const ImuSample> imu_burst,
                                const BaroSample& first_baro, const SolverConfig& config) {
  if (static_cast<int>(imu_burst.size()) < config.init.min_samples) {
    throw std::invalid_argument("initialize: need at least " +
                                std::to_string(config.init.min_samples) + " static IMU samples, got " +
                                std::to_string(imu_burst.size()));
  }
  Vec3 mean_gyro = Vec3::Zero();
  Vec3 mean_accel = Vec3::Zero();
  for (const ImuSample& s : imu_burst) {
    mean_gyro += s.angular_velocity;
    mean_accel += s.linear_acceleration;
  }
  const double n = static_cast<double>(imu_burst.size());
  mean_gyro /= n;
  mean_accel /= n;

  double accel_variance = 0.0;
  for (const ImuSample& s : imu_burst) {
    accel_variance += (s.linear_acceleration - mean_accel).squaredNorm();
  }
  accel_variance /= n;
  if (accel_variance > config.init.accel_variance_threshold) {
    throw std::invalid_argument("initialize: motion detected during turn-on interval");
  }

  InitializationResult out;
  out.prior.rotation = Rotation(roll_pitch_rotation(mean_accel));
  out.prior.gyro_bias = mean_gyro;
  out.prior.stamp = imu_burst.back().stamp;
  out.h0 = pressure_to_altitude(first_baro.pressure);
  return out;
}

NavState predict(const NavState& latest, std::span<const ImuSample> imu_since,
                 const Vec3& gravity, ImuIntegration scheme) {
  if (imu_since.empty() || imu_since.back().stamp <= latest.stamp) {
    return latest;
  }
  const PreintegratedImu pim =
      preintegrate(imu_since, latest.gyro_bias, latest.accel_bias, NoiseConfig{}, latest.stamp,
                   imu_since.back().stamp, scheme);
  return apply_preintegration(latest, pim, gravity);
}

TrackAssociation associate_tracks(const std::vector<RadarDetection>& frame,
                                  std::map<int, ZeroVelocityTrack>& tracks, int discard_after,
                                  int* next_track_id) {
  TrackAssociation out;
  std::set<int> matched;
  for (int d = 0; d < static_cast<int>(frame.size()); ++d) {
    const RadarDetection& det = frame[d];
    if (det.doppler != 0.0) continue;
    int hit = -1;
    for (auto& [id, track] : tracks) {
      if (!track.associable) continue;
      if (track.signature_position == det.position && track.signature_snr == det.snr &&
          track.signature_noise == det.noise) {
        hit = id;
        break;
      }
    }
    if (hit >= 0) {
      ZeroVelocityTrack& track = tracks.at(hit);
      track.frames_since_seen = 0;
      ++track.num_observations;
      matched.insert(hit);
      out.matches.emplace_back(d, hit);
    } else {
      const int id = (*next_track_id)++;
      ZeroVelocityTrack track;
      track.id = id;
      track.signature_position = det.position;
      track.signature_snr = det.snr;
      track.signature_noise = det.noise;
      track.num_observations = 1;
      tracks.emplace(id, track);
      matched.insert(id);
      out.seeded.emplace_back(d, id);
    }
  }
  for (auto& [id, track] : tracks) {
    if (!track.associable || matched.count(id)) continue;
    if (++track.frames_since_seen > discard_after) {
      track.associable = false;
    }
  }
  return out;
}

Estimator::Estimator(const SolverConfig& config, const Calibration& calibration)
    : config_(config), calibration_(calibration) {}

void Estimator::set_initial(const InitializationResult& init) {
  h0_ = init.h0;
  prior_.track_ids.clear();
  prior_.track_lin.clear();
  prior_.state_lin = init.prior;
  prior_.offset = Eigen::VectorXd::Zero(kStateDim);
  Vec15 sigmas;
  sigmas.segment<3>(kRotBlock) = config_.noise.prior_sigma_rotation;
  sigmas.segment<3>(kPosBlock) = config_.noise.prior_sigma_position;
  sigmas.segment<3>(kVelBlock) = config_.noise.prior_sigma_velocity;
  sigmas.segment<3>(kBgBlock) = config_.noise.prior_sigma_gyro_bias;
  sigmas.segment<3>(kBaBlock) = config_.noise.prior_sigma_accel_bias;
  prior_.info = sigmas.cwiseProduct(sigmas).cwiseInverse().asDiagonal();
  initialized_ = true;
  latest_state_ = init.prior;
}

Vec3 Estimator::detection_in_inertial(const NavState& state, const RadarDetection& det) const {
  return state.rotation * (calibration_.T_BR * det.position) + state.position;
}

Mat15 Estimator::imu_factor_information(const PreintegratedImu& pim) const {
  Mat15 cov = Mat15::Zero();
  const Mat9& c = pim.covariance;
  // Preintegration covariance block order is [rotation, velocity, position].
  cov.block<3, 3>(kRotBlock, kRotBlock) = c.block<3, 3>(0, 0);
  cov.block<3, 3>(kRotBlock, kVelBlock) = c.block<3, 3>(0, 3);
  cov.block<3, 3>(kRotBlock, kPosBlock) = c.block<3, 3>(0, 6);
  cov.block<3, 3>(kVelBlock, kRotBlock) = c.block<3, 3>(3, 0);
  cov.block<3, 3>(kVelBlock, kVelBlock) = c.block<3, 3>(3, 3);
  cov.block<3, 3>(kVelBlock, kPosBlock) = c.block<3, 3>(3, 6);
  cov.block<3, 3>(kPosBlock, kRotBlock) = c.block<3, 3>(6, 0);
  cov.block<3, 3>(kPosBlock, kVelBlock) = c.block<3, 3>(6, 3);
  cov.block<3, 3>(kPosBlock, kPosBlock) = c.block<3, 3>(6, 6);
  const double bg_var = std::max(config_.noise.gyro_bias_random_walk *
                                     config_.noise.gyro_bias_random_walk * pim.delta_time,
                                 1e-16);
  const double ba_var = std::max(config_.noise.accel_bias_random_walk *
                                     config_.noise.accel_bias_random_walk * pim.delta_time,
                                 1e-16);
  cov.block<3, 3>(kBgBlock, kBgBlock) = bg_var * Mat3::Identity();
  cov.block<3, 3>(kBaBlock, kBaBlock) = ba_var * Mat3::Identity();
  for (int i = 0; i < 9; ++i) {
    cov(i, i) = std::max(cov(i, i), 1e-16);
  }
  Mat15 info = cov.inverse();
  return 0.5 * (info + info.transpose());
}

void Estimator::add_radar_frame(const FrameInput& frame) {
  if (!initialized_) {
    throw std::logic_error("add_radar_frame: estimator not initialized");
  }
  if (!states_.empty() && frame.stamp <= states_.back().stamp) {
    throw std::invalid_argument("add_radar_frame: out-of-order radar frame");
  }
  if (!states_.empty() && frame.imu.empty()) {
    throw std::invalid_argument("add_radar_frame: empty IMU interval");
  }
  for (const RadarDetection& det : frame.detections) {
    if (std::abs(det.bearing.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("add_radar_frame: detection bearing is not a unit vector");
    }
  }

  const int frame_index = next_frame_index_++;
  NavState new_state;
  if (states_.empty()) {
    new_state = predict(prior_.state_lin, frame.imu, calibration_.gravity,
                        config_.imu_integration);
    new_state.stamp = frame.stamp;
    prior_.state_lin = new_state;  // anchor the turn-on prior at the first radar stamp
  } else {
    const NavState& prev = states_.back();
    PreintegratedImu pim = preintegrate(frame.imu, prev.gyro_bias, prev.accel_bias,
                                        config_.noise, prev.stamp, frame.stamp,
                                        config_.imu_integration);
    new_state = apply_preintegration(prev, pim, calibration_.gravity);
    ImuFactorData factor;
    factor.frame_i = frame_index - 1;
    factor.info = imu_factor_information(pim);
    factor.pim = std::move(pim);
    imu_factors_.push_back(std::move(factor));
  }
  states_.push_back(new_state);

  // Gyro sample nearest the radar stamp for the Doppler lever-arm term.
  Vec3 omega = Vec3::Zero();
  if (!frame.imu.empty()) {
    double best = std::numeric_limits<double>::max();
    for (const ImuSample& s : frame.imu) {
      const double d = std::abs(s.stamp - frame.stamp);
      if (d < best) {
        best = d;
        omega = s.angular_velocity;
      }
    }
  }

  FrameDiagnostics diag;
  diag.stamp = frame.stamp;
  diag.frame_index = frame_index;
  diag.num_detections = static_cast<int>(frame.detections.size());

  Mat3 bearing_gram = Mat3::Zero();
  for (const RadarDetection& det : frame.detections) {
    bearing_gram += det.bearing * det.bearing.transpose();

    DopplerRecord record;
    record.frame_index = frame_index;
    record.normalized_prefit =
        std::abs(doppler_residual(new_state, omega, det, calibration_)) /
        config_.noise.sigma_doppler;
    record.label = det.label;
    const int record_index = static_cast<int>(doppler_records_.size());
    doppler_records_.push_back(record);

    DopplerFactorData factor;
    factor.frame = frame_index;
    factor.omega = omega;
    factor.detection = det;
    factor.record_index = record_index;
    doppler_factors_.push_back(std::move(factor));
  }
  {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(bearing_gram);
    const double min_eig = eig.eigenvalues().minCoeff();
    const double max_eig = eig.eigenvalues().maxCoeff();
    diag.bearing_condition = min_eig > 0.0 ? max_eig / min_eig
                                           : std::numeric_limits<double>::infinity();
    diag.weak_velocity = frame.detections.size() < 3 || diag.bearing_condition > 1e6;
  }

  if (frame.baro && config_.use_baro) {
    BaroFactorData factor;
    factor.frame = frame_index;
    factor.sample = *frame.baro;
    baro_factors_.push_back(factor);
  }

  if (config_.use_tracking) {
    const TrackAssociation assoc = associate_tracks(frame.detections, tracks_,
                                                    config_.track_discard_frames, &next_track_id_);
    for (const auto& [det_index, track_id] : assoc.seeded) {
      tracks_.at(track_id).position = detection_in_inertial(new_state, frame.detections[det_index]);
    }
    for (const auto& list : {assoc.matches, assoc.seeded}) {
      for (const auto& [det_index, track_id] : list) {
        TrackFactorData factor;
        factor.frame = frame_index;
        factor.track_id = track_id;
        factor.detection = frame.detections[det_index];
        track_factors_.push_back(std::move(factor));
      }
    }
  }

  frame_diagnostics_.push_back(diag);
  maintain_window(frame.stamp);
}

void Estimator::maintain_window(double newest_stamp) {
  const double cutoff = newest_stamp - config_.window_duration;
  int drop = 0;
  while (drop + 1 < static_cast<int>(states_.size()) && states_[drop].stamp < cutoff) {
    ++drop;
  }
  if (drop == 0) return;
  if (config_.reanchor_prior) {
    reanchor_oldest(drop);
  } else {
    marginalize_oldest(drop);
  }
}

int Estimator::num_variables_dim() const {
  return static_cast<int>(states_.size()) * kStateDim + static_cast<int>(tracks_.size()) * 3;
}

void Estimator::build_column_offsets(std::vector<int>* track_cols) const {
  track_cols->clear();
  // Track columns follow the state block, in ascending track-id order.
  int col = static_cast<int>(states_.size()) * kStateDim;
  for (const auto& [id, track] : tracks_) {
    track_cols->push_back(id);
    (void)track;
    col += 3;
  }
}

namespace {
// Column offset of a track id given the ascending id list.
int track_column(const std::vector<int>& ids, int num_states, int track_id) {
  const auto it = std::lower_bound(ids.begin(), ids.end(), track_id);
  return num_states * kStateDim + static_cast<int>(it - ids.begin()) * 3;
}
}  // namespace

double Estimator::evaluate_cost(const std::deque<NavState>& states,
                                const std::map<int, ZeroVelocityTrack>& tracks) const {
  double cost = 0.0;

  // Prior: 0.5 r^T H r with the log-map local coordinates of the anchor.
  {
    Eigen::VectorXd r(prior_.offset.size());
    r.segment<15>(0) = local_coordinates(prior_.state_lin, states.front());
    for (size_t k = 0; k < prior_.track_ids.size(); ++k) {
      r.segment<3>(15 + 3 * static_cast<int>(k)) =
          tracks.at(prior_.track_ids[k]).position - prior_.track_lin[k];
    }
    r -= prior_.offset;
    cost += 0.5 * r.dot(prior_.info * r);
  }

  for (const ImuFactorData& f : imu_factors_) {
    const int i = window_position(f.frame_i);
    const Vec15 r = imu_residual(states[i], states[i + 1], f.pim, calibration_.gravity);
    cost += 0.5 * r.dot(f.info * r);
  }
  for (const DopplerFactorData& f : doppler_factors_) {
    const double r = doppler_residual(states[window_position(f.frame)], f.omega, f.detection,
                                      calibration_);
    cost += loss_value(config_.doppler_loss, std::abs(r) / config_.noise.sigma_doppler);
  }
  for (const BaroFactorData& f : baro_factors_) {
    const double r = baro_residual(states[window_position(f.frame)], f.sample, h0_);
    cost += loss_value(config_.baro_loss, std::abs(r) / config_.noise.sigma_baro);
  }
  const Vec3 track_info = config_.noise.sigma_track.cwiseProduct(config_.noise.sigma_track)
                              .cwiseInverse();
  for (const TrackFactorData& f : track_factors_) {
    const Vec3 r = track_residual(states[window_position(f.frame)], tracks.at(f.track_id).position,
                                  f.detection, calibration_);
    cost += 0.5 * r.dot(track_info.asDiagonal() * r);
  }
  return cost;
}

double Estimator::total_cost() const { return evaluate_cost(states_, tracks_); }

void Estimator::compute_robust_weights(std::vector<double>* doppler_weights,
                                       std::vector<double>* baro_weights) const {
  doppler_weights->resize(doppler_factors_.size());
  for (size_t k = 0; k < doppler_factors_.size(); ++k) {
    const DopplerFactorData& f = doppler_factors_[k];
    const double r = doppler_residual(states_[window_position(f.frame)], f.omega, f.detection,
                                      calibration_);
    (*doppler_weights)[k] =
        loss_weight(config_.doppler_loss, std::abs(r) / config_.noise.sigma_doppler);
  }
  baro_weights->resize(baro_factors_.size());
  for (size_t k = 0; k < baro_factors_.size(); ++k) {
    const BaroFactorData& f = baro_factors_[k];
    const double r = baro_residual(states_[window_position(f.frame)], f.sample, h0_);
    (*baro_weights)[k] = loss_weight(config_.baro_loss, std::abs(r) / config_.noise.sigma_baro);
  }
}

void Estimator::linearize(const std::vector<double>& doppler_weights,
                          const std::vector<double>& baro_weights,
                          std::vector<Eigen::Triplet<double>>* triplets,
                          Eigen::VectorXd* gradient) const {
  const int num_states = static_cast<int>(states_.size());
  std::vector<int> track_ids;
  build_column_offsets(&track_ids);

  auto scatter = [&](int row0, int col0, const Eigen::MatrixXd& block) {
    for (int r = 0; r < block.rows(); ++r) {
      for (int c = 0; c < block.cols(); ++c) {
        if (block(r, c) != 0.0) {
          triplets->emplace_back(row0 + r, col0 + c, block(r, c));
        }
      }
    }
  };

  // Prior over [state0, tracks...]: block-diagonal Jacobian.
  {
    const int n = static_cast<int>(prior_.offset.size());
    Eigen::VectorXd r(n);
    const Vec15 local = local_coordinates(prior_.state_lin, states_.front());
    r.segment<15>(0) = local;
    for (size_t k = 0; k < prior_.track_ids.size(); ++k) {
      r.segment<3>(15 + 3 * static_cast<int>(k)) =
          tracks_.at(prior_.track_ids[k]).position - prior_.track_lin[k];
    }
    r -= prior_.offset;

    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    jac.block<3, 3>(kRotBlock, kRotBlock) =
        so3::right_jacobian_inverse(local.segment<3>(kRotBlock));
    const Eigen::MatrixXd h = jac.transpose() * prior_.info * jac;
    const Eigen::VectorXd g = jac.transpose() * (prior_.info * r);

    std::vector<int> cols;
    cols.push_back(0);
    for (int id : prior_.track_ids) cols.push_back(track_column(track_ids, num_states, id));
    std::vector<int> dims;
    dims.push_back(15);
    for (size_t k = 0; k < prior_.track_ids.size(); ++k) dims.push_back(3);

    int row = 0;
    for (size_t a = 0; a < cols.size(); ++a) {
      int col = 0;
      for (size_t b = 0; b < cols.size(); ++b) {
        scatter(cols[a], cols[b], h.block(row, col, dims[a], dims[b]));
        col += dims[b];
      }
      gradient->segment(cols[a], dims[a]) += g.segment(row, dims[a]);
      row += dims[a];
    }
  }

  for (const ImuFactorData& f : imu_factors_) {
    const int i = window_position(f.frame_i);
    Mat15 j_i, j_j;
    const Vec15 r = imu_residual(states_[i], states_[i + 1], f.pim, calibration_.gravity, &j_i, &j_j);
    const int ci = i * kStateDim;
    const int cj = (i + 1) * kStateDim;
    const Mat15 ji_info = j_i.transpose() * f.info;
    const Mat15 jj_info = j_j.transpose() * f.info;
    scatter(ci, ci, ji_info * j_i);
    scatter(ci, cj, ji_info * j_j);
    scatter(cj, ci, jj_info * j_i);
    scatter(cj, cj, jj_info * j_j);
    gradient->segment<15>(ci) += ji_info * r;
    gradient->segment<15>(cj) += jj_info * r;
  }

  const double doppler_info = 1.0 / (config_.noise.sigma_doppler * config_.noise.sigma_doppler);
  for (size_t k = 0; k < doppler_factors_.size(); ++k) {
    const DopplerFactorData& f = doppler_factors_[k];
    const int i = window_position(f.frame);
    DopplerJacobians jac;
    const double r = doppler_residual(states_[i], f.omega, f.detection, calibration_, &jac);
    Eigen::Matrix<double, 1, 15> j = Eigen::Matrix<double, 1, 15>::Zero();
    j.segment<3>(kRotBlock) = jac.d_rotation;
    j.segment<3>(kVelBlock) = jac.d_velocity;
    j.segment<3>(kBgBlock) = jac.d_gyro_bias;
    const double s = doppler_weights[k] * doppler_info;
    scatter(i * kStateDim, i * kStateDim, s * j.transpose() * j);
    gradient->segment<15>(i * kStateDim) += s * r * j.transpose();
  }

  const double baro_info = 1.0 / (config_.noise.sigma_baro * config_.noise.sigma_baro);
  for (size_t k = 0; k < baro_factors_.size(); ++k) {
    const BaroFactorData& f = baro_factors_[k];
    const int i = window_position(f.frame);
    const double r = baro_residual(states_[i], f.sample, h0_);
    const double s = baro_weights[k] * baro_info;
    const int col = i * kStateDim + kPosBlock + 2;
    triplets->emplace_back(col, col, s);
    (*gradient)[col] += s * r;
  }

  const Vec3 track_info = config_.noise.sigma_track.cwiseProduct(config_.noise.sigma_track)
                              .cwiseInverse();
  for (const TrackFactorData& f : track_factors_) {
    const int i = window_position(f.frame);
    TrackJacobians jac;
    const Vec3 r = track_residual(states_[i], tracks_.at(f.track_id).position, f.detection,
                                  calibration_, &jac);
    Eigen::Matrix<double, 3, 15> j_s = Eigen::Matrix<double, 3, 15>::Zero();
    j_s.block<3, 3>(0, kRotBlock) = jac.d_rotation;
    j_s.block<3, 3>(0, kPosBlock) = jac.d_position;
    const int cs = i * kStateDim;
    const int ct = track_column(track_ids, num_states, f.track_id);
    const Eigen::Matrix<double, 15, 3> js_info = j_s.transpose() * track_info.asDiagonal();
    const Mat3 jt_info = jac.d_track.transpose() * track_info.asDiagonal();
    scatter(cs, cs, js_info * j_s);
    scatter(cs, ct, js_info * jac.d_track);
    scatter(ct, cs, jt_info * j_s);
    scatter(ct, ct, jt_info * jac.d_track);
    gradient->segment<15>(cs) += js_info * r;
    gradient->segment<3>(ct) += jt_info * r;
  }
}

SolveSummary Estimator::solve() {
  if (states_.empty()) {
    throw std::logic_error("solve: factor graph has no states");
  }
  const int dim = num_variables_dim();
  std::vector<int> track_ids;
  build_column_offsets(&track_ids);
  const int num_states = static_cast<int>(states_.size());

  SolveSummary summary;
  double cost = evaluate_cost(states_, tracks_);
  summary.initial_cost = cost;
  double lambda = config_.initial_lambda;

  std::vector<double> doppler_weights, baro_weights;
  for (int iter = 0; iter < config_.max_iterations; ++iter) {
    compute_robust_weights(&doppler_weights, &baro_weights);

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd gradient = Eigen::VectorXd::Zero(dim);
    linearize(doppler_weights, baro_weights, &triplets, &gradient);

    Eigen::SparseMatrix<double> hessian(dim, dim);
    hessian.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::VectorXd diagonal = hessian.diagonal();

    bool accepted = false;
    double new_cost = cost;
    while (lambda <= config_.max_lambda) {
      Eigen::SparseMatrix<double> damped = hessian;
      for (int i = 0; i < dim; ++i) {
        damped.coeffRef(i, i) += lambda * std::max(diagonal[i], 1e-12);
      }
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(damped);
      if (llt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = llt.solve(-gradient);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }

      std::deque<NavState> candidate_states = states_;
      std::map<int, ZeroVelocityTrack> candidate_tracks = tracks_;
      for (int s = 0; s < num_states; ++s) {
        candidate_states[s] = retract(states_[s], delta.segment<15>(s * kStateDim));
      }
      for (auto& [id, track] : candidate_tracks) {
        track.position += delta.segment<3>(track_column(track_ids, num_states, id));
      }

      new_cost = evaluate_cost(candidate_states, candidate_tracks);
      if (std::isfinite(new_cost) && new_cost <= cost) {
        states_ = std::move(candidate_states);
        tracks_ = std::move(candidate_tracks);
        for (NavState& s : states_) {
          s.rotation = s.rotation.orthonormalized();
        }
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }

    ++summary.iterations;
    if (!accepted) {
      // Damping exhausted. A still-singular system means unconstrained
      // directions; report them instead of returning garbage.
      std::vector<int> weak;
      const double max_diag = diagonal.maxCoeff();
      for (int i = 0; i < dim; ++i) {
        if (diagonal[i] <= kEigenvalueFloor * std::max(max_diag, 1.0)) weak.push_back(i);
      }
      if (!weak.empty()) {
        std::ostringstream msg;
        msg << "solve: normal equations are rank deficient; unconstrained dimensions:";
        for (int i : weak) msg << ' ' << i;
        msg << " (fewer than 3 independent bearings and no tracks can cause this)";
        throw std::runtime_error(msg.str());
      }
      summary.converged = true;  // no descent direction left: at a local minimum
      break;
    }
    const double decrease = cost - new_cost;
    cost = new_cost;
    if (decrease <= config_.relative_cost_tol * std::max(cost, 1e-12)) {
      summary.converged = true;
      break;
    }
  }

  summary.final_cost = cost;

  // Final robust weights for diagnostics (outlier visibility).
  compute_robust_weights(&doppler_weights, &baro_weights);
  for (size_t k = 0; k < doppler_factors_.size(); ++k) {
    const int idx = doppler_factors_[k].record_index;
    if (idx >= 0) doppler_records_[idx].weight = doppler_weights[k];
  }
  if (!frame_diagnostics_.empty()) {
    FrameDiagnostics& diag = frame_diagnostics_.back();
    diag.solve_iterations = summary.iterations;
    diag.final_cost = cost;
    diag.velocity = states_.back().velocity;
  }
  {
    std::lock_guard<std::mutex> lock(latest_mutex_);
    latest_state_ = states_.back();
  }
  return summary;
}

NavState Estimator::latest() const {
  std::lock_guard<std::mutex> lock(latest_mutex_);
  return latest_state_;
}

void Estimator::reanchor_oldest(int drop_count) {
  const int new_first = first_frame_index_ + drop_count;

  prior_.track_ids.clear();
  prior_.track_lin.clear();
  prior_.state_lin = states_[drop_count];
  prior_.offset = Eigen::VectorXd::Zero(kStateDim);
  Vec15 sigmas;
  sigmas.segment<3>(kRotBlock) = config_.noise.prior_sigma_rotation;
  sigmas.segment<3>(kPosBlock) = config_.noise.prior_sigma_position;
  sigmas.segment<3>(kVelBlock) = config_.noise.prior_sigma_velocity;
  sigmas.segment<3>(kBgBlock) = config_.noise.prior_sigma_gyro_bias;
  sigmas.segment<3>(kBaBlock) = config_.noise.prior_sigma_accel_bias;
  prior_.info = sigmas.cwiseProduct(sigmas).cwiseInverse().asDiagonal();

  std::erase_if(imu_factors_, [&](const ImuFactorData& f) { return f.frame_i < new_first; });
  std::erase_if(doppler_factors_, [&](const DopplerFactorData& f) { return f.frame < new_first; });
  std::erase_if(baro_factors_, [&](const BaroFactorData& f) { return f.frame < new_first; });
  std::erase_if(track_factors_, [&](const TrackFactorData& f) { return f.frame < new_first; });
  for (int k = 0; k < drop_count; ++k) states_.pop_front();
  first_frame_index_ = new_first;

  // Tracks with no remaining factors and no association prospects vanish.
  std::set<int> referenced;
  for (const TrackFactorData& f : track_factors_) referenced.insert(f.track_id);
  std::erase_if(tracks_, [&](const auto& kv) {
    return !referenced.count(kv.first) && !kv.second.associable;
  });
}

void Estimator::marginalize_oldest(int drop_count) {
  const int new_first = first_frame_index_ + drop_count;

  // Split the factors into the ones absorbed by the marginal and the rest.
  auto touches_dropped_state = [&](int frame) { return frame < new_first; };
  std::vector<const ImuFactorData*> m_imu;
  for (const ImuFactorData& f : imu_factors_) {
    if (touches_dropped_state(f.frame_i)) m_imu.push_back(&f);
  }
  std::vector<std::pair<const DopplerFactorData*, double>> m_doppler;
  for (const DopplerFactorData& f : doppler_factors_) {
    if (touches_dropped_state(f.frame)) {
      const double r = doppler_residual(states_[window_position(f.frame)], f.omega, f.detection,
                                        calibration_);
      m_doppler.emplace_back(&f, loss_weight(config_.doppler_loss,
                                             std::abs(r) / config_.noise.sigma_doppler));
    }
  }
  std::vector<std::pair<const BaroFactorData*, double>> m_baro;
  for (const BaroFactorData& f : baro_factors_) {
    if (touches_dropped_state(f.frame)) {
      const double r = baro_residual(states_[window_position(f.frame)], f.sample, h0_);
      m_baro.emplace_back(&f, loss_weight(config_.baro_loss, std::abs(r) / config_.noise.sigma_baro));
    }
  }
  std::vector<const TrackFactorData*> m_track;
  std::set<int> touched_tracks(prior_.track_ids.begin(), prior_.track_ids.end());
  for (const TrackFactorData& f : track_factors_) {
    if (touches_dropped_state(f.frame)) {
      m_track.push_back(&f);
      touched_tracks.insert(f.track_id);
    }
  }

  // A touched track survives while factors from surviving frames still
  // reference it (associable tracks always do); otherwise eliminate it.
  std::set<int> surviving_track_refs;
  for (const TrackFactorData& f : track_factors_) {
    if (!touches_dropped_state(f.frame)) surviving_track_refs.insert(f.track_id);
  }
  std::vector<int> eliminated_tracks;
  std::vector<int> kept_tracks;
  for (int id : touched_tracks) {
    if (surviving_track_refs.count(id) || tracks_.at(id).associable) {
      kept_tracks.push_back(id);
    } else {
      eliminated_tracks.push_back(id);
    }
  }

  // Local variable layout: eliminated block first, kept block second.
  // Eliminated: dropped states, then eliminated tracks.
  // Kept: the new oldest state, then surviving touched tracks.
  const int dim_e = drop_count * kStateDim + static_cast<int>(eliminated_tracks.size()) * 3;
  const int dim_k = kStateDim + static_cast<int>(kept_tracks.size()) * 3;
  const int dim = dim_e + dim_k;

  auto local_state_col = [&](int frame) -> int {
    const int pos = window_position(frame);
    if (pos < drop_count) return pos * kStateDim;
    if (pos == drop_count) return dim_e;
    return -1;  // not part of the local system
  };
  auto local_track_col = [&](int id) -> int {
    const auto ite = std::find(eliminated_tracks.begin(), eliminated_tracks.end(), id);
    if (ite != eliminated_tracks.end()) {
      return drop_count * kStateDim + static_cast<int>(ite - eliminated_tracks.begin()) * 3;
    }
    const auto itk = std::find(kept_tracks.begin(), kept_tracks.end(), id);
    return dim_e + kStateDim + static_cast<int>(itk - kept_tracks.begin()) * 3;
  };

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  auto add_block = [&](int row, int col, const Eigen::MatrixXd& block) {
    h.block(row, col, block.rows(), block.cols()) += block;
  };

  // Prior factor (anchored on the oldest dropped state).
  {
    const int n = static_cast<int>(prior_.offset.size());
    Eigen::VectorXd r(n);
    const Vec15 local = local_coordinates(prior_.state_lin, states_.front());
    r.segment<15>(0) = local;
    for (size_t k = 0; k < prior_.track_ids.size(); ++k) {
      r.segment<3>(15 + 3 * static_cast<int>(k)) =
          tracks_.at(prior_.track_ids[k]).position - prior_.track_lin[k];
    }
    r -= prior_.offset;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    jac.block<3, 3>(kRotBlock, kRotBlock) =
        so3::right_jacobian_inverse(local.segment<3>(kRotBlock));
    const Eigen::MatrixXd hp = jac.transpose() * prior_.info * jac;
    const Eigen::VectorXd gp = jac.transpose() * (prior_.info * r);

    std::vector<int> cols{0};
    std::vector<int> dims{15};
    for (int id : prior_.track_ids) {
      cols.push_back(local_track_col(id));
      dims.push_back(3);
    }
    int row = 0;
    for (size_t a = 0; a < cols.size(); ++a) {
      int col = 0;
      for (size_t b = 0; b < cols.size(); ++b) {
        add_block(cols[a], cols[b], hp.block(row, col, dims[a], dims[b]));
        col += dims[b];
      }
      g.segment(cols[a], dims[a]) += gp.segment(row, dims[a]);
      row += dims[a];
    }
  }

  for (const ImuFactorData* f : m_imu) {
    const int i = window_position(f->frame_i);
    Mat15 j_i, j_j;
    const Vec15 r = imu_residual(states_[i], states_[i + 1], f->pim, calibration_.gravity, &j_i, &j_j);
    const int ci = local_state_col(f->frame_i);
    const int cj = local_state_col(f->frame_i + 1);
    const Mat15 ji_info = j_i.transpose() * f->info;
    const Mat15 jj_info = j_j.transpose() * f->info;
    add_block(ci, ci, ji_info * j_i);
    add_block(ci, cj, ji_info * j_j);
    add_block(cj, ci, jj_info * j_i);
    add_block(cj, cj, jj_info * j_j);
    g.segment<15>(ci) += ji_info * r;
    g.segment<15>(cj) += jj_info * r;
  }

  const double doppler_info = 1.0 / (config_.noise.sigma_doppler * config_.noise.sigma_doppler);
  for (const auto& [f, weight] : m_doppler) {
    DopplerJacobians jac;
    const double r = doppler_residual(states_[window_position(f->frame)], f->omega, f->detection,
                                      calibration_, &jac);
    Eigen::Matrix<double, 1, 15> j = Eigen::Matrix<double, 1, 15>::Zero();
    j.segment<3>(kRotBlock) = jac.d_rotation;
    j.segment<3>(kVelBlock) = jac.d_velocity;
    j.segment<3>(kBgBlock) = jac.d_gyro_bias;
    const double s = weight * doppler_info;
    const int c = local_state_col(f->frame);
    add_block(c, c, s * j.transpose() * j);
    g.segment<15>(c) += s * r * j.transpose();
  }

  const double baro_info = 1.0 / (config_.noise.sigma_baro * config_.noise.sigma_baro);
  for (const auto& [f, weight] : m_baro) {
    const double r = baro_residual(states_[window_position(f->frame)], f->sample, h0_);
    const int c = local_state_col(f->frame) + kPosBlock + 2;
    h(c, c) += weight * baro_info;
    g[c] += weight * baro_info * r;
  }

  const Vec3 track_info = config_.noise.sigma_track.cwiseProduct(config_.noise.sigma_track)
                              .cwiseInverse();
  for (const TrackFactorData* f : m_track) {
    TrackJacobians jac;
    const Vec3 r = track_residual(states_[window_position(f->frame)], tracks_.at(f->track_id).position,
                                  f->detection, calibration_, &jac);
    Eigen::Matrix<double, 3, 15> j_s = Eigen::Matrix<double, 3, 15>::Zero();
    j_s.block<3, 3>(0, kRotBlock) = jac.d_rotation;
    j_s.block<3, 3>(0, kPosBlock) = jac.d_position;
    const int cs = local_state_col(f->frame);
    const int ct = local_track_col(f->track_id);
    const Eigen::Matrix<double, 15, 3> js_info = j_s.transpose() * track_info.asDiagonal();
    const Mat3 jt_info = jac.d_track.transpose() * track_info.asDiagonal();
    add_block(cs, cs, js_info * j_s);
    add_block(cs, ct, js_info * jac.d_track);
    add_block(ct, cs, jt_info * j_s);
    add_block(ct, ct, jt_info * jac.d_track);
    g.segment<15>(cs) += js_info * r;
    g.segment<3>(ct) += jt_info * r;
  }

  // Schur complement onto the kept block.
  const Eigen::MatrixXd h_ee = h.topLeftCorner(dim_e, dim_e);
  const Eigen::MatrixXd h_ke = h.bottomLeftCorner(dim_k, dim_e);
  const Eigen::MatrixXd h_kk = h.bottomRightCorner(dim_k, dim_k);
  const Eigen::MatrixXd h_ee_inv = pseudo_inverse_psd(h_ee);
  Eigen::MatrixXd info = h_kk - h_ke * h_ee_inv * h_ke.transpose();
  info = 0.5 * (info + info.transpose());
  const Eigen::VectorXd g_k = g.tail(dim_k) - h_ke * (h_ee_inv * g.head(dim_e));

  MarginalPrior next;
  next.track_ids = kept_tracks;
  next.state_lin = states_[drop_count];
  for (int id : kept_tracks) next.track_lin.push_back(tracks_.at(id).position);
  next.info = info;
  next.offset = -pseudo_inverse_psd(info) * g_k;
  prior_ = std::move(next);

  std::erase_if(imu_factors_, [&](const ImuFactorData& f) { return f.frame_i < new_first; });
  std::erase_if(doppler_factors_, [&](const DopplerFactorData& f) { return f.frame < new_first; });
  std::erase_if(baro_factors_, [&](const BaroFactorData& f) { return f.frame < new_first; });
  std::erase_if(track_factors_, [&](const TrackFactorData& f) { return f.frame < new_first; });
  for (int id : eliminated_tracks) tracks_.erase(id);
  for (int k = 0; k < drop_count; ++k) states_.pop_front();
  first_frame_index_ = new_first;
}

}  // namespace rio
