#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "rio/factors.hpp"
#include "rio/losses.hpp"
#include "rio/preintegration.hpp"
#include "rio/state.hpp"
#include "rio/types.hpp"

namespace rio {

struct InitializationConfig {
  double duration{1.0};                  // [s] of the static turn-on interval
  int min_samples{100};
  double accel_variance_threshold{0.05};  // [(m/s^2)^2] motion detector
};

struct SolverConfig {
  int max_iterations{20};
  double relative_cost_tol{1e-6};
  double initial_lambda{1e-4};
  double max_lambda{1e10};
  RobustLoss doppler_loss{RobustLoss::make(LossKind::kWelsch)};
  RobustLoss baro_loss{RobustLoss::make(LossKind::kFair)};
  double window_duration{10.0};  // [s]
  int track_discard_frames{5};
  bool use_baro{true};
  bool use_tracking{true};
  bool reanchor_prior{false};  // diagonal re-anchor instead of Schur marginal transfer
  ImuIntegration imu_integration{ImuIntegration::kMidpoint};
  InitializationConfig init;
  NoiseConfig noise;
};

struct InitializationResult {
  NavState prior;
  double h0{0.0};  // altitude offset from the first barometer sample [m]
};

// Turn-on calibration from a static interval: gyro bias by averaging,
// roll/pitch by gravity alignment (yaw fixed to zero), altitude offset from
// the first pressure sample. Throws std::invalid_argument on too few samples
// or when the acceleration variance indicates motion.
InitializationResult initialize(std::span<const ImuSample> imu_burst,
                                const BaroSample& first_baro, const SolverConfig& config);

// Forward integration of the latest state through IMU samples with its
// current bias estimates. An empty span returns the input state.
NavState predict(const NavState& latest, std::span<const ImuSample> imu_since,
                 const Vec3& gravity, ImuIntegration scheme = ImuIntegration::kMidpoint);

// Repeatable static detection tracked across frames.
struct ZeroVelocityTrack {
  int id{0};
  Vec3 position{Vec3::Zero()};  // estimated, inertial frame (solver variable)
  Vec3 signature_position{Vec3::Zero()};
  double signature_snr{0.0};
  double signature_noise{0.0};
  int frames_since_seen{0};
  int num_observations{0};
  bool associable{true};
};

// Association by identical measurements: equal position, zero Doppler on
// both sides, equal SNR, equal noise. Matched tracks reset their unseen
// counter; unmatched zero-Doppler detections seed new tracks; tracks
// unobserved for longer than discard_after frames stop associating.
struct TrackAssociation {
  std::vector<std::pair<int, int>> matches;  // (detection index, track id)
  std::vector<std::pair<int, int>> seeded;   // (detection index, new track id)
};
TrackAssociation associate_tracks(const std::vector<RadarDetection>& frame,
                                  std::map<int, ZeroVelocityTrack>& tracks,
                                  int discard_after, int* next_track_id);

struct DopplerRecord {
  int frame_index{0};
  double normalized_prefit{0.0};  // |r|/sigma_D at the predicted state
  double weight{1.0};             // robust weight after the final solve
  DetectionLabel label{DetectionLabel::kUnknown};
};

struct FrameDiagnostics {
  double stamp{0.0};
  int frame_index{0};
  int num_detections{0};
  int solve_iterations{0};
  double final_cost{0.0};
  double bearing_condition{0.0};  // max/min eigenvalue of the bearing Gram matrix
  bool weak_velocity{false};      // <3 detections or ill-conditioned bearings
  Vec3 velocity{Vec3::Zero()};    // newest state velocity after the solve
};

struct SolveSummary {
  int iterations{0};
  bool converged{false};
  double initial_cost{0.0};
  double final_cost{0.0};
};

// Sliding-window MAP estimator over radar-rate states. Single-threaded and
// deterministic; latest() is the only member safe to call concurrently with
// add_radar_frame/solve (snapshot for the prediction context).
class Estimator {
 public:
  Estimator(const SolverConfig& config, const Calibration& calibration);

  void set_initial(const InitializationResult& init);

  struct FrameInput {
    double stamp{0.0};
    std::vector<RadarDetection> detections;
    std::vector<ImuSample> imu;  // samples covering [previous stamp, stamp]
    std::optional<BaroSample> baro;
  };

  // Appends a state for the frame, adds its factors, maintains the window.
  void add_radar_frame(const FrameInput& frame);

  // IRLS with robust weights updated once per outer iteration and a
  // Levenberg-Marquardt damped Gauss-Newton step on the manifold.
  SolveSummary solve();

  const std::deque<NavState>& states() const { return states_; }
  const std::map<int, ZeroVelocityTrack>& tracks() const { return tracks_; }
  double h0() const { return h0_; }
  bool initialized() const { return initialized_; }

  NavState latest() const;

  const std::vector<FrameDiagnostics>& frame_diagnostics() const { return frame_diagnostics_; }
  const std::vector<DopplerRecord>& doppler_records() const { return doppler_records_; }

  double total_cost() const;

 private:
  struct MarginalPrior {
    // Gaussian over the oldest state plus the listed tracks, anchored at the
    // stored linearization points with tangent-space target offset.
    std::vector<int> track_ids;
    NavState state_lin;
    std::vector<Vec3> track_lin;
    Eigen::VectorXd offset;
    Eigen::MatrixXd info;
  };
  struct ImuFactorData {
    int frame_i{0};  // connects frame_i -> frame_i + 1
    PreintegratedImu pim;
    Mat15 info;
  };
  struct DopplerFactorData {
    int frame{0};
    Vec3 omega{Vec3::Zero()};
    RadarDetection detection;
    int record_index{-1};
  };
  struct BaroFactorData {
    int frame{0};
    BaroSample sample;
  };
  struct TrackFactorData {
    int frame{0};
    int track_id{0};
    RadarDetection detection;
  };

  int window_position(int frame_index) const { return frame_index - first_frame_index_; }
  int num_variables_dim() const;
  void build_column_offsets(std::vector<int>* track_cols) const;

  double evaluate_cost(const std::deque<NavState>& states,
                       const std::map<int, ZeroVelocityTrack>& tracks) const;
  void compute_robust_weights(std::vector<double>* doppler_weights,
                              std::vector<double>* baro_weights) const;
  void linearize(const std::vector<double>& doppler_weights,
                 const std::vector<double>& baro_weights,
                 std::vector<Eigen::Triplet<double>>* triplets, Eigen::VectorXd* gradient) const;

  void maintain_window(double newest_stamp);
  void marginalize_oldest(int drop_count);
  void reanchor_oldest(int drop_count);
  Vec3 detection_in_inertial(const NavState& state, const RadarDetection& det) const;
  Mat15 imu_factor_information(const PreintegratedImu& pim) const;

  SolverConfig config_;
  Calibration calibration_;
  bool initialized_{false};
  double h0_{0.0};

  int first_frame_index_{0};
  int next_frame_index_{0};
  std::deque<NavState> states_;
  std::map<int, ZeroVelocityTrack> tracks_;
  int next_track_id_{0};

  MarginalPrior prior_;
  std::vector<ImuFactorData> imu_factors_;
  std::vector<DopplerFactorData> doppler_factors_;
  std::vector<BaroFactorData> baro_factors_;
  std::vector<TrackFactorData> track_factors_;

  std::vector<FrameDiagnostics> frame_diagnostics_;
  std::vector<DopplerRecord> doppler_records_;

  mutable std::mutex latest_mutex_;
  NavState latest_state_;
};

}  // namespace rio
