#pragma once

#include <deque>

#include "gvio/factors.hpp"
#include "gvio/gating.hpp"
#include "gvio/initialization.hpp"
#include "gvio/marginalization.hpp"
#include "gvio/simulator.hpp"

namespace gvio {

enum class GatingMethod { kGnssOnly, kMixed };

struct EstimatorConfig {
  int window_size = 10;  // K
  double w_pseudorange = 1.0;
  double w_doppler = 4.0;
  GateConfig gate;
  int prior_epoch_limit = 30;        // T^N
  double low_speed_threshold = 0.5;  // m/s
  GatingMethod gating = GatingMethod::kMixed;

  double keyframe_parallax = 0.010;  // unit-plane radians
  int keyframe_min_tracks = 50;
  double turn_threshold_deg = 15.0;

  double align_prior_yaw_sigma_deg = 5.0;
  double align_prior_trans_sigma = 5.0;

  double reproj_sigma_px = 1.5;
  double focal_px = 460.0;
  double huber_delta = 1.0;

  ImuNoise imu_noise;
  double gravity = 9.81;
  Vec3 lever_arm = Vec3::Zero();
  Extrinsics extrinsics_init;

  int init_min_pairs = 20;
  double init_min_span = 30.0;  // m horizontal motion before alignment

  // uncertainty of the seeded first-frame state (the bootstrap handoff)
  double seed_vel_sigma = 0.05;         // m/s
  double seed_bias_accel_sigma = 0.02;  // m/s^2
  double seed_bias_gyro_sigma = 0.002;  // rad/s

  int solver_iterations = 8;
  int gate_clone_iterations = 5;

  double reproj_sigma_unit() const { return reproj_sigma_px / focal_px; }
};

struct FrameInput {
  double stamp = 0.0;
  std::vector<FeatureObservation> features;
};

enum class EstimatorMode { kWarmup, kFused };

struct FrameDiagnostics {
  double stamp = 0.0;
  EstimatorMode mode = EstimatorMode::kWarmup;
  double cost_initial = 0.0;
  double cost_final = 0.0;
  int iterations = 0;
  bool solver_ok = true;
  bool gnss_active = true;
  double speed = 0.0;
  int64_t marginalized_epochs = 0;
  bool alignment_prior_active = false;
  bool extrinsics_variable = false;
  std::map<std::string, int> factor_counts;
};

struct GlobalPose {
  double stamp = 0.0;
  Vec3 enu = Vec3::Zero();
  Vec3 ecef = Vec3::Zero();
  GeodeticCoord geodetic;
  Quat rotation_enu_b = Quat::Identity();
};

/// Sliding-window fusion pipeline: visual-inertial warm-up, GNSS-SLAM
/// alignment handoff, per-frame window optimization with GNSS factors,
/// gating, marginalization and the low-speed / prior-lifecycle / turn
/// safeguards.
class Estimator {
 public:
  explicit Estimator(EstimatorConfig config);

  /// Seeds the first frame's state in the local world frame; must be called
  /// before the first process_frame.
  void set_initial_state(const NavState& x0);

  /// Feeds one image frame with the IMU batch covering
  /// [previous stamp, frame stamp] (boundary samples included) and the GNSS
  /// epochs stamped inside (previous stamp, frame stamp].
  void process_frame(const FrameInput& frame, const std::vector<ImuSample>& imu_batch,
                     const std::vector<RawGnssEpoch>& gnss_epochs);

  EstimatorMode mode() const { return mode_; }
  bool initialized() const { return mode_ == EstimatorMode::kFused; }
  const WorldAlignment& alignment() const { return alignment_; }
  const std::optional<EnuAnchor>& anchor() const { return anchor_; }
  const Extrinsics& extrinsics() const { return extrinsics_; }
  bool extrinsics_variable() const { return extrinsics_variable_; }
  int64_t marginalized_epoch_count() const { return marginalized_epochs_; }
  bool alignment_prior_active() const { return alignment_prior_active_; }
  const std::vector<FrameDiagnostics>& diagnostics() const { return diagnostics_; }
  const std::vector<GateReport>& gate_reports() const { return gate_reports_; }
  const MarginalPrior* marginal_prior() const { return prior_ ? prior_.get() : nullptr; }

  /// Prior information restricted to the alignment block, if the prior
  /// retains it (min eigenvalue > 0 means yaw/translation stay observable
  /// without GNSS in the window).
  std::optional<MatX> alignment_marginal_information() const;

  /// All processed frames (slid-out history plus current window), local frame.
  std::vector<std::pair<double, NavState>> local_trajectory() const;
  /// Local trajectory composed with the alignment and anchor; requires
  /// initialization.
  std::vector<GlobalPose> export_global_trajectory() const;

  const EstimatorConfig& config() const { return config_; }

  // ---- used by gate_mixed ----
  struct Assembly {
    Problem problem;
    std::map<int64_t, int> frame_block;
    std::map<int64_t, int> clock_block;
    std::map<int64_t, int> landmark_block;
    int extrinsics_block = -1;
    int alignment_block = -1;
    int prior_factor = -1;
    std::map<int64_t, std::vector<int>> epoch_factors;
  };
  enum class GnssFactorSet { kAll, kNone };
  Assembly build_problem(GnssFactorSet gnss_set, bool gnss_active) const;
  /// Attaches a candidate epoch (SPP-initialized clock) to an assembly and
  /// returns the factor indices split into pseudorange/Doppler parts.
  struct CandidateAttach {
    int clock_block = -1;
    std::vector<std::pair<int, int>> pr_factors;   // (sat id, factor index)
    std::vector<std::pair<int, int>> dop_factors;  // (sat id, factor index)
  };
  CandidateAttach attach_candidate_epoch(Assembly& assembly, const RawGnssEpoch& epoch,
                                         const SppSolution& spp,
                                         const VelocitySolution& vel) const;
  bool any_kept_since(double stamp) const;
  int64_t frame_count() const { return next_frame_id_; }

 private:
  struct Frame {
    int64_t id = -1;
    double stamp = 0.0;
    NavState state;
    std::vector<ImuSample> imu_from_prev;
    Preintegration preint_from_prev;
  };

  struct FeatureTrack {
    int64_t host_frame = -1;
    std::vector<std::pair<int64_t, Vec2>> obs;  // frame id -> uv, insertion ordered
    double inverse_depth = 0.0;
    bool triangulated = false;
  };

  struct EpochEntry {
    RawGnssEpoch epoch;  // kept observations only
    std::vector<int> pr_kept_ids, dop_kept_ids;
    int64_t anchor_frame = -1;
    GnssBinding binding;
    std::vector<Constellation> slots;
    VecX clock;  // [bias_0, drift_0, bias_1, drift_1, ...] seconds
  };

  void ingest_features(int64_t frame_id, const std::vector<FeatureObservation>& features);
  void handle_gnss_epoch(const RawGnssEpoch& epoch);
  void try_initialize();
  void rescale_local_map(double s);
  void triangulate_tracks();
  void solve_window(FrameDiagnostics& diag);
  void write_back(const Assembly& assembly);
  double second_latest_speed() const;
  bool second_latest_is_keyframe() const;
  void slide_keyframe();
  void slide_non_keyframe();
  void rehost_or_drop(int64_t track_id, int64_t removed_frame);
  void refresh_preintegrations();
  void update_turn_state();
  const Frame* frame_by_id(int64_t id) const;
  Vec3 landmark_world(const FeatureTrack& t) const;
  GnssBinding make_binding(const Frame& anchor_frame, double epoch_stamp) const;

  EstimatorConfig config_;
  EstimatorMode mode_ = EstimatorMode::kWarmup;

  std::deque<Frame> window_;
  std::map<int64_t, FeatureTrack> tracks_;
  std::vector<EpochEntry> epochs_;
  Extrinsics extrinsics_;
  bool extrinsics_variable_ = false;
  WorldAlignment alignment_;
  std::optional<EnuAnchor> anchor_;

  std::shared_ptr<MarginalPrior> prior_;
  struct BlockKey {
    enum Kind { kFrame, kLandmark, kExtrinsics, kAlignment, kClock } kind;
    int64_t id;
    bool operator==(const BlockKey&) const = default;
  };
  std::vector<BlockKey> prior_keys_;

  bool alignment_prior_active_ = false;
  WorldAlignment alignment_prior_value_;
  int64_t marginalized_epochs_ = 0;

  // initialization bookkeeping
  std::vector<EcefVec> spp_fixes_;
  std::vector<double> spp_stamps_;
  std::vector<TimedPosition> local_traj_;

  // gate fallback bookkeeping: (stamp, any measurement kept)
  std::vector<std::pair<double, bool>> gate_history_;

  double initial_yaw_ = 0.0;
  bool have_initial_ = false;
  NavState pending_initial_;

  std::map<double, NavState> history_;  // slid-out frames
  int64_t next_frame_id_ = 0;

  std::vector<FrameDiagnostics> diagnostics_;
  std::vector<GateReport> gate_reports_;

  friend GateOutcome gate_mixed(const RawGnssEpoch&, Estimator&);
};

}  // namespace gvio
