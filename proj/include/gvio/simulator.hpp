#pragma once

#include <map>

#include "gvio/geodesy.hpp"
#include "gvio/gnss.hpp"
#include "gvio/preintegration.hpp"

namespace gvio {

/// Elevation-mask override emulating an urban-canyon segment.
struct MaskWindow {
  double t_begin = 0.0;
  double t_end = 0.0;
  double mask_deg = 0.0;
};

struct ScenarioConfig {
  // geometry / schedule
  double origin_lat_deg = 37.7749;
  double origin_lon_deg = -122.4194;
  double origin_height = 20.0;
  std::vector<Vec3> waypoints = {{0, 0, 0}, {160, 0, 0}, {160, 160, 2}, {20, 170, 2}};
  std::vector<double> leg_speeds = {6.0, 6.0, 6.0};  // m/s per leg
  std::map<int, double> stops;                       // waypoint index -> dwell seconds
  double turn_duration = 6.0;                        // yaw transition window, s

  // sensor schedule
  double imu_rate = 200.0;
  double cam_rate = 10.0;
  double gnss_rate = 1.0;
  double gnss_offset = 0.37;  // keeps GNSS stamps off the camera grid

  // environment
  int n_landmarks = 400;
  double landmark_lateral_min = 4.0;
  double landmark_lateral_max = 40.0;
  double fov_half_tan = 1.0;  // 90 deg field of view on the unit plane
  double max_feature_depth = 60.0;
  double min_feature_depth = 1.0;

  int sats_gps = 8;
  int sats_glo = 6;
  double base_mask_deg = 10.0;
  std::vector<MaskWindow> mask_windows;

  // noise (zero disables)
  double sigma_pseudorange = 1.0;   // m
  double sigma_range_rate = 0.5;    // m/s
  double sigma_pixel = 1.5;         // px equivalent; divided by focal below
  double focal_px = 460.0;
  ImuNoise imu_noise;               // densities used for sample noise
  bool noise_enabled = true;

  // truth parameters
  Vec3 bias_accel_true = Vec3(0.02, -0.015, 0.01);
  Vec3 bias_gyro_true = Vec3(0.002, -0.001, 0.0015);
  double gravity = 9.81;
  Vec3 lever_arm = Vec3(0.3, 0.1, 0.8);
  double clock_walk = 1e-9;  // s/sqrt(s) receiver bias random walk

  // outliers
  double outlier_rate = 0.0;       // fraction of pseudoranges corrupted
  double outlier_min = 20.0;       // m
  double outlier_max = 200.0;      // m

  double duration = 120.0;
  uint64_t seed = 1;

  // camera extrinsics truth (camera z forward = body x)
  Extrinsics extrinsics_true = default_extrinsics();

  static Extrinsics default_extrinsics();
  double pixel_sigma_unit_plane() const { return sigma_pixel / focal_px; }
};

struct FeatureObservation {
  int64_t track_id = 0;
  Vec2 uv = Vec2::Zero();  // unit-plane coordinates
};

struct InjectedOutlier {
  int64_t epoch_index = 0;
  int sat_id = 0;
  double magnitude = 0.0;
};

/// Continuous ground truth: quintic B-spline position (C4), scheduled yaw
/// (C2), constant IMU biases, per-epoch receiver clock truth and circular
/// satellite orbits.
class GroundTruth {
 public:
  explicit GroundTruth(const ScenarioConfig& config);

  double duration() const { return duration_; }
  const ScenarioConfig& config() const { return cfg_; }
  const EnuAnchor& anchor() const { return anchor_; }

  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
  Quat attitude(double t) const;   // Rz(yaw)
  Vec3 omega_body(double t) const; // (0, 0, yaw_rate)
  NavState nav_state(double t) const;

  Vec3 antenna_position_enu(double t) const;
  Vec3 antenna_velocity_enu(double t) const;
  Vec3 antenna_position_ecef(double t) const;
  Vec3 antenna_velocity_ecef(double t) const;

  /// Ideal (noise/bias free) IMU signal at time t.
  ImuSample imu_ideal(double t) const;

  const std::vector<Vec3>& landmarks() const { return landmarks_; }

  int num_satellites() const;
  SatelliteState satellite(int index, double t) const;

  /// Receiver clock truth for the epoch starting at stamp m(e).
  double clock_bias(Constellation c, int64_t epoch) const;
  double clock_drift(Constellation c, int64_t epoch) const;
  int64_t num_epochs() const { return n_epochs_; }
  double epoch_stamp(int64_t e) const { return cfg_.gnss_offset + double(e) / cfg_.gnss_rate; }

 private:
  struct YawSegment {
    double t_begin, tau, delta;
  };
  struct Orbit {
    Constellation constellation;
    int sat_id;
    Vec3 p0;
    Vec3 axis;   // unit rotation axis
    double rate; // rad/s
    double clock_bias;
    double clock_drift;
    double wavelength;
  };

  double yaw(double t) const;
  double yaw_rate(double t) const;
  Vec3 spline_eval(double t, int derivative) const;

  ScenarioConfig cfg_;
  EnuAnchor anchor_;
  double duration_ = 0.0;

  // position spline (uniform knots)
  std::vector<Vec3> controls_;
  double knot_dt_ = 1.0;
  double t_offset_ = 0.0;  // scenario time 0 maps to knot parameter t_offset_

  double yaw0_ = 0.0;
  std::vector<YawSegment> yaw_segments_;

  std::vector<Vec3> landmarks_;
  std::vector<Orbit> orbits_;

  int64_t n_epochs_ = 0;
  std::map<Constellation, std::vector<double>> clock_bias_truth_;
  std::map<Constellation, std::vector<double>> clock_drift_truth_;
};

std::vector<ImuSample> synth_imu(const GroundTruth& gt, const ScenarioConfig& config,
                                 Rng& rng);

std::vector<FeatureObservation> synth_features(const GroundTruth& gt,
                                               const ScenarioConfig& config,
                                               double frame_stamp, Rng& rng);

RawGnssEpoch synth_gnss_epoch(const GroundTruth& gt, const ScenarioConfig& config,
                              int64_t epoch_index, Rng& rng,
                              std::vector<InjectedOutlier>* outlier_log = nullptr);

/// Generates the full dataset into a directory: imu.csv, features.csv,
/// gnss.txt, gt.tum, initial_state.txt, outliers.txt, dataset_info.txt.
void write_dataset(const std::string& dir, const ScenarioConfig& config);

}  // namespace gvio
