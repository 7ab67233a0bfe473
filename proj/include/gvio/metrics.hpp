#pragma once

#include <string>
#include <vector>

#include "gvio/core.hpp"

namespace gvio {

struct TimedPose {
  double stamp = 0.0;
  Vec3 position = Vec3::Zero();
  Quat rotation = Quat::Identity();
};

using Trajectory = std::vector<TimedPose>;

struct TrajectoryEval {
  Vec3 mae_translation = Vec3::Zero();   // m, per axis X Y Z
  Vec3 mae_rotation_deg = Vec3::Zero();  // deg, per axis Z Y X of the error rotation
  double rmse_translation = 0.0;         // m (= ATE)
  double completeness = 0.0;             // [0, 1]
};

/// Stamp association: nearest ground-truth pose within the window.
std::vector<std::pair<size_t, size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                 double max_dt = 0.05);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Closed-form 6-DoF least-squares alignment (no scale) of est onto gt over
/// associated pairs. Throws if fewer than 3 pairs associate.
RigidTransform align_rigid(const Trajectory& est, const Trajectory& gt);
Trajectory apply_transform(const Trajectory& traj, const RigidTransform& t);

double compute_ate(const Trajectory& aligned_est, const Trajectory& gt);

/// Fraction of 0.1 s grid samples over [t_begin, t_end] with an estimate
/// stamp within +-3 s.
double compute_completeness(const std::vector<double>& est_stamps, double t_begin,
                            double t_end);

/// Per-axis translation MAE and per-axis rotation MAE (degrees) from the
/// ZYX Euler decomposition of the per-pose error rotation gt^T * est.
void compute_mae(const Trajectory& aligned_est, const Trajectory& gt, Vec3* mae_translation,
                 Vec3* mae_rotation_deg);

/// Full evaluation: rigid alignment, MAE, RMSE and completeness.
TrajectoryEval evaluate_trajectory(const Trajectory& est, const Trajectory& gt,
                                   bool align = true);

// TUM-format trajectory files: "stamp px py pz qx qy qz qw" per line.
Trajectory read_tum(const std::string& path);
void write_tum(const std::string& path, const Trajectory& traj);

/// Results table row mirroring the evaluation columns.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const TrajectoryEval& eval);

}  // namespace gvio
