#pragma once

#include <optional>
#include <vector>

#include "gvio/geodesy.hpp"

namespace gvio {

struct AlignmentEstimate {
  double scale = 1.0;
  double yaw = 0.0;
  Vec3 translation = Vec3::Zero();
  double rms = 0.0;
};

/// Third single-point-positioning fix becomes the ENU reference point;
/// nullopt until three fixes exist.
std::optional<EcefVec> select_reference(const std::vector<EcefVec>& spp_fixes);

struct TimedPosition {
  double stamp = 0.0;
  Vec3 position = Vec3::Zero();
};

/// Piecewise-linear interpolation of a timed trajectory at the query
/// stamps; out-of-span queries are skipped. Returns (query index, value).
std::vector<std::pair<size_t, Vec3>> interpolate_positions(
    const std::vector<TimedPosition>& traj, const std::vector<double>& query_stamps);

/// Closed-form yaw+scale+translation minimizer of
///   sum_l | enu_l - s R(yaw) local_l - t |^2.
/// Throws std::invalid_argument on degenerate input (< 3 pairs or coincident
/// local points).
AlignmentEstimate align_5dof(const std::vector<Vec3>& enu_pts,
                             const std::vector<Vec3>& local_pts);

}  // namespace gvio
