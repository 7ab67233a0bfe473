#pragma once

#include <map>
#include <vector>

#include "gvio/core.hpp"

namespace gvio {

/// Per-image body state in the local world frame. The 15-dim tangent order
/// used by retract/local_diff and by every factor Jacobian is
/// [dp, dtheta, dv, dba, dbg] with rotation increments applied on the right.
struct NavState {
  Vec3 p_wl_b = Vec3::Zero();
  Vec3 v_wl_b = Vec3::Zero();
  Quat q_wl_b = Quat::Identity();
  Vec3 bias_accel = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
  double stamp = 0.0;
};

using Vec15 = Eigen::Matrix<double, 15, 1>;

NavState retract(const NavState& x, const Vec15& delta);
Vec15 local_diff(const NavState& x2, const NavState& x1);

/// Inverse-depth landmark hosted by the first observing keyframe.
struct LandmarkDepth {
  double inverse_depth = 0.0;           // 1/m in the host camera frame
  int64_t host_frame = -1;              // frame id of the host
  std::vector<std::pair<int64_t, Vec2>> observations;  // (frame id, unit-plane uv)
};

/// Camera-IMU extrinsics: q maps camera-frame vectors into the body frame,
/// p is the camera origin expressed in the body frame.
struct Extrinsics {
  Quat rotation_b_from_c = Quat::Identity();
  Vec3 translation_c_in_b = Vec3::Zero();
};

/// 1-DoF yaw + translation taking local-world coordinates into the ground
/// ENU frame.
struct WorldAlignment {
  double yaw = 0.0;  // wrapped to (-pi, pi]
  Vec3 translation = Vec3::Zero();
};

Mat3 yaw_rotation(const WorldAlignment& a);

enum class Constellation : int { kGps = 0, kGlonass = 1 };

inline const char* constellation_name(Constellation c) {
  return c == Constellation::kGps ? "GPS" : "GLO";
}

/// Receiver clock bias/drift per observed constellation at one epoch.
/// Epochs carry independent clock parameters.
struct ClockState {
  int64_t epoch_index = -1;
  std::map<Constellation, double> bias;   // seconds
  std::map<Constellation, double> drift;  // seconds / second
};

/// Fixed IMU-to-antenna translation; calibrated beforehand, never optimized.
struct LeverArm {
  Vec3 translation_g_in_b = Vec3::Zero();
};

}  // namespace gvio
