#pragma once

#include <vector>

#include "gvio/state.hpp"

namespace gvio {

struct ImuSample {
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2
  double stamp = 0.0;
};

/// Continuous-time noise densities and bias random-walk intensities used to
/// weight IMU factors. Defaults are consumer grade.
struct ImuNoise {
  double gyro_noise = 1e-4;   // rad/s/sqrt(Hz)
  double accel_noise = 1e-3;  // m/s^2/sqrt(Hz)
  double gyro_walk = 1e-5;    // rad/s^2/sqrt(Hz)
  double accel_walk = 1e-4;   // m/s^3/sqrt(Hz)
};

/// Gravity in the local world frame, (0, 0, g). Accelerometers measure
/// specific force R^T(a + g e_z) + b_a.
struct GravityVec {
  double g = 9.81;
  Vec3 vec() const { return Vec3(0.0, 0.0, g); }
};

using Mat15 = Eigen::Matrix<double, 15, 15>;

/// Relative-motion summary between two stamps, independent of the absolute
/// state. Error-state order is [dp, dtheta, dv, dba, dbg]; the 15x15 state
/// Jacobian is accumulated alongside the covariance so the nominal states
/// can be corrected to first order when the linearization biases move.
struct Preintegration {
  Vec3 alpha = Vec3::Zero();   // displacement, start-body frame
  Vec3 beta = Vec3::Zero();    // velocity change, start-body frame
  Quat gamma = Quat::Identity();
  Mat15 covariance = Mat15::Zero();
  Mat15 jacobian = Mat15::Identity();
  double duration = 0.0;
  Vec3 bias_accel_ref = Vec3::Zero();
  Vec3 bias_gyro_ref = Vec3::Zero();

  Eigen::Matrix<double, 15, 6> jacobian_bias() const {
    Eigen::Matrix<double, 15, 6> j;
    j.leftCols<3>() = jacobian.block<15, 3>(0, 9);
    j.rightCols<3>() = jacobian.block<15, 3>(0, 12);
    return j;
  }
};

struct CorrectedStates {
  Vec3 alpha;
  Vec3 beta;
  Quat gamma;
};

/// Midpoint preintegration of bias-corrected samples. The sample batch
/// covers [stamps.front(), stamps.back()]; stamps must increase strictly.
Preintegration integrate(const std::vector<ImuSample>& samples, const Vec3& bias_accel,
                         const Vec3& bias_gyro, const ImuNoise& noise = {});

/// First-order bias correction via the stored Jacobians. Valid for small
/// delta (the window keeps |delta| well below ~1e-2 by re-integrating when
/// biases move further).
CorrectedStates bias_corrected(const Preintegration& pi, const Vec3& delta_ba,
                               const Vec3& delta_bg);

/// Antenna position/velocity at the preintegration end moment: the nominal
/// states carry the body forward from x_k, the lever arm maps body to
/// antenna, and the instantaneous body rate supplies the lever-arm velocity.
struct AntennaState {
  Vec3 p_wl_g;
  Vec3 v_wl_g;
};

AntennaState extrapolate_to_epoch(const NavState& x_k, const Preintegration& pi,
                                  const LeverArm& lever, const Vec3& gyro_at_epoch,
                                  const GravityVec& gravity);

}  // namespace gvio
