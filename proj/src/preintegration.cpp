#include "gvio/preintegration.hpp"

namespace gvio {

Preintegration integrate(const std::vector<ImuSample>& samples, const Vec3& bias_accel,
                         const Vec3& bias_gyro, const ImuNoise& noise) {
  Preintegration pi;
  pi.bias_accel_ref = bias_accel;
  pi.bias_gyro_ref = bias_gyro;
  if (samples.size() < 2) return pi;  // identity preintegration over zero duration

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    if (samples[i + 1].stamp <= samples[i].stamp)
      throw std::invalid_argument("integrate: non-monotonic IMU stamps");
  }

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const ImuSample& s0 = samples[i];
    const ImuSample& s1 = samples[i + 1];
    const double dt = s1.stamp - s0.stamp;
    const double dt2 = dt * dt;

    const Vec3 w_mid = 0.5 * (s0.gyro + s1.gyro) - bias_gyro;
    const Vec3 a0 = s0.accel - bias_accel;
    const Vec3 a1 = s1.accel - bias_accel;

    const Quat gamma0 = pi.gamma;
    const Quat gamma1 = (gamma0 * quat_exp(w_mid * dt)).normalized();
    const Mat3 r0 = gamma0.toRotationMatrix();
    const Mat3 r1 = gamma1.toRotationMatrix();

    const Vec3 acc_mid = 0.5 * (r0 * a0 + r1 * a1);
    const Vec3 alpha1 = pi.alpha + pi.beta * dt + 0.5 * acc_mid * dt2;
    const Vec3 beta1 = pi.beta + acc_mid * dt;

    // Discrete linearization of the midpoint step, error order
    // [dp, dtheta, dv, dba, dbg].
    const Mat3 a0x = skew(a0), a1x = skew(a1), wx = skew(w_mid);
    const Mat3 i3 = Mat3::Identity();
    Mat15 f = Mat15::Identity();
    f.block<3, 3>(0, 3) = -0.25 * r0 * a0x * dt2 - 0.25 * r1 * a1x * (i3 - wx * dt) * dt2;
    f.block<3, 3>(0, 6) = i3 * dt;
    f.block<3, 3>(0, 9) = -0.25 * (r0 + r1) * dt2;
    f.block<3, 3>(0, 12) = 0.25 * r1 * a1x * dt2 * dt;
    f.block<3, 3>(3, 3) = i3 - wx * dt;
    f.block<3, 3>(3, 12) = -i3 * dt;
    f.block<3, 3>(6, 3) = -0.5 * r0 * a0x * dt - 0.5 * r1 * a1x * (i3 - wx * dt) * dt;
    f.block<3, 3>(6, 9) = -0.5 * (r0 + r1) * dt;
    f.block<3, 3>(6, 12) = 0.5 * r1 * a1x * dt * dt;

    // Noise enters as [na0, ng0, na1, ng1, nba, nbg].
    Eigen::Matrix<double, 15, 18> v = Eigen::Matrix<double, 15, 18>::Zero();
    v.block<3, 3>(0, 0) = 0.25 * r0 * dt2;
    v.block<3, 3>(0, 3) = -0.125 * r1 * a1x * dt2 * dt;
    v.block<3, 3>(0, 6) = 0.25 * r1 * dt2;
    v.block<3, 3>(0, 9) = v.block<3, 3>(0, 3);
    v.block<3, 3>(3, 3) = 0.5 * i3 * dt;
    v.block<3, 3>(3, 9) = 0.5 * i3 * dt;
    v.block<3, 3>(6, 0) = 0.5 * r0 * dt;
    v.block<3, 3>(6, 3) = -0.25 * r1 * a1x * dt * dt;
    v.block<3, 3>(6, 6) = 0.5 * r1 * dt;
    v.block<3, 3>(6, 9) = v.block<3, 3>(6, 3);
    v.block<3, 3>(9, 12) = i3 * dt;
    v.block<3, 3>(12, 15) = i3 * dt;

    Eigen::Matrix<double, 18, 18> n = Eigen::Matrix<double, 18, 18>::Zero();
    const double an2 = noise.accel_noise * noise.accel_noise / dt;
    const double gn2 = noise.gyro_noise * noise.gyro_noise / dt;
    const double aw2 = noise.accel_walk * noise.accel_walk / dt;
    const double gw2 = noise.gyro_walk * noise.gyro_walk / dt;
    n.diagonal() << an2, an2, an2, gn2, gn2, gn2, an2, an2, an2, gn2, gn2, gn2, aw2, aw2,
        aw2, gw2, gw2, gw2;

    pi.covariance = f * pi.covariance * f.transpose() + v * n * v.transpose();
    pi.covariance = 0.5 * (pi.covariance + pi.covariance.transpose()).eval();
    pi.jacobian = f * pi.jacobian;

    pi.alpha = alpha1;
    pi.beta = beta1;
    pi.gamma = gamma1;
    pi.duration += dt;
  }
  return pi;
}

CorrectedStates bias_corrected(const Preintegration& pi, const Vec3& delta_ba,
                               const Vec3& delta_bg) {
  CorrectedStates c;
  const Mat3 j_p_ba = pi.jacobian.block<3, 3>(0, 9);
  const Mat3 j_p_bg = pi.jacobian.block<3, 3>(0, 12);
  const Mat3 j_q_bg = pi.jacobian.block<3, 3>(3, 12);
  const Mat3 j_v_ba = pi.jacobian.block<3, 3>(6, 9);
  const Mat3 j_v_bg = pi.jacobian.block<3, 3>(6, 12);
  c.alpha = pi.alpha + j_p_ba * delta_ba + j_p_bg * delta_bg;
  c.beta = pi.beta + j_v_ba * delta_ba + j_v_bg * delta_bg;
  const Vec3 dtheta = j_q_bg * delta_bg;
  c.gamma = (pi.gamma * Quat(1.0, 0.5 * dtheta.x(), 0.5 * dtheta.y(), 0.5 * dtheta.z()))
                .normalized();
  return c;
}

AntennaState extrapolate_to_epoch(const NavState& x_k, const Preintegration& pi,
                                  const LeverArm& lever, const Vec3& gyro_at_epoch,
                                  const GravityVec& gravity) {
  const CorrectedStates c =
      bias_corrected(pi, x_k.bias_accel - pi.bias_accel_ref, x_k.bias_gyro - pi.bias_gyro_ref);
  const Mat3 r_wb = x_k.q_wl_b.toRotationMatrix();
  const Mat3 r_gamma = c.gamma.toRotationMatrix();
  const double dt = pi.duration;
  const Vec3 g = gravity.vec();
  const Vec3 omega = gyro_at_epoch - x_k.bias_gyro;

  AntennaState out;
  out.p_wl_g = x_k.p_wl_b + x_k.v_wl_b * dt +
               r_wb * (c.alpha + r_gamma * lever.translation_g_in_b) - 0.5 * g * dt * dt;
  out.v_wl_g = x_k.v_wl_b +
               r_wb * (c.beta - r_gamma * skew(lever.translation_g_in_b) * omega) - g * dt;
  return out;
}

}  // namespace gvio
