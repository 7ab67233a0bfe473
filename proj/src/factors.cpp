#include "gvio/factors.hpp"

#include <iostream>

namespace gvio {

namespace {

struct AntennaChain {
  Vec3 p_wl_g, v_wl_g;
  Vec3 p_we_g, v_we_g;
  Vec3 los;          // receiver -> satellite, ECEF
  double range = 0.0;
  // intermediates for Jacobians
  Mat3 r_wb, r_gamma, r_eg_rz;
  Vec3 lever_world;  // alpha + R(gamma) p_bg, body_k frame
  Vec3 vel_body;     // beta - R(gamma) [p_bg]x omega, body_k frame
  Vec3 omega;
  CorrectedStates corr;
  double kappa = 0.0;
};

/// Shared position/velocity extrapolation and frame chain of the GNSS
/// factors (receiver state at m(e) seen from ECEF).
AntennaChain antenna_chain(const NavState& x, const VecX& align, const EnuAnchor& anchor,
                           const GnssBinding& b, const GravityVec& gravity,
                           const SatelliteState& sat) {
  AntennaChain c;
  c.corr = bias_corrected(b.preint, x.bias_accel - b.preint.bias_accel_ref,
                          x.bias_gyro - b.preint.bias_gyro_ref);
  c.r_wb = x.q_wl_b.toRotationMatrix();
  c.r_gamma = c.corr.gamma.toRotationMatrix();
  c.omega = b.gyro_at_epoch - x.bias_gyro;
  const double dt = b.preint.duration;
  const Vec3 g = gravity.vec();
  const Vec3& lever = b.lever.translation_g_in_b;

  c.lever_world = c.corr.alpha + c.r_gamma * lever;
  c.vel_body = c.corr.beta - c.r_gamma * skew(lever) * c.omega;
  c.p_wl_g = x.p_wl_b + x.v_wl_b * dt + c.r_wb * c.lever_world - 0.5 * g * dt * dt;
  c.v_wl_g = x.v_wl_b + c.r_wb * c.vel_body - g * dt;

  c.kappa = align(0);
  const Mat3 rz = rot_z(c.kappa);
  c.r_eg_rz = anchor.rotation_ecef_from_enu * rz;
  c.p_we_g = c.r_eg_rz * c.p_wl_g + anchor.rotation_ecef_from_enu * align.segment<3>(1) +
             anchor.origin_ecef;
  c.v_we_g = c.r_eg_rz * c.v_wl_g;

  const Vec3 d = sat.position_ecef - c.p_we_g;
  c.range = d.norm();
  c.los = d / c.range;
  return c;
}

// d(p_wl_g)/d(tangent of x_k), 3x15, tangent order [dp, dtheta, dv, dba, dbg]
Eigen::Matrix<double, 3, 15> d_pos_d_nav(const AntennaChain& c, const GnssBinding& b) {
  Eigen::Matrix<double, 3, 15> j = Eigen::Matrix<double, 3, 15>::Zero();
  const Mat3 j_p_ba = b.preint.jacobian.block<3, 3>(0, 9);
  const Mat3 j_p_bg = b.preint.jacobian.block<3, 3>(0, 12);
  const Mat3 j_q_bg = b.preint.jacobian.block<3, 3>(3, 12);
  const Vec3& lever = b.lever.translation_g_in_b;
  j.block<3, 3>(0, 0) = Mat3::Identity();
  j.block<3, 3>(0, 3) = -c.r_wb * skew(c.lever_world);
  j.block<3, 3>(0, 6) = Mat3::Identity() * b.preint.duration;
  j.block<3, 3>(0, 9) = c.r_wb * j_p_ba;
  j.block<3, 3>(0, 12) = c.r_wb * (j_p_bg - c.r_gamma * skew(lever) * j_q_bg);
  return j;
}

Eigen::Matrix<double, 3, 15> d_vel_d_nav(const AntennaChain& c, const GnssBinding& b) {
  Eigen::Matrix<double, 3, 15> j = Eigen::Matrix<double, 3, 15>::Zero();
  const Mat3 j_q_bg = b.preint.jacobian.block<3, 3>(3, 12);
  const Mat3 j_v_ba = b.preint.jacobian.block<3, 3>(6, 9);
  const Mat3 j_v_bg = b.preint.jacobian.block<3, 3>(6, 12);
  const Vec3& lever = b.lever.translation_g_in_b;
  j.block<3, 3>(0, 3) = -c.r_wb * skew(c.vel_body);
  j.block<3, 3>(0, 6) = Mat3::Identity();
  j.block<3, 3>(0, 9) = c.r_wb * j_v_ba;
  j.block<3, 3>(0, 12) =
      c.r_wb * (j_v_bg + c.r_gamma * skew(skew(lever) * c.omega) * j_q_bg +
                c.r_gamma * skew(lever));
  return j;
}

const Vec3 kEz(0.0, 0.0, 1.0);

}  // namespace

PseudorangeFactor::PseudorangeFactor(int nav_id, int align_id, int clock_id,
                                     EnuAnchor anchor, SatelliteState sat, SatObs obs,
                                     GnssBinding binding, GravityVec gravity,
                                     int clock_slot, double weight)
    : blocks_{nav_id, align_id, clock_id},
      anchor_(std::move(anchor)),
      sat_(std::move(sat)),
      obs_(std::move(obs)),
      binding_(std::move(binding)),
      gravity_(gravity),
      clock_slot_(clock_slot),
      sqrt_w_(std::sqrt(weight)) {}

bool PseudorangeFactor::evaluate(const std::vector<const VecX*>& params, VecX& residual,
                                 std::vector<MatX>* jacobians) const {
  const NavState x = vec_to_navstate(*params[0]);
  const VecX& align = *params[1];
  const VecX& clock = *params[2];
  const AntennaChain c = antenna_chain(x, align, anchor_, binding_, gravity_, sat_);

  const double bias_r = clock(2 * clock_slot_);
  residual.resize(1);
  residual(0) = sqrt_w_ * (c.range + kSpeedOfLight * bias_r -
                           kSpeedOfLight * sat_.clock_bias - obs_.pseudorange);

  if (jacobians) {
    jacobians->resize(3);
    // d(range)/d(p_we_g) = -los^T, then chain to the local position.
    const Eigen::RowVector3d g_pos = -c.los.transpose() * c.r_eg_rz;
    MatX j_nav = sqrt_w_ * g_pos * d_pos_d_nav(c, binding_);
    MatX j_align(1, 4);
    j_align(0, 0) = sqrt_w_ * g_pos.dot(kEz.cross(c.p_wl_g));
    j_align.block<1, 3>(0, 1) =
        sqrt_w_ * (-c.los.transpose() * anchor_.rotation_ecef_from_enu);
    MatX j_clock = MatX::Zero(1, clock.size());
    j_clock(0, 2 * clock_slot_) = sqrt_w_ * kSpeedOfLight;
    (*jacobians)[0] = std::move(j_nav);
    (*jacobians)[1] = std::move(j_align);
    (*jacobians)[2] = std::move(j_clock);
  }
  return true;
}

DopplerFactor::DopplerFactor(int nav_id, int align_id, int clock_id, EnuAnchor anchor,
                             SatelliteState sat, SatObs obs, GnssBinding binding,
                             GravityVec gravity, int clock_slot, double weight)
    : blocks_{nav_id, align_id, clock_id},
      anchor_(std::move(anchor)),
      sat_(std::move(sat)),
      obs_(std::move(obs)),
      binding_(std::move(binding)),
      gravity_(gravity),
      clock_slot_(clock_slot),
      sqrt_w_(std::sqrt(weight)) {}

bool DopplerFactor::evaluate(const std::vector<const VecX*>& params, VecX& residual,
                             std::vector<MatX>* jacobians) const {
  const NavState x = vec_to_navstate(*params[0]);
  const VecX& align = *params[1];
  const VecX& clock = *params[2];
  const AntennaChain c = antenna_chain(x, align, anchor_, binding_, gravity_, sat_);

  const double drift_r = clock(2 * clock_slot_ + 1);
  const Vec3 w_rel = sat_.velocity_ecef - c.v_we_g;
  residual.resize(1);
  residual(0) = sqrt_w_ * (c.los.dot(w_rel) + kSpeedOfLight * drift_r -
                           kSpeedOfLight * sat_.clock_drift -
                           (-obs_.wavelength * obs_.doppler));

  if (jacobians) {
    jacobians->resize(3);
    // Position enters through the line of sight only.
    const Eigen::RowVector3d d_los =
        -w_rel.transpose() * (Mat3::Identity() - c.los * c.los.transpose()) / c.range;
    const Eigen::RowVector3d g_pos = d_los * c.r_eg_rz;
    const Eigen::RowVector3d g_vel = -c.los.transpose() * c.r_eg_rz;

    MatX j_nav = sqrt_w_ * (g_pos * d_pos_d_nav(c, binding_) +
                            g_vel * d_vel_d_nav(c, binding_));
    MatX j_align(1, 4);
    j_align(0, 0) =
        sqrt_w_ * (g_pos.dot(kEz.cross(c.p_wl_g)) + g_vel.dot(kEz.cross(c.v_wl_g)));
    j_align.block<1, 3>(0, 1) = sqrt_w_ * (d_los * anchor_.rotation_ecef_from_enu);
    MatX j_clock = MatX::Zero(1, clock.size());
    j_clock(0, 2 * clock_slot_ + 1) = sqrt_w_ * kSpeedOfLight;
    (*jacobians)[0] = std::move(j_nav);
    (*jacobians)[1] = std::move(j_align);
    (*jacobians)[2] = std::move(j_clock);
  }
  return true;
}

double DopplerFactor::residual_with_fixed_los(const std::vector<const VecX*>& params,
                                              const Vec3& los_ecef) const {
  const NavState x = vec_to_navstate(*params[0]);
  const VecX& align = *params[1];
  const VecX& clock = *params[2];
  const AntennaChain c = antenna_chain(x, align, anchor_, binding_, gravity_, sat_);
  const double drift_r = clock(2 * clock_slot_ + 1);
  return sqrt_w_ * (los_ecef.dot(sat_.velocity_ecef - c.v_we_g) +
                    kSpeedOfLight * drift_r - kSpeedOfLight * sat_.clock_drift -
                    (-obs_.wavelength * obs_.doppler));
}

ReprojectionFactor::ReprojectionFactor(int nav_host_id, int nav_target_id,
                                       int extrinsics_id, int landmark_id, Vec2 host_uv,
                                       Vec2 target_uv, double sigma, double huber_delta)
    : blocks_{nav_host_id, nav_target_id, extrinsics_id, landmark_id},
      host_uv_(std::move(host_uv)),
      target_uv_(std::move(target_uv)),
      inv_sigma_(1.0 / sigma),
      huber_delta_(huber_delta) {}

bool ReprojectionFactor::evaluate(const std::vector<const VecX*>& params, VecX& residual,
                                  std::vector<MatX>* jacobians) const {
  const NavState xi = vec_to_navstate(*params[0]);
  const NavState xj = vec_to_navstate(*params[1]);
  const Quat q_bc(Eigen::Vector4d(params[2]->segment<4>(3)));
  const Vec3 p_bc = params[2]->segment<3>(0);
  const double rho = (*params[3])(0);
  if (rho < 1e-8) return false;

  const Mat3 r_bc = q_bc.toRotationMatrix();
  const Mat3 r_cb = r_bc.transpose();
  const Mat3 r_i = xi.q_wl_b.toRotationMatrix();
  const Mat3 r_j = xj.q_wl_b.toRotationMatrix();

  const Vec3 p_c_host(host_uv_.x() / rho, host_uv_.y() / rho, 1.0 / rho);
  const Vec3 p_b_host = r_bc * p_c_host + p_bc;
  const Vec3 p_w = r_i * p_b_host + xi.p_wl_b;
  const Vec3 p_b_tgt = r_j.transpose() * (p_w - xj.p_wl_b);
  const Vec3 p_c_tgt = r_cb * (p_b_tgt - p_bc);
  if (p_c_tgt.z() < 1e-6) return false;  // behind the target camera

  const double iz = 1.0 / p_c_tgt.z();
  Vec2 pred(p_c_tgt.x() * iz, p_c_tgt.y() * iz);
  residual = (pred - target_uv_) * inv_sigma_;

  if (jacobians) {
    jacobians->resize(4);
    Eigen::Matrix<double, 2, 3> proj;
    proj << iz, 0.0, -p_c_tgt.x() * iz * iz, 0.0, iz, -p_c_tgt.y() * iz * iz;
    proj *= inv_sigma_;

    const Mat3 a = r_cb * r_j.transpose();        // d p_c_tgt / d p_w
    const Mat3 ai = a * r_i;                      // d p_c_tgt / d p_b_host

    MatX j_host = MatX::Zero(2, 15);
    j_host.block<2, 3>(0, 0) = proj * a;
    j_host.block<2, 3>(0, 3) = proj * a * (-r_i * skew(p_b_host));

    MatX j_tgt = MatX::Zero(2, 15);
    j_tgt.block<2, 3>(0, 0) = -proj * a;
    j_tgt.block<2, 3>(0, 3) = proj * r_cb * skew(p_b_tgt);

    MatX j_ext = MatX::Zero(2, 6);
    j_ext.block<2, 3>(0, 0) = proj * r_cb * (r_j.transpose() * r_i - Mat3::Identity());
    j_ext.block<2, 3>(0, 3) =
        proj * (ai * (-r_bc * skew(p_c_host)) + skew(p_c_tgt));

    MatX j_rho(2, 1);
    j_rho.col(0) = proj * (ai * r_bc) * (-p_c_host / rho);

    (*jacobians)[0] = std::move(j_host);
    (*jacobians)[1] = std::move(j_tgt);
    (*jacobians)[2] = std::move(j_ext);
    (*jacobians)[3] = std::move(j_rho);
  }
  return true;
}

Mat15 sqrt_information_15(const Mat15& covariance) {
  Mat15 cov = covariance;
  Eigen::LLT<Mat15> llt_cov(cov);
  if (llt_cov.info() != Eigen::Success) {
    std::cerr << "imu factor: non-PSD covariance, regularizing\n";
    cov += 1e-12 * Mat15::Identity();
  }
  const Mat15 info = cov.ldlt().solve(Mat15::Identity());
  Eigen::LLT<Mat15> llt(0.5 * (info + info.transpose()));
  if (llt.info() != Eigen::Success) {
    Mat15 reg = 0.5 * (info + info.transpose()) + 1e-12 * Mat15::Identity();
    return Eigen::LLT<Mat15>(reg).matrixL().transpose();
  }
  return llt.matrixL().transpose();
}

ImuFactor::ImuFactor(int nav_i_id, int nav_j_id, Preintegration pi, GravityVec gravity)
    : blocks_{nav_i_id, nav_j_id}, pi_(std::move(pi)), gravity_(gravity) {
  sqrt_info_ = sqrt_information_15(pi_.covariance);
}

bool ImuFactor::evaluate(const std::vector<const VecX*>& params, VecX& residual,
                         std::vector<MatX>* jacobians) const {
  const NavState xi = vec_to_navstate(*params[0]);
  const NavState xj = vec_to_navstate(*params[1]);
  const CorrectedStates c = bias_corrected(pi_, xi.bias_accel - pi_.bias_accel_ref,
                                           xi.bias_gyro - pi_.bias_gyro_ref);
  const double dt = pi_.duration;
  const Vec3 g = gravity_.vec();
  const Mat3 r_i_t = xi.q_wl_b.toRotationMatrix().transpose();
  const Quat q_rel = xi.q_wl_b.conjugate() * xj.q_wl_b;
  const Quat gamma_inv_qrel = c.gamma.conjugate() * q_rel;

  Vec15 r;
  r.segment<3>(0) =
      r_i_t * (xj.p_wl_b - xi.p_wl_b - xi.v_wl_b * dt + 0.5 * g * dt * dt) - c.alpha;
  r.segment<3>(3) = 2.0 * gamma_inv_qrel.vec();
  r.segment<3>(6) = r_i_t * (xj.v_wl_b - xi.v_wl_b + g * dt) - c.beta;
  r.segment<3>(9) = xj.bias_accel - xi.bias_accel;
  r.segment<3>(12) = xj.bias_gyro - xi.bias_gyro;
  residual = sqrt_info_ * r;

  if (jacobians) {
    jacobians->resize(2);
    const Mat3 j_p_ba = pi_.jacobian.block<3, 3>(0, 9);
    const Mat3 j_p_bg = pi_.jacobian.block<3, 3>(0, 12);
    const Mat3 j_q_bg = pi_.jacobian.block<3, 3>(3, 12);
    const Mat3 j_v_ba = pi_.jacobian.block<3, 3>(6, 9);
    const Mat3 j_v_bg = pi_.jacobian.block<3, 3>(6, 12);

    Mat15 ji = Mat15::Zero();
    ji.block<3, 3>(0, 0) = -r_i_t;
    ji.block<3, 3>(0, 3) =
        skew(r_i_t * (xj.p_wl_b - xi.p_wl_b - xi.v_wl_b * dt + 0.5 * g * dt * dt));
    ji.block<3, 3>(0, 6) = -r_i_t * dt;
    ji.block<3, 3>(0, 9) = -j_p_ba;
    ji.block<3, 3>(0, 12) = -j_p_bg;
    ji.block<3, 3>(3, 3) =
        -(qleft(c.gamma.conjugate()) * qright(q_rel)).block<3, 3>(1, 1);
    ji.block<3, 3>(3, 12) = -qright(gamma_inv_qrel).block<3, 3>(1, 1) * j_q_bg;
    ji.block<3, 3>(6, 3) = skew(r_i_t * (xj.v_wl_b - xi.v_wl_b + g * dt));
    ji.block<3, 3>(6, 6) = -r_i_t;
    ji.block<3, 3>(6, 9) = -j_v_ba;
    ji.block<3, 3>(6, 12) = -j_v_bg;
    ji.block<3, 3>(9, 9) = -Mat3::Identity();
    ji.block<3, 3>(12, 12) = -Mat3::Identity();

    Mat15 jj = Mat15::Zero();
    jj.block<3, 3>(0, 0) = r_i_t;
    jj.block<3, 3>(3, 3) = qleft(gamma_inv_qrel).block<3, 3>(1, 1);
    jj.block<3, 3>(6, 6) = r_i_t;
    jj.block<3, 3>(9, 9) = Mat3::Identity();
    jj.block<3, 3>(12, 12) = Mat3::Identity();

    (*jacobians)[0] = sqrt_info_ * ji;
    (*jacobians)[1] = sqrt_info_ * jj;
  }
  return true;
}

AlignmentPriorFactor::AlignmentPriorFactor(int align_id, const WorldAlignment& prior_value,
                                           const Vec4& sqrt_weight_diag)
    : blocks_{align_id},
      prior_yaw_(prior_value.yaw),
      prior_translation_(prior_value.translation),
      sqrt_weight_(sqrt_weight_diag) {}

bool AlignmentPriorFactor::evaluate(const std::vector<const VecX*>& params, VecX& residual,
                                    std::vector<MatX>* jacobians) const {
  const VecX& a = *params[0];
  residual.resize(4);
  residual(0) = sqrt_weight_(0) * wrap_angle(a(0) - prior_yaw_);
  residual.segment<3>(1) =
      sqrt_weight_.tail<3>().asDiagonal() * (a.segment<3>(1) - prior_translation_);
  if (jacobians) {
    jacobians->resize(1);
    (*jacobians)[0] = MatX(sqrt_weight_.asDiagonal());
  }
  return true;
}

}  // namespace gvio
