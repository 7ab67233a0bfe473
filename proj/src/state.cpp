#include "gvio/state.hpp"

namespace gvio {

NavState retract(const NavState& x, const Vec15& delta) {
  NavState out = x;
  out.p_wl_b += delta.segment<3>(0);
  out.q_wl_b = (x.q_wl_b * quat_exp(delta.segment<3>(3))).normalized();
  out.v_wl_b += delta.segment<3>(6);
  out.bias_accel += delta.segment<3>(9);
  out.bias_gyro += delta.segment<3>(12);
  return out;
}

Vec15 local_diff(const NavState& x2, const NavState& x1) {
  Vec15 d;
  d.segment<3>(0) = x2.p_wl_b - x1.p_wl_b;
  d.segment<3>(3) = quat_log(x1.q_wl_b.conjugate() * x2.q_wl_b);
  d.segment<3>(6) = x2.v_wl_b - x1.v_wl_b;
  d.segment<3>(9) = x2.bias_accel - x1.bias_accel;
  d.segment<3>(12) = x2.bias_gyro - x1.bias_gyro;
  return d;
}

Mat3 yaw_rotation(const WorldAlignment& a) { return rot_z(a.yaw); }

}  // namespace gvio
