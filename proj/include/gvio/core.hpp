#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

namespace gvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;

/// Receiver/satellite signal propagation constant, m/s.
inline constexpr double kSpeedOfLight = 299792458.0;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

/// Quaternion exponential of a rotation vector (angle-axis as a 3-vector).
inline Quat quat_exp(const Vec3& theta) {
  const double angle = theta.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z());
    q.normalize();
    return q;
  }
  const Vec3 axis = theta / angle;
  const double half = 0.5 * angle;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

/// Rotation-vector logarithm of a unit quaternion. For a rotation by exactly
/// pi the sign of the axis follows the stored vector part (positive branch
/// after canonicalizing w >= 0).
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(n, q.w());
  return (angle / n) * v;
}

/// Left quaternion product matrix on [w, x, y, z] coefficient order:
/// quat_to_wxyz(q ⊗ p) = qleft(q) * quat_to_wxyz(p).
inline Eigen::Matrix4d qleft(const Quat& q) {
  Eigen::Matrix4d m;
  m(0, 0) = q.w();
  m.block<1, 3>(0, 1) = -q.vec().transpose();
  m.block<3, 1>(1, 0) = q.vec();
  m.block<3, 3>(1, 1) = q.w() * Mat3::Identity() + skew(q.vec());
  return m;
}

/// Right counterpart: quat_to_wxyz(q ⊗ p) = qright(p) * quat_to_wxyz(q).
inline Eigen::Matrix4d qright(const Quat& p) {
  Eigen::Matrix4d m;
  m(0, 0) = p.w();
  m.block<1, 3>(0, 1) = -p.vec().transpose();
  m.block<3, 1>(1, 0) = p.vec();
  m.block<3, 3>(1, 1) = p.w() * Mat3::Identity() - skew(p.vec());
  return m;
}

/// Rotation about +Z by the given angle.
inline Mat3 rot_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

/// Yaw (rotation about Z in ZYX order) of a rotation matrix.
inline double yaw_of(const Mat3& r) { return std::atan2(r(1, 0), r(0, 0)); }

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// C2 smoothstep: 0 at u<=0, 1 at u>=1, zero first and second derivative at
/// both ends.
inline double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (u * (u * 6.0 - 15.0) + 10.0);
}

inline double smoothstep_d1(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return u * u * (u * (u * 30.0 - 60.0) + 30.0);
}

inline double smoothstep_d2(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return u * (u * (u * 120.0 - 180.0) + 60.0);
}

/// Deterministic RNG used everywhere randomness is needed; a single seeded
/// instance per run keeps outputs reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double gauss(double sigma) {
    return sigma == 0.0 ? 0.0 : std::normal_distribution<double>(0.0, sigma)(gen_);
  }
  Vec3 gauss_vec3(double sigma) { return Vec3(gauss(sigma), gauss(sigma), gauss(sigma)); }
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(gen_);
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gvio
