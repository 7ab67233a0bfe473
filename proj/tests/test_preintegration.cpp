#include <doctest.h>

#include "test_support.hpp"

using namespace gvio;
using gvio::testing::fine_integrate;

namespace {

// Smooth body-rate / specific-force profile for integration oracles.
Vec3 omega_profile(double t) {
  return Vec3(0.25 * std::sin(0.5 * t), 0.18 * std::cos(0.7 * t), 0.3 * std::sin(0.3 * t));
}
Vec3 accel_profile(double t) {
  return Vec3(0.5 * std::sin(0.4 * t), 0.4 * std::cos(0.6 * t), 0.3 * std::sin(0.8 * t) + 0.2);
}

std::vector<ImuSample> sample_profile(double t0, double t1, double rate, const Vec3& ba,
                                      const Vec3& bg) {
  std::vector<ImuSample> out;
  const double dt = 1.0 / rate;
  for (double t = t0; t <= t1 + 1e-12; t += dt) {
    ImuSample s;
    s.stamp = t;
    s.gyro = omega_profile(t) + bg;
    s.accel = accel_profile(t) + ba;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("preintegration");

TEST_CASE("empty interval yields the identity preintegration") {
  const Preintegration pi = integrate({}, Vec3::Zero(), Vec3::Zero());
  CHECK(pi.alpha.norm() == 0.0);
  CHECK(pi.beta.norm() == 0.0);
  CHECK(pi.gamma.isApprox(Quat::Identity()));
  CHECK(pi.covariance.norm() == 0.0);
  CHECK(pi.duration == 0.0);
}

TEST_CASE("non-monotonic stamps are rejected") {
  std::vector<ImuSample> s(3);
  s[0].stamp = 0.0;
  s[1].stamp = 0.01;
  s[2].stamp = 0.005;
  CHECK_THROWS_AS(integrate(s, Vec3::Zero(), Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("constant z rate integrates to the closed-form rotation") {
  const double w = 0.7, t_total = 2.5;
  std::vector<ImuSample> samples;
  for (double t = 0.0; t <= t_total + 1e-12; t += 0.005) {
    ImuSample s;
    s.stamp = t;
    s.gyro = Vec3(0, 0, w);
    s.accel = Vec3::Zero();
    samples.push_back(s);
  }
  const Preintegration pi = integrate(samples, Vec3::Zero(), Vec3::Zero());
  const Quat expected = quat_exp(Vec3(0, 0, w * t_total));
  CHECK(quat_log(pi.gamma.conjugate() * expected).norm() < 1e-9);
}

TEST_CASE("1 kHz integration matches a 100 kHz fine-step oracle") {
  const auto samples = sample_profile(0.0, 1.0, 1000.0, Vec3::Zero(), Vec3::Zero());
  const Preintegration pi = integrate(samples, Vec3::Zero(), Vec3::Zero());
  const auto fine = fine_integrate(omega_profile, accel_profile, 0.0, 1.0, 1e-5);
  CHECK((pi.alpha - fine.alpha).norm() < 1e-6);
  CHECK((pi.beta - fine.beta).norm() < 1e-6);
  CHECK(quat_log(pi.gamma.conjugate() * fine.gamma).norm() < 1e-7);
}

TEST_CASE("bias correction") {
  const Vec3 ba0(0.01, -0.02, 0.015), bg0(0.002, 0.001, -0.003);
  const auto samples = sample_profile(0.0, 1.0, 500.0, ba0, bg0);
  const Preintegration pi = integrate(samples, ba0, bg0);

  SUBCASE("zero deltas leave the states unchanged") {
    const CorrectedStates c = bias_corrected(pi, Vec3::Zero(), Vec3::Zero());
    CHECK((c.alpha - pi.alpha).norm() == 0.0);
    CHECK((c.beta - pi.beta).norm() == 0.0);
    CHECK(c.gamma.isApprox(pi.gamma));
  }

  SUBCASE("small correction matches re-integration") {
    const Vec3 dba(1e-3, -1e-3, 5e-4), dbg(-1e-3, 5e-4, 1e-3);
    const CorrectedStates c = bias_corrected(pi, dba, dbg);
    const Preintegration re = integrate(samples, ba0 + dba, bg0 + dbg);
    CHECK((c.alpha - re.alpha).norm() < 1e-6);
    CHECK((c.beta - re.beta).norm() < 1e-6);
    CHECK(quat_log(c.gamma.conjugate() * re.gamma).norm() < 1e-6);
  }

  SUBCASE("correction error grows quadratically in the bias step") {
    std::vector<double> log_d, log_e;
    for (double d = 1e-4; d < 0.2; d *= 10.0) {
      const Vec3 dba = d * Vec3(1, -0.5, 0.7).normalized();
      const Vec3 dbg = d * Vec3(-0.3, 1, 0.4).normalized();
      const CorrectedStates c = bias_corrected(pi, dba, dbg);
      const Preintegration re = integrate(samples, ba0 + dba, bg0 + dbg);
      const double err = (c.alpha - re.alpha).norm() + (c.beta - re.beta).norm() +
                         quat_log(c.gamma.conjugate() * re.gamma).norm();
      log_d.push_back(std::log(d));
      log_e.push_back(std::log(err));
    }
    // least-squares slope of log(err) vs log(d)
    const size_t n = log_d.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
      sx += log_d[i];
      sy += log_e[i];
      sxx += log_d[i] * log_d[i];
      sxy += log_d[i] * log_e[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(2.0).epsilon(0.05));
  }
}

TEST_CASE("covariance stays symmetric positive semidefinite") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ImuSample> samples;
    for (double t = 0.0; t <= 2.0; t += 0.005) {
      ImuSample s;
      s.stamp = t;
      s.gyro = rng.gauss_vec3(0.3);
      s.accel = rng.gauss_vec3(1.0) + Vec3(0, 0, 9.81);
      samples.push_back(s);
    }
    const Preintegration pi = integrate(samples, Vec3::Zero(), Vec3::Zero());
    CHECK((pi.covariance - pi.covariance.transpose()).norm() < 1e-15);
    Eigen::SelfAdjointEigenSolver<Mat15> eig(pi.covariance);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("preintegration is independent of the absolute state") {
  const auto samples = sample_profile(0.0, 0.5, 400.0, Vec3::Zero(), Vec3::Zero());
  const Preintegration a = integrate(samples, Vec3::Zero(), Vec3::Zero());
  const Preintegration b = integrate(samples, Vec3::Zero(), Vec3::Zero());
  CHECK((a.alpha - b.alpha).norm() == 0.0);
  CHECK((a.beta - b.beta).norm() == 0.0);
  CHECK(a.gamma.coeffs() == b.gamma.coeffs());
}

TEST_CASE("extrapolation degenerate cases") {
  Rng rng(12);
  NavState x = gvio::testing::random_navstate(rng);
  GravityVec g{9.81};

  SUBCASE("zero lever, zero duration returns the state") {
    const Preintegration pi = integrate({}, x.bias_accel, x.bias_gyro);
    const AntennaState a = extrapolate_to_epoch(x, pi, LeverArm{}, Vec3::Zero(), g);
    CHECK((a.p_wl_g - x.p_wl_b).norm() == 0.0);
    CHECK((a.v_wl_g - x.v_wl_b).norm() == 0.0);
  }

  SUBCASE("static state under gravity-compensating input stays put") {
    NavState s;
    s.v_wl_b = Vec3::Zero();
    std::vector<ImuSample> samples;
    for (double t = 0.0; t <= 0.1 + 1e-12; t += 0.005) {
      ImuSample m;
      m.stamp = t;
      m.gyro = Vec3::Zero();
      m.accel = Vec3(0, 0, 9.81);
      samples.push_back(m);
    }
    const Preintegration pi = integrate(samples, Vec3::Zero(), Vec3::Zero());
    const AntennaState a = extrapolate_to_epoch(s, pi, LeverArm{}, Vec3::Zero(), g);
    CHECK((a.p_wl_g - s.p_wl_b).norm() < 1e-9);
    CHECK(a.v_wl_g.norm() < 1e-9);
  }
}

TEST_CASE("spinning body lever-arm velocity") {
  // omega = 1 rad/s about z, lever (1,0,0), body at rest: the antenna moves
  // tangentially at 1 m/s (checked against the rigid-body cross product and
  // a finite difference of the simulated antenna position).
  NavState x;  // identity pose, zero velocity
  GravityVec g{0.0};
  LeverArm lever{Vec3(1, 0, 0)};
  const Vec3 omega(0, 0, 1);

  std::vector<ImuSample> samples;
  const double t_end = 0.02;
  for (double t = 0.0; t <= t_end + 1e-12; t += 0.001) {
    ImuSample m;
    m.stamp = t;
    m.gyro = omega;
    m.accel = Vec3::Zero();  // IMU at the rotation center
    samples.push_back(m);
  }
  const Preintegration pi = integrate(samples, Vec3::Zero(), Vec3::Zero());
  const AntennaState a = extrapolate_to_epoch(x, pi, lever, omega, g);

  CHECK(a.v_wl_g.norm() == doctest::Approx(1.0).epsilon(1e-6));
  // tangential to the lever at t_end (the lever has rotated by t_end rad)
  CHECK(std::abs(a.v_wl_g.dot(rot_z(t_end) * Vec3(1, 0, 0))) < 1e-6);

  // cross-product oracle
  const Vec3 expected = omega.cross(lever.translation_g_in_b);
  CHECK((rot_z(t_end).transpose() * a.v_wl_g - expected).norm() < 0.05);

  // finite-difference oracle on the true antenna track p(t) = Rz(t) * lever
  const double h = 1e-4;
  const Vec3 fd = (rot_z(t_end + h) * lever.translation_g_in_b -
                   rot_z(t_end - h) * lever.translation_g_in_b) /
                  (2.0 * h);
  CHECK((a.v_wl_g - fd).norm() < 1e-6);
}

TEST_CASE("concatenated extrapolation matches stepwise state propagation") {
  // integrate the same noiseless samples directly through the nav state and
  // compare with the preintegration-based extrapolation
  const Vec3 ba(0.01, 0.0, -0.01), bg(0.001, -0.002, 0.0005);
  GravityVec g{9.81};
  const auto samples = sample_profile(0.0, 0.8, 1000.0, ba, bg);

  Rng rng(21);
  NavState x0 = gvio::testing::random_navstate(rng);
  x0.bias_accel = ba;
  x0.bias_gyro = bg;

  // reference: stepwise midpoint propagation of the full state
  Vec3 p = x0.p_wl_b, v = x0.v_wl_b;
  Quat q = x0.q_wl_b;
  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].stamp - samples[i].stamp;
    const Vec3 w = 0.5 * (samples[i].gyro + samples[i + 1].gyro) - bg;
    const Quat q1 = (q * quat_exp(w * dt)).normalized();
    const Vec3 a0 = q.toRotationMatrix() * (samples[i].accel - ba) - g.vec();
    const Vec3 a1 = q1.toRotationMatrix() * (samples[i + 1].accel - ba) - g.vec();
    const Vec3 am = 0.5 * (a0 + a1);
    p += v * dt + 0.5 * am * dt * dt;
    v += am * dt;
    q = q1;
  }

  const Preintegration pi = integrate(samples, ba, bg);
  const AntennaState a = extrapolate_to_epoch(x0, pi, LeverArm{}, Vec3::Zero(), g);
  CHECK((a.p_wl_g - p).norm() < 1e-8);
  CHECK((a.v_wl_g - v).norm() < 1e-8);
}

TEST_SUITE_END();
