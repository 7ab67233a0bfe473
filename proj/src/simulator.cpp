#include "gvio/simulator.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace gvio {

namespace {

constexpr double kOrbitRadius = 2.66e7;                  // m
constexpr double kEarthMu = 3.986004418e14;              // m^3/s^2
const double kOrbitRate = std::sqrt(kEarthMu / (kOrbitRadius * kOrbitRadius * kOrbitRadius));

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

}  // namespace

Extrinsics ScenarioConfig::default_extrinsics() {
  Extrinsics e;
  Mat3 r;
  // camera x right (-body y), y down (-body z), z forward (body x)
  r.col(0) = Vec3(0, -1, 0);
  r.col(1) = Vec3(0, 0, -1);
  r.col(2) = Vec3(1, 0, 0);
  e.rotation_b_from_c = Quat(r);
  e.translation_c_in_b = Vec3(0.12, 0.0, 0.05);
  return e;
}

GroundTruth::GroundTruth(const ScenarioConfig& config) : cfg_(config) {
  if (cfg_.duration <= 0.0) throw std::invalid_argument("scenario: duration must be positive");
  if (cfg_.waypoints.size() < 2)
    throw std::invalid_argument("scenario: need at least 2 waypoints");
  if (cfg_.leg_speeds.size() != cfg_.waypoints.size() - 1)
    throw std::invalid_argument("scenario: need one speed per leg");

  GeodeticCoord origin{deg2rad(cfg_.origin_lat_deg), deg2rad(cfg_.origin_lon_deg),
                       cfg_.origin_height};
  anchor_ = make_enu_anchor(geodetic_to_ecef(origin));

  // Walk the waypoint polyline at the per-leg speeds (holding position during
  // dwell) and use the samples as control points of a uniform quintic
  // B-spline. Repeated controls at stops make the curve exactly constant
  // there; repeated end controls pin the start/end at rest.
  knot_dt_ = 1.0;
  std::vector<Vec3> walk;
  const auto& wp = cfg_.waypoints;
  double leftover = 0.0;
  walk.push_back(wp.front());
  if (auto it = cfg_.stops.find(0); it != cfg_.stops.end()) {
    for (double d = 0.0; d < it->second; d += knot_dt_) walk.push_back(wp.front());
  }
  for (size_t leg = 0; leg + 1 < wp.size(); ++leg) {
    const Vec3 a = wp[leg], b = wp[leg + 1];
    const double len = (b - a).norm();
    const double v = cfg_.leg_speeds[leg];
    if (v <= 0.0) throw std::invalid_argument("scenario: leg speed must be positive");
    double s = leftover;
    while (s < len) {
      walk.push_back(a + (b - a) * (s / len));
      s += v * knot_dt_;
    }
    leftover = s - len;
    walk.push_back(b);
    if (auto it = cfg_.stops.find(int(leg) + 1); it != cfg_.stops.end()) {
      for (double d = 0.0; d < it->second; d += knot_dt_) walk.push_back(b);
      leftover = 0.0;
    }
  }

  controls_.clear();
  for (int i = 0; i < 5; ++i) controls_.push_back(walk.front());
  controls_.insert(controls_.end(), walk.begin(), walk.end());
  for (int i = 0; i < 5; ++i) controls_.push_back(walk.back());
  t_offset_ = 5.0 * knot_dt_;

  const double span = (double(controls_.size()) - 10.0) * knot_dt_;
  duration_ = std::min(cfg_.duration, span);

  // Yaw schedule: leg headings with smoothstep transitions at arrival times.
  double t_arr = 0.0;
  if (auto it = cfg_.stops.find(0); it != cfg_.stops.end()) t_arr += it->second;
  double prev_heading = 0.0;
  bool first = true;
  for (size_t leg = 0; leg + 1 < wp.size(); ++leg) {
    const Vec3 d = wp[leg + 1] - wp[leg];
    const double heading = std::atan2(d.y(), d.x());
    if (first) {
      yaw0_ = heading;
      prev_heading = heading;
      first = false;
    } else {
      const double delta = wrap_angle(heading - prev_heading);
      if (std::abs(delta) > 1e-9) {
        YawSegment seg;
        seg.tau = cfg_.turn_duration;
        seg.t_begin = t_arr - 0.5 * seg.tau;
        seg.delta = delta;
        yaw_segments_.push_back(seg);
      }
      prev_heading = heading;
    }
    t_arr += (wp[leg + 1] - wp[leg]).norm() / cfg_.leg_speeds[leg];
    if (auto it = cfg_.stops.find(int(leg) + 1); it != cfg_.stops.end()) t_arr += it->second;
  }

  // Landmarks scattered along the corridor.
  Rng rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);
  landmarks_.reserve(cfg_.n_landmarks);
  for (int i = 0; i < cfg_.n_landmarks; ++i) {
    const double t = rng.uniform(0.0, duration_);
    const Vec3 p = position(t);
    const double heading = yaw(t);
    const Mat3 r = rot_z(heading);
    const double side = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    const double lateral =
        side * rng.uniform(cfg_.landmark_lateral_min, cfg_.landmark_lateral_max);
    const double forward = rng.uniform(2.0, 45.0);
    const double up = rng.uniform(-2.0, 10.0);
    landmarks_.push_back(p + r * Vec3(forward, lateral, up));
  }

  // Satellite constellation: directions spread over the sky at the origin,
  // each on its own circular orbit through that point.
  const int n_total = cfg_.sats_gps + cfg_.sats_glo;
  for (int k = 0; k < n_total; ++k) {
    Orbit orb;
    const bool gps = k < cfg_.sats_gps;
    orb.constellation = gps ? Constellation::kGps : Constellation::kGlonass;
    orb.sat_id = gps ? (1 + k) : (101 + k - cfg_.sats_gps);
    const int n_in_const = gps ? cfg_.sats_gps : cfg_.sats_glo;
    const int idx = gps ? k : k - cfg_.sats_gps;
    const double az = 2.0 * kPi * (double(idx) + (gps ? 0.0 : 0.5)) / double(n_in_const);
    const double el = deg2rad(20.0 + 55.0 * ((idx * 37) % n_in_const) / double(n_in_const));
    // place the satellite along the (az, el) ray from the origin
    const Vec3 dir_enu(std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el));
    const Vec3 dir_ecef = anchor_.rotation_ecef_from_enu * dir_enu;
    const Vec3 site = anchor_.origin_ecef;
    const double b = 2.0 * site.dot(dir_ecef);
    const double c = site.squaredNorm() - kOrbitRadius * kOrbitRadius;
    const double rho = 0.5 * (-b + std::sqrt(b * b - 4.0 * c));
    orb.p0 = site + rho * dir_ecef;
    Vec3 ref = std::abs(dir_ecef.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    orb.axis = orb.p0.cross(ref).normalized();
    orb.rate = kOrbitRate;
    orb.clock_bias = rng.uniform(-1e-4, 1e-4);
    orb.clock_drift = rng.uniform(-2e-11, 2e-11);
    orb.wavelength = gps ? 0.19029367279836487 : 0.187136583;
    orbits_.push_back(orb);
  }

  // Receiver clock truth: piecewise-linear bias between epochs, drift equal
  // to the slope in force at each epoch.
  n_epochs_ = 0;
  while (epoch_stamp(n_epochs_) <= duration_) ++n_epochs_;
  const double ep_dt = 1.0 / cfg_.gnss_rate;
  for (Constellation c : {Constellation::kGps, Constellation::kGlonass}) {
    std::vector<double> bias(n_epochs_), drift(n_epochs_);
    double b0 = rng.uniform(-1e-5, 1e-5);
    const double d0 = rng.uniform(-5e-9, 5e-9);
    for (int64_t e = 0; e < n_epochs_; ++e) {
      const double slope = d0 + (cfg_.noise_enabled
                                     ? rng.gauss(cfg_.clock_walk / std::sqrt(ep_dt))
                                     : 0.0);
      bias[e] = b0;
      drift[e] = slope;
      b0 += slope * ep_dt;
    }
    clock_bias_truth_[c] = std::move(bias);
    clock_drift_truth_[c] = std::move(drift);
  }
}

Vec3 GroundTruth::spline_eval(double t, int derivative) const {
  // de Boor on a uniform-knot quintic; derivatives via control differences.
  const double u = t + t_offset_;
  const int degree = 5 - derivative;
  std::vector<Vec3> ctrl;
  if (derivative == 0) {
    ctrl = controls_;
  } else {
    ctrl.resize(controls_.size() - 1);
    for (size_t i = 0; i + 1 < controls_.size(); ++i)
      ctrl[i] = (controls_[i + 1] - controls_[i]) / knot_dt_;
    if (derivative == 2) {
      std::vector<Vec3> c2(ctrl.size() - 1);
      for (size_t i = 0; i + 1 < ctrl.size(); ++i) c2[i] = (ctrl[i + 1] - ctrl[i]) / knot_dt_;
      ctrl = std::move(c2);
    }
  }
  // Derived splines live on the knot sub-vector shifted by `derivative`;
  // with uniform knots the shift cancels out of the de Boor alphas.
  int span = int(std::floor(u / knot_dt_));
  const int n = static_cast<int>(ctrl.size());
  span = std::clamp(span, degree + derivative, n - 1 + derivative);

  std::vector<Vec3> d(degree + 1);
  for (int j = 0; j <= degree; ++j) d[j] = ctrl[span - 5 + j];
  for (int r = 1; r <= degree; ++r) {
    for (int j = degree; j >= r; --j) {
      const double t_left = double(span - degree + j) * knot_dt_;
      const double t_right = double(span + 1 + j - r) * knot_dt_;
      const double a = (u - t_left) / (t_right - t_left);
      d[j] = (1.0 - a) * d[j - 1] + a * d[j];
    }
  }
  return d[degree];
}

Vec3 GroundTruth::position(double t) const { return spline_eval(t, 0); }
Vec3 GroundTruth::velocity(double t) const { return spline_eval(t, 1); }
Vec3 GroundTruth::acceleration(double t) const { return spline_eval(t, 2); }

double GroundTruth::yaw(double t) const {
  double y = yaw0_;
  for (const auto& s : yaw_segments_) y += s.delta * smoothstep((t - s.t_begin) / s.tau);
  return y;
}

double GroundTruth::yaw_rate(double t) const {
  double r = 0.0;
  for (const auto& s : yaw_segments_)
    r += s.delta * smoothstep_d1((t - s.t_begin) / s.tau) / s.tau;
  return r;
}

Quat GroundTruth::attitude(double t) const { return Quat(Eigen::AngleAxisd(yaw(t), Vec3::UnitZ())); }

Vec3 GroundTruth::omega_body(double t) const { return Vec3(0.0, 0.0, yaw_rate(t)); }

NavState GroundTruth::nav_state(double t) const {
  NavState x;
  x.p_wl_b = position(t);
  x.v_wl_b = velocity(t);
  x.q_wl_b = attitude(t);
  x.bias_accel = cfg_.bias_accel_true;
  x.bias_gyro = cfg_.bias_gyro_true;
  x.stamp = t;
  return x;
}

Vec3 GroundTruth::antenna_position_enu(double t) const {
  return position(t) + attitude(t).toRotationMatrix() * cfg_.lever_arm;
}

Vec3 GroundTruth::antenna_velocity_enu(double t) const {
  const Mat3 r = attitude(t).toRotationMatrix();
  return velocity(t) + r * omega_body(t).cross(cfg_.lever_arm);
}

Vec3 GroundTruth::antenna_position_ecef(double t) const {
  return enu_to_ecef(anchor_, antenna_position_enu(t));
}

Vec3 GroundTruth::antenna_velocity_ecef(double t) const {
  return anchor_.rotation_ecef_from_enu * antenna_velocity_enu(t);
}

ImuSample GroundTruth::imu_ideal(double t) const {
  ImuSample s;
  s.stamp = t;
  const Mat3 r = attitude(t).toRotationMatrix();
  s.gyro = omega_body(t);
  s.accel = r.transpose() * (acceleration(t) + Vec3(0, 0, cfg_.gravity));
  return s;
}

int GroundTruth::num_satellites() const { return static_cast<int>(orbits_.size()); }

SatelliteState GroundTruth::satellite(int index, double t) const {
  const Orbit& o = orbits_.at(index);
  SatelliteState s;
  s.sat_id = o.sat_id;
  s.constellation = o.constellation;
  const Mat3 r = axis_angle(o.axis, o.rate * t);
  s.position_ecef = r * o.p0;
  s.velocity_ecef = (o.rate * o.axis).cross(s.position_ecef);
  s.clock_bias = o.clock_bias + o.clock_drift * t;
  s.clock_drift = o.clock_drift;
  return s;
}

double GroundTruth::clock_bias(Constellation c, int64_t epoch) const {
  return clock_bias_truth_.at(c).at(epoch);
}

double GroundTruth::clock_drift(Constellation c, int64_t epoch) const {
  return clock_drift_truth_.at(c).at(epoch);
}

std::vector<ImuSample> synth_imu(const GroundTruth& gt, const ScenarioConfig& cfg, Rng& rng) {
  std::vector<ImuSample> out;
  const double dt = 1.0 / cfg.imu_rate;
  const double sg = cfg.noise_enabled ? cfg.imu_noise.gyro_noise * std::sqrt(cfg.imu_rate) : 0.0;
  const double sa = cfg.noise_enabled ? cfg.imu_noise.accel_noise * std::sqrt(cfg.imu_rate) : 0.0;
  const int n = int(std::floor(gt.duration() / dt)) + 1;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    ImuSample s = gt.imu_ideal(t);
    s.gyro += cfg.bias_gyro_true + rng.gauss_vec3(sg);
    s.accel += cfg.bias_accel_true + rng.gauss_vec3(sa);
    out.push_back(s);
  }
  return out;
}

std::vector<FeatureObservation> synth_features(const GroundTruth& gt,
                                               const ScenarioConfig& cfg, double frame_stamp,
                                               Rng& rng) {
  std::vector<FeatureObservation> obs;
  const NavState x = gt.nav_state(frame_stamp);
  const Mat3 r_wb = x.q_wl_b.toRotationMatrix();
  const Mat3 r_bc = cfg.extrinsics_true.rotation_b_from_c.toRotationMatrix();
  const Vec3& p_bc = cfg.extrinsics_true.translation_c_in_b;
  const double s_uv = cfg.noise_enabled ? cfg.pixel_sigma_unit_plane() : 0.0;

  const auto& lms = gt.landmarks();
  for (size_t i = 0; i < lms.size(); ++i) {
    const Vec3 p_b = r_wb.transpose() * (lms[i] - x.p_wl_b);
    const Vec3 p_c = r_bc.transpose() * (p_b - p_bc);
    if (p_c.z() < cfg.min_feature_depth || p_c.z() > cfg.max_feature_depth) continue;
    const Vec2 uv(p_c.x() / p_c.z(), p_c.y() / p_c.z());
    if (uv.norm() > cfg.fov_half_tan) continue;
    FeatureObservation o;
    o.track_id = static_cast<int64_t>(i);
    o.uv = uv + Vec2(rng.gauss(s_uv), rng.gauss(s_uv));
    obs.push_back(o);
  }
  return obs;
}

RawGnssEpoch synth_gnss_epoch(const GroundTruth& gt, const ScenarioConfig& cfg,
                              int64_t epoch_index, Rng& rng,
                              std::vector<InjectedOutlier>* outlier_log) {
  RawGnssEpoch epoch;
  epoch.epoch_index = epoch_index;
  epoch.stamp = gt.epoch_stamp(epoch_index);
  const double t = epoch.stamp;

  double mask_deg = cfg.base_mask_deg;
  for (const auto& w : cfg.mask_windows)
    if (t >= w.t_begin && t <= w.t_end) mask_deg = std::max(mask_deg, w.mask_deg);

  const Vec3 p_recv = gt.antenna_position_ecef(t);
  const Vec3 v_recv = gt.antenna_velocity_ecef(t);
  const Vec3 p_recv_enu = gt.antenna_position_enu(t);

  for (int k = 0; k < gt.num_satellites(); ++k) {
    const SatelliteState sat = gt.satellite(k, t);
    // elevation at the receiver
    const Vec3 los_enu =
        (ecef_to_enu(gt.anchor(), sat.position_ecef) - p_recv_enu).normalized();
    const double elev = std::asin(std::clamp(los_enu.z(), -1.0, 1.0));
    if (elev < deg2rad(mask_deg)) continue;

    const double bias_r = gt.clock_bias(sat.constellation, epoch_index);
    const double drift_r = gt.clock_drift(sat.constellation, epoch_index);

    SatObs obs;
    obs.sat_id = sat.sat_id;
    obs.wavelength = (sat.constellation == Constellation::kGps) ? 0.19029367279836487
                                                                : 0.187136583;
    const double range = (sat.position_ecef - p_recv).norm();
    double rho = range + kSpeedOfLight * (bias_r - sat.clock_bias);
    const Vec3 los = (sat.position_ecef - p_recv) / range;
    double rate = los.dot(sat.velocity_ecef - v_recv) +
                  kSpeedOfLight * (drift_r - sat.clock_drift);
    if (cfg.noise_enabled) {
      rho += rng.gauss(cfg.sigma_pseudorange);
      rate += rng.gauss(cfg.sigma_range_rate);
    }
    if (cfg.outlier_rate > 0.0 && rng.uniform(0.0, 1.0) < cfg.outlier_rate) {
      const double mag = rng.uniform(cfg.outlier_min, cfg.outlier_max) *
                         (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0);
      rho += mag;
      if (outlier_log) outlier_log->push_back({epoch_index, sat.sat_id, mag});
    }
    obs.pseudorange = rho;
    obs.doppler = -rate / obs.wavelength;
    epoch.observations.emplace_back(obs, sat);
  }
  return epoch;
}

void write_dataset(const std::string& dir, const ScenarioConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  GroundTruth gt(cfg);
  Rng rng(cfg.seed);

  // IMU
  {
    std::ofstream out(dir + "/imu.csv");
    out << "# stamp,wx,wy,wz,ax,ay,az\n";
    char buf[256];
    for (const ImuSample& s : synth_imu(gt, cfg, rng)) {
      std::snprintf(buf, sizeof(buf), "%.9f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f\n", s.stamp,
                    s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(),
                    s.accel.z());
      out << buf;
    }
  }

  // Features: generate all frames, then drop single-observation tracks.
  {
    std::vector<std::pair<double, std::vector<FeatureObservation>>> frames;
    std::map<int64_t, int> track_count;
    const double dt = 1.0 / cfg.cam_rate;
    for (double t = 0.0; t <= gt.duration() + 1e-9; t += dt) {
      auto obs = synth_features(gt, cfg, t, rng);
      for (const auto& o : obs) track_count[o.track_id]++;
      frames.emplace_back(t, std::move(obs));
    }
    std::ofstream out(dir + "/features.csv");
    out << "# stamp,track_id,u,v\n";
    char buf[256];
    for (const auto& [t, obs] : frames) {
      for (const auto& o : obs) {
        if (track_count[o.track_id] < 2) continue;
        std::snprintf(buf, sizeof(buf), "%.9f,%ld,%.12f,%.12f\n", t,
                      static_cast<long>(o.track_id), o.uv.x(), o.uv.y());
        out << buf;
      }
    }
  }

  // GNSS + outlier truth log
  {
    std::vector<RawGnssEpoch> epochs;
    std::vector<InjectedOutlier> outliers;
    for (int64_t e = 0; e < gt.num_epochs(); ++e)
      epochs.push_back(synth_gnss_epoch(gt, cfg, e, rng, &outliers));
    write_gnss_file(dir + "/gnss.txt", epochs);
    std::ofstream out(dir + "/outliers.txt");
    out << "# epoch_index sat_id magnitude_m\n";
    for (const auto& o : outliers)
      out << o.epoch_index << " " << o.sat_id << " " << o.magnitude << "\n";
  }

  // Ground-truth trajectory (body pose in the scenario ENU frame)
  {
    std::ofstream out(dir + "/gt.tum");
    char buf[256];
    const double dt = 1.0 / cfg.cam_rate;
    for (double t = 0.0; t <= gt.duration() + 1e-9; t += dt) {
      const Vec3 p = gt.position(t);
      const Quat q = gt.attitude(t);
      std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", t, p.x(),
                    p.y(), p.z(), q.x(), q.y(), q.z(), q.w());
      out << buf;
    }
  }

  // Initial body state (replaces a visual-inertial bootstrap)
  {
    const NavState x0 = gt.nav_state(0.0);
    std::ofstream out(dir + "/initial_state.txt");
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%.9f %.9f %.9f %.9f %.12f %.12f %.12f %.12f %.12f %.12f %.12f %.9f %.9f "
                  "%.9f %.9f %.9f %.9f\n",
                  x0.stamp, x0.p_wl_b.x(), x0.p_wl_b.y(), x0.p_wl_b.z(), x0.v_wl_b.x(),
                  x0.v_wl_b.y(), x0.v_wl_b.z(), x0.q_wl_b.x(), x0.q_wl_b.y(), x0.q_wl_b.z(),
                  x0.q_wl_b.w(), x0.bias_accel.x(), x0.bias_accel.y(), x0.bias_accel.z(),
                  x0.bias_gyro.x(), x0.bias_gyro.y(), x0.bias_gyro.z());
    out << "# stamp px py pz vx vy vz qx qy qz qw bax bay baz bgx bgy bgz\n" << buf;
  }

  // Dataset metadata
  {
    std::ofstream out(dir + "/dataset_info.txt");
    out << "origin_lat_deg=" << cfg.origin_lat_deg << "\n"
        << "origin_lon_deg=" << cfg.origin_lon_deg << "\n"
        << "origin_height=" << cfg.origin_height << "\n"
        << "cam_rate=" << cfg.cam_rate << "\n"
        << "gravity=" << cfg.gravity << "\n"
        << "lever_x=" << cfg.lever_arm.x() << "\n"
        << "lever_y=" << cfg.lever_arm.y() << "\n"
        << "lever_z=" << cfg.lever_arm.z() << "\n"
        << "seed=" << cfg.seed << "\n"
        << "duration=" << gt.duration() << "\n";
    const Quat qe = cfg.extrinsics_true.rotation_b_from_c;
    out << "extr_qx=" << qe.x() << "\nextr_qy=" << qe.y() << "\nextr_qz=" << qe.z()
        << "\nextr_qw=" << qe.w() << "\n"
        << "extr_px=" << cfg.extrinsics_true.translation_c_in_b.x() << "\n"
        << "extr_py=" << cfg.extrinsics_true.translation_c_in_b.y() << "\n"
        << "extr_pz=" << cfg.extrinsics_true.translation_c_in_b.z() << "\n";
  }
}

}  // namespace gvio
