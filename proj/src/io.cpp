#include "gvio/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gvio {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad config line (expected key=value) at " + path + ":" +
                               std::to_string(line_no));
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

int kv_int(const KeyValues& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

std::string kv_string(const KeyValues& kv, const std::string& key,
                      const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

ScenarioConfig scenario_from_kv(const KeyValues& kv) {
  ScenarioConfig c;
  static const std::set<std::string> known = {
      "origin_lat_deg", "origin_lon_deg", "origin_height", "waypoints", "leg_speeds",
      "stops", "turn_duration", "imu_rate", "cam_rate", "gnss_rate", "gnss_offset",
      "n_landmarks", "sats_gps", "sats_glo", "base_mask_deg", "mask_windows",
      "sigma_pseudorange", "sigma_range_rate", "sigma_pixel", "noise_enabled",
      "outlier_rate", "outlier_min", "outlier_max", "duration", "seed", "gravity",
      "lever_x", "lever_y", "lever_z", "clock_walk"};
  for (const auto& [k, v] : kv)
    if (!known.count(k)) throw std::runtime_error("unknown scenario key: " + k);

  c.origin_lat_deg = kv_double(kv, "origin_lat_deg", c.origin_lat_deg);
  c.origin_lon_deg = kv_double(kv, "origin_lon_deg", c.origin_lon_deg);
  c.origin_height = kv_double(kv, "origin_height", c.origin_height);
  if (kv.count("waypoints")) {
    c.waypoints.clear();
    for (const auto& w : split(kv.at("waypoints"), ';')) {
      const auto xyz = split(w, ',');
      if (xyz.size() != 3) throw std::runtime_error("bad waypoint: " + w);
      c.waypoints.emplace_back(std::stod(xyz[0]), std::stod(xyz[1]), std::stod(xyz[2]));
    }
  }
  if (kv.count("leg_speeds")) {
    c.leg_speeds.clear();
    for (const auto& s : split(kv.at("leg_speeds"), ';')) c.leg_speeds.push_back(std::stod(s));
  }
  if (kv.count("stops")) {
    c.stops.clear();
    for (const auto& s : split(kv.at("stops"), ';')) {
      if (s.empty()) continue;
      const auto parts = split(s, ':');
      if (parts.size() != 2) throw std::runtime_error("bad stop spec: " + s);
      c.stops[std::stoi(parts[0])] = std::stod(parts[1]);
    }
  }
  if (kv.count("mask_windows")) {
    c.mask_windows.clear();
    for (const auto& s : split(kv.at("mask_windows"), ';')) {
      if (s.empty()) continue;
      const auto parts = split(s, ':');
      if (parts.size() != 3) throw std::runtime_error("bad mask window: " + s);
      c.mask_windows.push_back(
          {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])});
    }
  }
  c.turn_duration = kv_double(kv, "turn_duration", c.turn_duration);
  c.imu_rate = kv_double(kv, "imu_rate", c.imu_rate);
  c.cam_rate = kv_double(kv, "cam_rate", c.cam_rate);
  c.gnss_rate = kv_double(kv, "gnss_rate", c.gnss_rate);
  c.gnss_offset = kv_double(kv, "gnss_offset", c.gnss_offset);
  c.n_landmarks = kv_int(kv, "n_landmarks", c.n_landmarks);
  c.sats_gps = kv_int(kv, "sats_gps", c.sats_gps);
  c.sats_glo = kv_int(kv, "sats_glo", c.sats_glo);
  c.base_mask_deg = kv_double(kv, "base_mask_deg", c.base_mask_deg);
  c.sigma_pseudorange = kv_double(kv, "sigma_pseudorange", c.sigma_pseudorange);
  c.sigma_range_rate = kv_double(kv, "sigma_range_rate", c.sigma_range_rate);
  c.sigma_pixel = kv_double(kv, "sigma_pixel", c.sigma_pixel);
  c.noise_enabled = kv_int(kv, "noise_enabled", c.noise_enabled ? 1 : 0) != 0;
  c.outlier_rate = kv_double(kv, "outlier_rate", c.outlier_rate);
  c.outlier_min = kv_double(kv, "outlier_min", c.outlier_min);
  c.outlier_max = kv_double(kv, "outlier_max", c.outlier_max);
  c.duration = kv_double(kv, "duration", c.duration);
  c.seed = static_cast<uint64_t>(kv_double(kv, "seed", double(c.seed)));
  c.gravity = kv_double(kv, "gravity", c.gravity);
  c.lever_arm.x() = kv_double(kv, "lever_x", c.lever_arm.x());
  c.lever_arm.y() = kv_double(kv, "lever_y", c.lever_arm.y());
  c.lever_arm.z() = kv_double(kv, "lever_z", c.lever_arm.z());
  c.clock_walk = kv_double(kv, "clock_walk", c.clock_walk);
  return c;
}

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open IMU file: " + path);
  std::vector<ImuSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (f.size() != 7)
      throw std::runtime_error("bad IMU record at " + path + ":" + std::to_string(line_no));
    ImuSample s;
    s.stamp = std::stod(f[0]);
    s.gyro = Vec3(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
    s.accel = Vec3(std::stod(f[4]), std::stod(f[5]), std::stod(f[6]));
    out.push_back(s);
  }
  return out;
}

std::vector<FrameInput> read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  std::vector<FrameInput> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (f.size() != 4)
      throw std::runtime_error("bad feature record at " + path + ":" +
                               std::to_string(line_no));
    const double stamp = std::stod(f[0]);
    if (out.empty() || stamp > out.back().stamp + 1e-9) {
      FrameInput fi;
      fi.stamp = stamp;
      out.push_back(fi);
    }
    FeatureObservation o;
    o.track_id = std::stoll(f[1]);
    o.uv = Vec2(std::stod(f[2]), std::stod(f[3]));
    out.back().features.push_back(o);
  }
  return out;
}

NavState read_initial_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open initial state: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    NavState x;
    double qx, qy, qz, qw;
    if (!(ss >> x.stamp >> x.p_wl_b.x() >> x.p_wl_b.y() >> x.p_wl_b.z() >> x.v_wl_b.x() >>
          x.v_wl_b.y() >> x.v_wl_b.z() >> qx >> qy >> qz >> qw >> x.bias_accel.x() >>
          x.bias_accel.y() >> x.bias_accel.z() >> x.bias_gyro.x() >> x.bias_gyro.y() >>
          x.bias_gyro.z()))
      throw std::runtime_error("bad initial state record in " + path);
    x.q_wl_b = Quat(qw, qx, qy, qz).normalized();
    return x;
  }
  throw std::runtime_error("no initial state record in " + path);
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.imu = read_imu_csv(dir + "/imu.csv");
  ds.frames = read_features_csv(dir + "/features.csv");
  ds.gnss = read_gnss_file(dir + "/gnss.txt");
  ds.initial_state = read_initial_state(dir + "/initial_state.txt");
  ds.info = read_key_values(dir + "/dataset_info.txt");
  return ds;
}

}  // namespace gvio
