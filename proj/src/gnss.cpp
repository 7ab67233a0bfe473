#include "gvio/gnss.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace gvio {

std::vector<Constellation> RawGnssEpoch::constellations() const {
  std::set<int> seen;
  for (const auto& [obs, sat] : observations) seen.insert(static_cast<int>(sat.constellation));
  std::vector<Constellation> out;
  for (int c : seen) out.push_back(static_cast<Constellation>(c));
  return out;
}

double predict_pseudorange(const SatelliteState& sat, const Vec3& receiver_ecef,
                           double clock_bias_r) {
  const double range = (sat.position_ecef - receiver_ecef).norm();
  if (range < 1.0) throw std::domain_error("predict_pseudorange: coincident points");
  return range + kSpeedOfLight * clock_bias_r - kSpeedOfLight * sat.clock_bias;
}

double predict_range_rate(const SatelliteState& sat, const Vec3& receiver_ecef,
                          const Vec3& receiver_vel_ecef, double clock_drift_r) {
  const Vec3 d = sat.position_ecef - receiver_ecef;
  const double range = d.norm();
  if (range < 1.0) throw std::domain_error("predict_range_rate: coincident points");
  const Vec3 los = d / range;
  return los.dot(sat.velocity_ecef - receiver_vel_ecef) + kSpeedOfLight * clock_drift_r -
         kSpeedOfLight * sat.clock_drift;
}

namespace {

std::map<Constellation, int> clock_slots(const RawGnssEpoch& epoch) {
  std::map<Constellation, int> slots;
  for (Constellation c : epoch.constellations()) {
    const int idx = static_cast<int>(slots.size());
    slots.emplace(c, idx);
  }
  return slots;
}

}  // namespace

SppSolution spp_solve(const RawGnssEpoch& epoch, const Vec3& guess_ecef) {
  const auto slots = clock_slots(epoch);
  const int n_const = static_cast<int>(slots.size());
  const int n_obs = static_cast<int>(epoch.observations.size());
  const int n_par = 3 + n_const;
  if (n_obs < n_par)
    throw InsufficientObservations("spp_solve: " + std::to_string(n_obs) +
                                   " observations for " + std::to_string(n_par) +
                                   " parameters");

  Vec3 pos = guess_ecef;
  VecX clk_m = VecX::Zero(n_const);  // receiver clock biases in meters

  SppSolution sol;
  MatX j(n_obs, n_par);
  VecX r(n_obs);
  for (int it = 0; it < 10; ++it) {
    sol.iterations = it + 1;
    for (int i = 0; i < n_obs; ++i) {
      const auto& [obs, sat] = epoch.observations[i];
      const Vec3 d = sat.position_ecef - pos;
      const double range = d.norm();
      const Vec3 los = d / range;
      const int slot = slots.at(sat.constellation);
      r(i) = range + clk_m(slot) - kSpeedOfLight * sat.clock_bias - obs.pseudorange;
      j.row(i).setZero();
      j.row(i).head<3>() = -los.transpose();
      j(i, 3 + slot) = 1.0;
    }
    const VecX delta = (j.transpose() * j).ldlt().solve(-j.transpose() * r);
    pos += delta.head<3>();
    clk_m += delta.tail(n_const);
    if (delta.norm() < 1e-4) {
      sol.converged = true;
      break;
    }
  }
  if (!sol.converged) throw SolveFailure("spp_solve: no convergence in 10 iterations");

  sol.position_ecef = pos;
  for (const auto& [c, slot] : slots) sol.clock_bias[c] = clk_m(slot) / kSpeedOfLight;
  sol.residuals.resize(n_obs);
  for (int i = 0; i < n_obs; ++i) {
    const auto& [obs, sat] = epoch.observations[i];
    sol.residuals[i] =
        predict_pseudorange(sat, pos, sol.clock_bias.at(sat.constellation)) - obs.pseudorange;
  }
  const MatX q = (j.transpose() * j).inverse();
  sol.pdop = std::sqrt(q.topLeftCorner(3, 3).trace());
  sol.gdop = std::sqrt(q.trace());
  return sol;
}

VelocitySolution velocity_solve(const RawGnssEpoch& epoch, const Vec3& position_ecef) {
  const auto slots = clock_slots(epoch);
  const int n_const = static_cast<int>(slots.size());
  const int n_obs = static_cast<int>(epoch.observations.size());
  const int n_par = 3 + n_const;
  if (n_obs < n_par)
    throw InsufficientObservations("velocity_solve: " + std::to_string(n_obs) +
                                   " observations for " + std::to_string(n_par) +
                                   " parameters");

  // The model is linear in velocity and drift at fixed position.
  MatX j(n_obs, n_par);
  VecX y(n_obs);
  for (int i = 0; i < n_obs; ++i) {
    const auto& [obs, sat] = epoch.observations[i];
    const Vec3 d = sat.position_ecef - position_ecef;
    const Vec3 los = d / d.norm();
    const int slot = slots.at(sat.constellation);
    j.row(i).setZero();
    j.row(i).head<3>() = -los.transpose();
    j(i, 3 + slot) = 1.0;
    // measurement: -lambda D = los . (v_s - v_r) + c ddt_r - c ddt_s
    y(i) = -obs.wavelength * obs.doppler - los.dot(sat.velocity_ecef) +
           kSpeedOfLight * sat.clock_drift;
  }
  const VecX x = (j.transpose() * j).ldlt().solve(j.transpose() * y);

  VelocitySolution sol;
  sol.velocity_ecef = x.head<3>();
  for (const auto& [c, slot] : slots) sol.clock_drift[c] = x(3 + slot) / kSpeedOfLight;
  sol.residuals.resize(n_obs);
  for (int i = 0; i < n_obs; ++i) {
    const auto& [obs, sat] = epoch.observations[i];
    sol.residuals[i] = predict_range_rate(sat, position_ecef, sol.velocity_ecef,
                                          sol.clock_drift.at(sat.constellation)) -
                       (-obs.wavelength * obs.doppler);
  }
  return sol;
}

std::vector<RawGnssEpoch> read_gnss_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open GNSS file: " + path);
  std::vector<RawGnssEpoch> epochs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    double stamp;
    if (!(ss >> stamp)) continue;  // blank/comment line
    SatObs obs;
    SatelliteState sat;
    int constellation;
    if (!(ss >> sat.sat_id >> constellation >> sat.position_ecef.x() >>
          sat.position_ecef.y() >> sat.position_ecef.z() >> sat.velocity_ecef.x() >>
          sat.velocity_ecef.y() >> sat.velocity_ecef.z() >> sat.clock_bias >>
          sat.clock_drift >> obs.pseudorange >> obs.doppler >> obs.wavelength)) {
      throw std::runtime_error("bad GNSS record at " + path + ":" + std::to_string(line_no));
    }
    sat.constellation = static_cast<Constellation>(constellation);
    obs.sat_id = sat.sat_id;
    if (epochs.empty() || epochs.back().stamp < stamp - 1e-9) {
      RawGnssEpoch e;
      e.epoch_index = static_cast<int64_t>(epochs.size());
      e.stamp = stamp;
      epochs.push_back(e);
    } else if (stamp < epochs.back().stamp - 1e-9) {
      throw std::runtime_error("GNSS epochs out of order at " + path + ":" +
                               std::to_string(line_no));
    }
    epochs.back().observations.emplace_back(obs, sat);
  }
  return epochs;
}

void write_gnss_file(const std::string& path, const std::vector<RawGnssEpoch>& epochs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write GNSS file: " + path);
  out << "# epoch_stamp sat_id constellation px py pz vx vy vz clk_bias clk_drift "
         "pseudorange doppler wavelength\n";
  char buf[512];
  for (const auto& e : epochs) {
    for (const auto& [obs, sat] : e.observations) {
      std::snprintf(buf, sizeof(buf),
                    "%.9f %d %d %.6f %.6f %.6f %.9f %.9f %.9f %.15e %.15e %.6f %.9f %.6f\n",
                    e.stamp, sat.sat_id, static_cast<int>(sat.constellation),
                    sat.position_ecef.x(), sat.position_ecef.y(), sat.position_ecef.z(),
                    sat.velocity_ecef.x(), sat.velocity_ecef.y(), sat.velocity_ecef.z(),
                    sat.clock_bias, sat.clock_drift, obs.pseudorange, obs.doppler,
                    obs.wavelength);
      out << buf;
    }
  }
}

}  // namespace gvio
