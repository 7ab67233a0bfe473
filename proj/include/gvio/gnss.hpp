#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gvio/state.hpp"

namespace gvio {

/// Satellite position/velocity/clock at one epoch. Supplied by the epoch
/// table (or the simulator) in place of broadcast-ephemeris decoding.
struct SatelliteState {
  int sat_id = 0;
  Constellation constellation = Constellation::kGps;
  Vec3 position_ecef = Vec3::Zero();   // m
  Vec3 velocity_ecef = Vec3::Zero();   // m/s
  double clock_bias = 0.0;             // s
  double clock_drift = 0.0;            // s/s
};

struct SatObs {
  int sat_id = 0;
  double pseudorange = 0.0;  // m
  double doppler = 0.0;      // Hz
  double wavelength = 0.0;   // m
};

struct RawGnssEpoch {
  int64_t epoch_index = 0;
  double stamp = 0.0;  // m(e)
  std::vector<std::pair<SatObs, SatelliteState>> observations;

  std::vector<Constellation> constellations() const;
};

/// Geometric range plus receiver/satellite clock terms.
double predict_pseudorange(const SatelliteState& sat, const Vec3& receiver_ecef,
                           double clock_bias_r);

/// Line-of-sight projected relative velocity plus clock drift terms; the
/// measurement it predicts is -lambda * doppler.
double predict_range_rate(const SatelliteState& sat, const Vec3& receiver_ecef,
                          const Vec3& receiver_vel_ecef, double clock_drift_r);

struct SppSolution {
  Vec3 position_ecef = Vec3::Zero();
  std::map<Constellation, double> clock_bias;  // s
  std::vector<double> residuals;               // m, one per observation, input order
  double pdop = 0.0;
  double gdop = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct VelocitySolution {
  Vec3 velocity_ecef = Vec3::Zero();
  std::map<Constellation, double> clock_drift;  // s/s
  std::vector<double> residuals;                // m/s, one per observation
};

class InsufficientObservations : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class SolveFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gauss-Newton single point positioning on pseudoranges. Needs at least
/// 3 + |constellations| satellites; throws InsufficientObservations or
/// SolveFailure otherwise.
SppSolution spp_solve(const RawGnssEpoch& epoch, const Vec3& guess_ecef = Vec3::Zero());

/// Linear least squares velocity/clock-drift solution at a known position.
VelocitySolution velocity_solve(const RawGnssEpoch& epoch, const Vec3& position_ecef);

/// Epoch table I/O. One record per line:
///   epoch_stamp sat_id constellation px py pz vx vy vz clk_bias clk_drift
///   pseudorange doppler wavelength
/// whitespace separated, SI units, '#' comments.
std::vector<RawGnssEpoch> read_gnss_file(const std::string& path);
void write_gnss_file(const std::string& path, const std::vector<RawGnssEpoch>& epochs);

}  // namespace gvio
