#pragma once

#include "gvio/estimator.hpp"

namespace gvio {

using KeyValues = std::map<std::string, std::string>;

/// Flat key=value file, '#' comments, whitespace trimmed.
KeyValues read_key_values(const std::string& path);
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
int kv_int(const KeyValues& kv, const std::string& key, int fallback);
std::string kv_string(const KeyValues& kv, const std::string& key,
                      const std::string& fallback);

/// Scenario description from a key=value file; unknown keys are rejected so
/// typos surface instead of silently using defaults.
ScenarioConfig scenario_from_kv(const KeyValues& kv);

struct Dataset {
  std::vector<ImuSample> imu;
  std::vector<FrameInput> frames;
  std::vector<RawGnssEpoch> gnss;
  NavState initial_state;
  KeyValues info;
};

Dataset load_dataset(const std::string& dir);

std::vector<ImuSample> read_imu_csv(const std::string& path);
std::vector<FrameInput> read_features_csv(const std::string& path);
NavState read_initial_state(const std::string& path);

}  // namespace gvio
