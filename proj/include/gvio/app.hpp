#pragma once

#include "gvio/io.hpp"
#include "gvio/metrics.hpp"

namespace gvio {

enum class RunMode { kFused, kVio, kSpp };

struct RunResult {
  Trajectory estimate;       // ENU (fused/spp) or local frame (vio / not initialized)
  Trajectory estimate_ecef;  // empty unless initialized
  std::shared_ptr<Estimator> estimator;  // null for spp mode
  std::vector<GateReport> gate_reports;
  bool initialized = false;
};

/// Builds the estimator configuration from an optional key=value file with
/// dataset metadata (lever arm, gravity, extrinsics) as the baseline.
EstimatorConfig make_estimator_config(const KeyValues& file_kv, const Dataset& dataset);

/// Local-frame seed for the first frame: the true initial state with yaw and
/// translation removed (optionally perturbed via config keys).
NavState make_local_seed(const NavState& true_initial, const KeyValues& file_kv,
                         uint64_t seed);

RunResult run_pipeline(const Dataset& dataset, const EstimatorConfig& config, RunMode mode,
                       const KeyValues& file_kv = {});
RunResult run_spp_only(const Dataset& dataset, const GateConfig& gate);

void write_run_outputs(const std::string& out_dir, const std::string& dataset_dir,
                       const RunResult& result, const std::string& gating_name);

// CLI entry points; return the process exit code (0 ok, 1 input error,
// 2 runtime failure).
int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int64_t seed_override);
int cmd_run(const std::string& dataset_dir, const std::string& config_path,
            const std::string& out_dir, const std::string& gating, const std::string& mode);
int cmd_evaluate(const std::string& estimate_path, const std::string& gt_path,
                 const std::string& out_csv, const std::string& label);

}  // namespace gvio
