#include "gvio/app.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace gvio {

namespace fs = std::filesystem;

EstimatorConfig make_estimator_config(const KeyValues& kv, const Dataset& ds) {
  EstimatorConfig c;
  c.gravity = kv_double(ds.info, "gravity", c.gravity);
  c.lever_arm.x() = kv_double(ds.info, "lever_x", 0.0);
  c.lever_arm.y() = kv_double(ds.info, "lever_y", 0.0);
  c.lever_arm.z() = kv_double(ds.info, "lever_z", 0.0);
  if (ds.info.count("extr_qw")) {
    c.extrinsics_init.rotation_b_from_c =
        Quat(kv_double(ds.info, "extr_qw", 1), kv_double(ds.info, "extr_qx", 0),
             kv_double(ds.info, "extr_qy", 0), kv_double(ds.info, "extr_qz", 0))
            .normalized();
    c.extrinsics_init.translation_c_in_b =
        Vec3(kv_double(ds.info, "extr_px", 0), kv_double(ds.info, "extr_py", 0),
             kv_double(ds.info, "extr_pz", 0));
  }

  c.window_size = kv_int(kv, "window_size", c.window_size);
  c.w_pseudorange = kv_double(kv, "w_pseudorange", c.w_pseudorange);
  c.w_doppler = kv_double(kv, "w_doppler", c.w_doppler);
  c.gate.threshold_pseudorange =
      kv_double(kv, "gate_pseudorange", c.gate.threshold_pseudorange);
  c.gate.threshold_doppler = kv_double(kv, "gate_doppler", c.gate.threshold_doppler);
  c.gate.fallback_window = kv_double(kv, "gate_fallback_window", c.gate.fallback_window);
  c.prior_epoch_limit = kv_int(kv, "prior_epoch_limit", c.prior_epoch_limit);
  c.low_speed_threshold = kv_double(kv, "low_speed_threshold", c.low_speed_threshold);
  c.keyframe_parallax = kv_double(kv, "keyframe_parallax", c.keyframe_parallax);
  c.keyframe_min_tracks = kv_int(kv, "keyframe_min_tracks", c.keyframe_min_tracks);
  c.turn_threshold_deg = kv_double(kv, "turn_threshold_deg", c.turn_threshold_deg);
  c.align_prior_yaw_sigma_deg =
      kv_double(kv, "align_prior_yaw_sigma_deg", c.align_prior_yaw_sigma_deg);
  c.align_prior_trans_sigma =
      kv_double(kv, "align_prior_trans_sigma", c.align_prior_trans_sigma);
  c.reproj_sigma_px = kv_double(kv, "reproj_sigma_px", c.reproj_sigma_px);
  c.focal_px = kv_double(kv, "focal_px", c.focal_px);
  c.huber_delta = kv_double(kv, "huber_delta", c.huber_delta);
  c.imu_noise.gyro_noise = kv_double(kv, "imu_gyro_noise", c.imu_noise.gyro_noise);
  c.imu_noise.accel_noise = kv_double(kv, "imu_accel_noise", c.imu_noise.accel_noise);
  c.imu_noise.gyro_walk = kv_double(kv, "imu_gyro_walk", c.imu_noise.gyro_walk);
  c.imu_noise.accel_walk = kv_double(kv, "imu_accel_walk", c.imu_noise.accel_walk);
  c.init_min_pairs = kv_int(kv, "init_min_pairs", c.init_min_pairs);
  c.init_min_span = kv_double(kv, "init_min_span", c.init_min_span);
  c.solver_iterations = kv_int(kv, "solver_iterations", c.solver_iterations);
  c.gate_clone_iterations = kv_int(kv, "gate_clone_iterations", c.gate_clone_iterations);
  const std::string gating = kv_string(kv, "gating", "mixed");
  c.gating = (gating == "gnss") ? GatingMethod::kGnssOnly : GatingMethod::kMixed;
  return c;
}

NavState make_local_seed(const NavState& truth, const KeyValues& kv, uint64_t seed) {
  const double yaw0 = yaw_of(truth.q_wl_b.toRotationMatrix());
  const Mat3 unyaw = rot_z(-yaw0);
  NavState x;
  x.p_wl_b = Vec3::Zero();
  x.v_wl_b = unyaw * truth.v_wl_b;
  x.q_wl_b = (Quat(unyaw) * truth.q_wl_b).normalized();
  x.bias_accel = truth.bias_accel;
  x.bias_gyro = truth.bias_gyro;
  x.stamp = truth.stamp;

  Rng rng(seed ^ 0xC0FFEEull);
  const double sp = kv_double(kv, "init_perturb_pos", 0.0);
  const double sv = kv_double(kv, "init_perturb_vel", 0.0);
  const double sba = kv_double(kv, "init_perturb_bias_accel", 0.0);
  const double sbg = kv_double(kv, "init_perturb_bias_gyro", 0.0);
  x.p_wl_b += rng.gauss_vec3(sp);
  x.v_wl_b += rng.gauss_vec3(sv);
  x.bias_accel += rng.gauss_vec3(sba);
  x.bias_gyro += rng.gauss_vec3(sbg);
  return x;
}

RunResult run_pipeline(const Dataset& ds, const EstimatorConfig& config, RunMode mode,
                       const KeyValues& kv) {
  if (mode == RunMode::kSpp) return run_spp_only(ds, config.gate);

  auto est = std::make_shared<Estimator>(config);
  const uint64_t seed = static_cast<uint64_t>(kv_double(ds.info, "seed", 0));
  est->set_initial_state(make_local_seed(ds.initial_state, kv, seed));

  const double cam_rate = kv_double(ds.info, "cam_rate", 10.0);
  const double duration = kv_double(ds.info, "duration", 0.0);
  const double dt = 1.0 / cam_rate;

  // frame schedule from the camera rate; features attached by stamp
  std::map<int64_t, const FrameInput*> features_by_tick;
  for (const auto& f : ds.frames)
    features_by_tick[llround(f.stamp * cam_rate)] = &f;

  size_t imu_lo = 0;
  size_t gnss_i = 0;
  double prev_stamp = 0.0;
  bool first = true;
  for (double t = 0.0; t <= duration + 1e-9; t += dt) {
    FrameInput frame;
    frame.stamp = t;
    if (auto it = features_by_tick.find(llround(t * cam_rate));
        it != features_by_tick.end())
      frame.features = it->second->features;

    std::vector<ImuSample> batch;
    if (!first) {
      while (imu_lo < ds.imu.size() && ds.imu[imu_lo].stamp < prev_stamp - 1e-9) ++imu_lo;
      size_t i = imu_lo;
      while (i < ds.imu.size() && ds.imu[i].stamp <= t + 1e-9) {
        batch.push_back(ds.imu[i]);
        ++i;
      }
      imu_lo = (i > 0) ? i - 1 : 0;  // boundary sample is shared with the next batch
    }

    std::vector<RawGnssEpoch> epochs;
    if (mode == RunMode::kFused) {
      while (gnss_i < ds.gnss.size() && ds.gnss[gnss_i].stamp <= t + 1e-9) {
        if (first || ds.gnss[gnss_i].stamp > prev_stamp + 1e-9)
          epochs.push_back(ds.gnss[gnss_i]);
        ++gnss_i;
      }
    }

    est->process_frame(frame, batch, epochs);
    prev_stamp = t;
    first = false;
  }

  RunResult result;
  result.estimator = est;
  result.gate_reports = est->gate_reports();
  result.initialized = est->initialized();
  if (est->initialized()) {
    for (const GlobalPose& g : est->export_global_trajectory()) {
      result.estimate.push_back({g.stamp, g.enu, g.rotation_enu_b});
      result.estimate_ecef.push_back({g.stamp, g.ecef, g.rotation_enu_b});
    }
  } else {
    for (const auto& [stamp, x] : est->local_trajectory())
      result.estimate.push_back({stamp, x.p_wl_b, x.q_wl_b});
  }
  return result;
}

RunResult run_spp_only(const Dataset& ds, const GateConfig& gate) {
  RunResult result;
  std::vector<EcefVec> fixes;
  std::vector<double> stamps;
  for (const RawGnssEpoch& epoch : ds.gnss) {
    GateOutcome out = gate_gnss_only(epoch, gate);
    result.gate_reports.push_back(out.report);
    if (out.report.epoch_dropped || !out.spp) continue;
    fixes.push_back(out.spp->position_ecef);
    stamps.push_back(epoch.stamp);
  }
  const auto ref = select_reference(fixes);
  if (!ref) return result;
  const EnuAnchor anchor = make_enu_anchor(*ref);
  for (size_t i = 0; i < fixes.size(); ++i)
    result.estimate.push_back({stamps[i], ecef_to_enu(anchor, fixes[i]), Quat::Identity()});
  for (size_t i = 0; i < fixes.size(); ++i)
    result.estimate_ecef.push_back({stamps[i], fixes[i], Quat::Identity()});
  result.initialized = true;
  return result;
}

void write_run_outputs(const std::string& out_dir, const std::string& dataset_dir,
                       const RunResult& result, const std::string& gating_name) {
  fs::create_directories(out_dir);
  write_tum(out_dir + "/estimate.tum", result.estimate);
  if (!result.estimate_ecef.empty())
    write_tum(out_dir + "/estimate_ecef.tum", result.estimate_ecef);

  if (result.estimator && result.initialized) {
    std::ofstream out(out_dir + "/estimate_geodetic.csv");
    out << "stamp,lat_deg,lon_deg,height_m\n";
    char buf[256];
    for (const GlobalPose& g : result.estimator->export_global_trajectory()) {
      std::snprintf(buf, sizeof(buf), "%.9f,%.10f,%.10f,%.4f\n", g.stamp,
                    rad2deg(g.geodetic.lat), rad2deg(g.geodetic.lon), g.geodetic.height);
      out << buf;
    }
  }

  {
    std::ofstream out(out_dir + "/gates.log");
    for (const GateReport& r : result.gate_reports) out << serialize_gate_report(r) << "\n";
  }

  if (result.estimator) {
    std::ofstream out(out_dir + "/diagnostics.jsonl");
    for (const FrameDiagnostics& d : result.estimator->diagnostics()) {
      nlohmann::json j;
      j["stamp"] = d.stamp;
      j["mode"] = d.mode == EstimatorMode::kWarmup ? "warmup" : "fused";
      j["cost_initial"] = d.cost_initial;
      j["cost_final"] = d.cost_final;
      j["iterations"] = d.iterations;
      j["solver_ok"] = d.solver_ok;
      j["gnss_active"] = d.gnss_active;
      j["speed"] = d.speed;
      j["marginalized_epochs"] = d.marginalized_epochs;
      j["alignment_prior_active"] = d.alignment_prior_active;
      j["extrinsics_variable"] = d.extrinsics_variable;
      j["factors"] = d.factor_counts;
      out << j.dump() << "\n";
    }
  }

  // Gating timing/accuracy summary against the dataset ground truth.
  try {
    const Trajectory gt = read_tum(dataset_dir + "/gt.tum");
    const double ate = result.estimate.empty()
                           ? 0.0
                           : compute_ate(apply_transform(result.estimate,
                                                         align_rigid(result.estimate, gt)),
                                         gt);
    std::vector<GatingRunStats> rows;
    if (!result.gate_reports.empty())
      rows.push_back(gating_cost_report(gating_name, result.gate_reports, ate));
    std::ofstream out(out_dir + "/gating_summary.csv");
    out << gating_table_csv(rows);
  } catch (const std::exception&) {
    // no ground truth available; skip the summary
  }
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 int64_t seed_override) {
  try {
    ScenarioConfig cfg;
    if (!config_path.empty()) cfg = scenario_from_kv(read_key_values(config_path));
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    std::string dir = out_dir;
    if (const char* env = std::getenv("GVIO_OUT"); env && *env) dir = env;
    try {
      write_dataset(dir, cfg);
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    std::cout << "dataset written to " << dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_run(const std::string& dataset_dir, const std::string& config_path,
            const std::string& out_dir, const std::string& gating, const std::string& mode) {
  Dataset ds;
  KeyValues kv;
  RunMode run_mode;
  try {
    if (mode == "fused")
      run_mode = RunMode::kFused;
    else if (mode == "vio")
      run_mode = RunMode::kVio;
    else if (mode == "spp")
      run_mode = RunMode::kSpp;
    else {
      std::cerr << "error: unknown mode '" << mode << "'\n";
      return 1;
    }
    if (!config_path.empty()) kv = read_key_values(config_path);
    if (!gating.empty()) {
      if (gating != "gnss" && gating != "mixed") {
        std::cerr << "error: unknown gating '" << gating << "'\n";
        return 1;
      }
      kv["gating"] = gating;
    }
    ds = load_dataset(dataset_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const EstimatorConfig cfg = make_estimator_config(kv, ds);
    const RunResult result = run_pipeline(ds, cfg, run_mode, kv);
    std::string dir = out_dir;
    if (const char* env = std::getenv("GVIO_OUT"); env && *env) dir = env;
    write_run_outputs(dir, dataset_dir, result, kv_string(kv, "gating", "mixed"));
    std::cout << "outputs written to " << dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}

int cmd_evaluate(const std::string& estimate_path, const std::string& gt_path,
                 const std::string& out_csv, const std::string& label) {
  Trajectory est, gt;
  try {
    est = read_tum(estimate_path);
    gt = read_tum(gt_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    const TrajectoryEval eval = evaluate_trajectory(est, gt);
    const std::string row = metrics_csv_row(label.empty() ? estimate_path : label, eval);
    if (!out_csv.empty()) {
      std::string path = out_csv;
      if (const char* env = std::getenv("GVIO_OUT"); env && *env)
        path = std::string(env) + "/" + fs::path(out_csv).filename().string();
      const bool exists = fs::exists(path);
      std::ofstream out(path, std::ios::app);
      if (!exists) out << metrics_csv_header() << "\n";
      out << row << "\n";
    }
    std::cout << metrics_csv_header() << "\n" << row << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace gvio
