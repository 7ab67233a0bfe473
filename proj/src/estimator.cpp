#include "gvio/estimator.hpp"

#include <algorithm>
#include <set>

namespace gvio {

namespace {

/// Gaussian prior on a seeded state's velocity and biases; the pose part of
/// the gauge is handled by the first-frame clamp. Enters the marginal prior
/// chain when the first frame slides out.
class SeedPriorFactor : public Factor {
 public:
  SeedPriorFactor(int block, const NavState& ref, double wv, double wba, double wbg)
      : blocks_{block}, ref_(ref), wv_(wv), wba_(wba), wbg_(wbg) {}
  int dim() const override { return 9; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "seed_prior"; }
  bool evaluate(const std::vector<const VecX*>& p, VecX& r,
                std::vector<MatX>* j) const override {
    const NavState x = vec_to_navstate(*p[0]);
    r.resize(9);
    r.segment<3>(0) = wv_ * (x.v_wl_b - ref_.v_wl_b);
    r.segment<3>(3) = wba_ * (x.bias_accel - ref_.bias_accel);
    r.segment<3>(6) = wbg_ * (x.bias_gyro - ref_.bias_gyro);
    if (j) {
      j->resize(1);
      MatX m = MatX::Zero(9, 15);
      m.block<3, 3>(0, 6) = wv_ * Mat3::Identity();
      m.block<3, 3>(3, 9) = wba_ * Mat3::Identity();
      m.block<3, 3>(6, 12) = wbg_ * Mat3::Identity();
      (*j)[0] = std::move(m);
    }
    return true;
  }

 private:
  std::vector<int> blocks_;
  NavState ref_;
  double wv_, wba_, wbg_;
};

NavState predict_state(const NavState& prev, const Preintegration& pi, double gravity,
                       double stamp) {
  GravityVec g{gravity};
  const Mat3 r = prev.q_wl_b.toRotationMatrix();
  const CorrectedStates c = bias_corrected(pi, prev.bias_accel - pi.bias_accel_ref,
                                           prev.bias_gyro - pi.bias_gyro_ref);
  NavState x = prev;
  x.p_wl_b = prev.p_wl_b + prev.v_wl_b * pi.duration + r * c.alpha -
             0.5 * g.vec() * pi.duration * pi.duration;
  x.v_wl_b = prev.v_wl_b + r * c.beta - g.vec() * pi.duration;
  x.q_wl_b = (prev.q_wl_b * c.gamma).normalized();
  x.stamp = stamp;
  return x;
}

constexpr double kBiasReintegrateThreshold = 0.02;

}  // namespace

Estimator::Estimator(EstimatorConfig config) : config_(std::move(config)) {
  extrinsics_ = config_.extrinsics_init;
}

void Estimator::set_initial_state(const NavState& x0) {
  pending_initial_ = x0;
  have_initial_ = true;
}

const Estimator::Frame* Estimator::frame_by_id(int64_t id) const {
  for (const Frame& f : window_)
    if (f.id == id) return &f;
  return nullptr;
}

void Estimator::ingest_features(int64_t frame_id,
                                const std::vector<FeatureObservation>& features) {
  for (const auto& o : features) {
    FeatureTrack& t = tracks_[o.track_id];
    if (t.host_frame < 0) t.host_frame = frame_id;
    t.obs.emplace_back(frame_id, o.uv);
  }
}

GnssBinding Estimator::make_binding(const Frame& anchor_frame, double epoch_stamp) const {
  GnssBinding b;
  b.lever.translation_g_in_b = config_.lever_arm;

  // Samples covering [anchor, m(e)] live on the frame following the anchor.
  const std::vector<ImuSample>* span = nullptr;
  for (size_t i = 0; i + 1 < window_.size(); ++i) {
    if (window_[i].id == anchor_frame.id) {
      span = &window_[i + 1].imu_from_prev;
      break;
    }
  }
  std::vector<ImuSample> slice;
  if (span) {
    for (const ImuSample& s : *span) {
      if (s.stamp <= epoch_stamp + 1e-9) slice.push_back(s);
    }
  }
  b.preint = integrate(slice, anchor_frame.state.bias_accel, anchor_frame.state.bias_gyro,
                       config_.imu_noise);
  // nearest sample supplies the body rate at m(e)
  b.gyro_at_epoch = Vec3::Zero();
  if (span && !span->empty()) {
    double best = 1e18;
    for (const ImuSample& s : *span) {
      const double d = std::abs(s.stamp - epoch_stamp);
      if (d < best) {
        best = d;
        b.gyro_at_epoch = s.gyro;
      }
    }
  }
  return b;
}

void Estimator::handle_gnss_epoch(const RawGnssEpoch& epoch) {
  GateOutcome out;
  if (mode_ == EstimatorMode::kWarmup || config_.gating == GatingMethod::kGnssOnly)
    out = gate_gnss_only(epoch, config_.gate);
  else
    out = gate_mixed(epoch, *this);

  gate_reports_.push_back(out.report);
  const bool any_kept = !out.report.epoch_dropped &&
                        (!out.pr_kept_ids.empty() || !out.dop_kept_ids.empty());
  gate_history_.emplace_back(epoch.stamp, any_kept);
  if (out.report.epoch_dropped) return;

  if (out.spp) {
    spp_fixes_.push_back(out.spp->position_ecef);
    spp_stamps_.push_back(epoch.stamp);
  }
  if (mode_ != EstimatorMode::kFused) return;

  // anchor: latest frame with stamp <= m(e)
  const Frame* anchor_frame = nullptr;
  for (auto it = window_.rbegin(); it != window_.rend(); ++it) {
    if (it->stamp <= epoch.stamp + 1e-9) {
      anchor_frame = &*it;
      break;
    }
  }
  if (!anchor_frame) return;

  EpochEntry entry;
  entry.epoch.epoch_index = epoch.epoch_index;
  entry.epoch.stamp = epoch.stamp;
  std::set<int> kept(out.pr_kept_ids.begin(), out.pr_kept_ids.end());
  kept.insert(out.dop_kept_ids.begin(), out.dop_kept_ids.end());
  for (const auto& [obs, sat] : epoch.observations)
    if (kept.count(obs.sat_id)) entry.epoch.observations.emplace_back(obs, sat);
  entry.pr_kept_ids = out.pr_kept_ids;
  entry.dop_kept_ids = out.dop_kept_ids;
  entry.anchor_frame = anchor_frame->id;
  entry.binding = make_binding(*anchor_frame, epoch.stamp);
  entry.slots = entry.epoch.constellations();
  entry.clock = VecX::Zero(2 * entry.slots.size());
  for (size_t i = 0; i < entry.slots.size(); ++i) {
    if (out.spp) {
      auto it = out.spp->clock_bias.find(entry.slots[i]);
      if (it != out.spp->clock_bias.end()) entry.clock(2 * i) = it->second;
    }
    if (out.velocity) {
      auto it = out.velocity->clock_drift.find(entry.slots[i]);
      if (it != out.velocity->clock_drift.end()) entry.clock(2 * i + 1) = it->second;
    }
  }
  epochs_.push_back(std::move(entry));
}

bool Estimator::any_kept_since(double stamp) const {
  for (auto it = gate_history_.rbegin(); it != gate_history_.rend(); ++it) {
    if (it->first < stamp) break;
    if (it->second) return true;
  }
  return false;
}

void Estimator::try_initialize() {
  if (!anchor_) {
    auto ref = select_reference(spp_fixes_);
    if (!ref) return;
    anchor_ = make_enu_anchor(*ref);
  }
  if (local_traj_.size() < 2) return;

  const auto interp = interpolate_positions(local_traj_, spp_stamps_);
  if (interp.size() < static_cast<size_t>(config_.init_min_pairs)) return;

  std::vector<Vec3> enu_pts, local_pts;
  enu_pts.reserve(interp.size());
  for (const auto& [qi, local] : interp) {
    enu_pts.push_back(ecef_to_enu(*anchor_, spp_fixes_[qi]));
    local_pts.push_back(local);
  }

  Vec2 lo(1e18, 1e18), hi(-1e18, -1e18);
  for (const Vec3& p : enu_pts) {
    lo = lo.cwiseMin(p.head<2>());
    hi = hi.cwiseMax(p.head<2>());
  }
  if ((hi - lo).norm() < config_.init_min_span) return;

  AlignmentEstimate est;
  try {
    est = align_5dof(enu_pts, local_pts);
  } catch (const std::invalid_argument&) {
    return;
  }
  if (est.scale <= 0.0) return;

  alignment_.yaw = est.yaw;
  alignment_.translation = est.translation;
  rescale_local_map(est.scale);
  alignment_prior_value_ = alignment_;
  alignment_prior_active_ = true;
  mode_ = EstimatorMode::kFused;
}

void Estimator::rescale_local_map(double s) {
  if (std::abs(s - 1.0) < 1e-12) return;
  for (Frame& f : window_) {
    f.state.p_wl_b *= s;
    f.state.v_wl_b *= s;
  }
  for (auto& [tid, t] : tracks_) t.inverse_depth /= s;
  for (auto& tp : local_traj_) tp.position *= s;
  for (auto& [stamp, x] : history_) {
    x.p_wl_b *= s;
    x.v_wl_b *= s;
  }
  if (prior_) {
    auto scaled = std::make_shared<MarginalPrior>(*prior_);
    for (size_t i = 0; i < scaled->manifolds.size(); ++i) {
      const int off = scaled->tangent_offsets[i];
      if (scaled->manifolds[i] == Manifold::kNavState) {
        scaled->lin_values[i].segment<3>(0) *= s;
        scaled->lin_values[i].segment<3>(3) *= s;
        scaled->sqrt_info.middleCols(off, 3) /= s;      // dp
        scaled->sqrt_info.middleCols(off + 6, 3) /= s;  // dv
      } else if (scaled->manifolds[i] == Manifold::kEuclidean &&
                 scaled->lin_values[i].size() == 1) {
        scaled->lin_values[i] /= s;  // inverse depth
        scaled->sqrt_info.middleCols(off, 1) *= s;
      }
    }
    prior_ = std::move(scaled);
  }
}

Vec3 Estimator::landmark_world(const FeatureTrack& t) const {
  const Frame* host = frame_by_id(t.host_frame);
  const Vec2& uv = t.obs.front().second;
  const Mat3 r_wb = host->state.q_wl_b.toRotationMatrix();
  const Mat3 r_bc = extrinsics_.rotation_b_from_c.toRotationMatrix();
  const Vec3 p_c(uv.x() / t.inverse_depth, uv.y() / t.inverse_depth, 1.0 / t.inverse_depth);
  return r_wb * (r_bc * p_c + extrinsics_.translation_c_in_b) + host->state.p_wl_b;
}

void Estimator::triangulate_tracks() {
  const Mat3 r_bc = extrinsics_.rotation_b_from_c.toRotationMatrix();
  const Vec3& p_bc = extrinsics_.translation_c_in_b;
  for (auto& [tid, t] : tracks_) {
    if (t.triangulated || t.obs.size() < 2) continue;
    const Frame* host = frame_by_id(t.host_frame);
    const Frame* tgt = frame_by_id(t.obs.back().first);
    if (!host || !tgt || host->id == tgt->id) continue;

    const Mat3 r1 = host->state.q_wl_b.toRotationMatrix() * r_bc;
    const Mat3 r2 = tgt->state.q_wl_b.toRotationMatrix() * r_bc;
    const Vec3 o1 = host->state.q_wl_b.toRotationMatrix() * p_bc + host->state.p_wl_b;
    const Vec3 o2 = tgt->state.q_wl_b.toRotationMatrix() * p_bc + tgt->state.p_wl_b;
    if ((o2 - o1).norm() < 0.15) continue;  // not enough baseline yet
    const Vec2& uv1 = t.obs.front().second;
    const Vec2& uv2 = t.obs.back().second;
    const Vec3 d1 = r1 * Vec3(uv1.x(), uv1.y(), 1.0);
    const Vec3 d2 = r2 * Vec3(uv2.x(), uv2.y(), 1.0);

    // midpoint triangulation: min_z,t |o1 + z d1 - o2 - t d2|
    Eigen::Matrix2d a;
    a << d1.dot(d1), -d1.dot(d2), -d1.dot(d2), d2.dot(d2);
    const Vec3 dp = o2 - o1;
    const Vec2 rhs(d1.dot(dp), -d2.dot(dp));
    const double det = a.determinant();
    if (std::abs(det) < 1e-10 * d1.squaredNorm() * d2.squaredNorm()) continue;
    const Vec2 zt = a.inverse() * rhs;
    const double z = zt(0);
    if (z < 0.3 || z > 300.0) continue;
    t.inverse_depth = 1.0 / z;
    t.triangulated = true;
  }
}

Estimator::Assembly Estimator::build_problem(GnssFactorSet gnss_set, bool gnss_active) const {
  Assembly a;
  for (size_t i = 0; i < window_.size(); ++i) {
    ParamBlock b;
    b.value = navstate_to_vec(window_[i].state);
    b.manifold = Manifold::kNavState;
    // Gauge during warm-up: clamp the very first pose; once it has been
    // marginalized the prior carries the gauge information forward.
    if (mode_ == EstimatorMode::kWarmup && window_[i].id == 0)
      b.fixed_tangent_mask = 0x3F;
    a.frame_block[window_[i].id] = a.problem.add_block(std::move(b));
  }
  {
    ParamBlock b;
    b.value = pose_to_vec(extrinsics_.translation_c_in_b, extrinsics_.rotation_b_from_c);
    b.manifold = Manifold::kPose;
    b.constant = !extrinsics_variable_;
    a.extrinsics_block = a.problem.add_block(std::move(b));
  }
  if (mode_ == EstimatorMode::kFused) {
    ParamBlock b;
    b.value = VecX(4);
    b.value(0) = alignment_.yaw;
    b.value.segment<3>(1) = alignment_.translation;
    b.manifold = Manifold::kYawTrans;
    a.alignment_block = a.problem.add_block(std::move(b));
  }
  for (const EpochEntry& e : epochs_) {
    ParamBlock b;
    b.value = e.clock;
    a.clock_block[e.epoch.epoch_index] = a.problem.add_block(std::move(b));
  }
  for (const auto& [tid, t] : tracks_) {
    if (!t.triangulated || t.obs.size() < 2) continue;
    if (!frame_by_id(t.host_frame)) continue;
    ParamBlock b;
    b.value = VecX::Constant(1, t.inverse_depth);
    b.eliminable = true;
    a.landmark_block[tid] = a.problem.add_block(std::move(b));
  }

  if (prior_) {
    std::vector<int> ids;
    ids.reserve(prior_keys_.size());
    bool ok = true;
    for (const BlockKey& k : prior_keys_) {
      int id = -1;
      switch (k.kind) {
        case BlockKey::kFrame: {
          auto it = a.frame_block.find(k.id);
          if (it != a.frame_block.end()) id = it->second;
          break;
        }
        case BlockKey::kExtrinsics: id = a.extrinsics_block; break;
        case BlockKey::kAlignment: id = a.alignment_block; break;
        case BlockKey::kLandmark: {
          auto it = a.landmark_block.find(k.id);
          if (it != a.landmark_block.end()) id = it->second;
          break;
        }
        case BlockKey::kClock: {
          auto it = a.clock_block.find(k.id);
          if (it != a.clock_block.end()) id = it->second;
          break;
        }
      }
      if (id < 0) ok = false;
      ids.push_back(id);
    }
    if (ok)
      a.prior_factor =
          a.problem.add_factor(std::make_shared<MarginalPriorFactor>(ids, prior_));
  }

  if (alignment_prior_active_ && a.alignment_block >= 0) {
    Vec4 w;
    w(0) = 1.0 / deg2rad(config_.align_prior_yaw_sigma_deg);
    w.tail<3>().setConstant(1.0 / config_.align_prior_trans_sigma);
    a.problem.add_factor(std::make_shared<AlignmentPriorFactor>(a.alignment_block,
                                                                alignment_prior_value_, w));
  }

  if (auto it = a.frame_block.find(0); it != a.frame_block.end()) {
    a.problem.add_factor(std::make_shared<SeedPriorFactor>(
        it->second, pending_initial_, 1.0 / config_.seed_vel_sigma,
        1.0 / config_.seed_bias_accel_sigma, 1.0 / config_.seed_bias_gyro_sigma));
  }

  GravityVec gravity{config_.gravity};
  for (size_t i = 1; i < window_.size(); ++i) {
    if (window_[i].preint_from_prev.duration <= 0.0) continue;
    a.problem.add_factor(std::make_shared<ImuFactor>(a.frame_block.at(window_[i - 1].id),
                                                     a.frame_block.at(window_[i].id),
                                                     window_[i].preint_from_prev, gravity));
  }

  const double sigma = config_.reproj_sigma_unit();
  for (const auto& [tid, t] : tracks_) {
    auto lit = a.landmark_block.find(tid);
    if (lit == a.landmark_block.end()) continue;
    const Vec2& host_uv = t.obs.front().second;
    for (size_t k = 1; k < t.obs.size(); ++k) {
      auto fit = a.frame_block.find(t.obs[k].first);
      if (fit == a.frame_block.end()) continue;
      a.problem.add_factor(std::make_shared<ReprojectionFactor>(
          a.frame_block.at(t.host_frame), fit->second, a.extrinsics_block, lit->second,
          host_uv, t.obs[k].second, sigma, config_.huber_delta));
    }
  }

  if (gnss_set == GnssFactorSet::kAll && a.alignment_block >= 0) {
    for (const EpochEntry& e : epochs_) {
      auto fb = a.frame_block.find(e.anchor_frame);
      if (fb == a.frame_block.end()) continue;
      const int cb = a.clock_block.at(e.epoch.epoch_index);
      auto& list = a.epoch_factors[e.epoch.epoch_index];
      for (const auto& [obs, sat] : e.epoch.observations) {
        const int slot = static_cast<int>(
            std::find(e.slots.begin(), e.slots.end(), sat.constellation) - e.slots.begin());
        const bool pr_kept =
            std::find(e.pr_kept_ids.begin(), e.pr_kept_ids.end(), obs.sat_id) !=
            e.pr_kept_ids.end();
        const bool dop_kept =
            std::find(e.dop_kept_ids.begin(), e.dop_kept_ids.end(), obs.sat_id) !=
            e.dop_kept_ids.end();
        if (pr_kept)
          list.push_back(a.problem.add_factor(
              std::make_shared<PseudorangeFactor>(fb->second, a.alignment_block, cb,
                                                  *anchor_, sat, obs, e.binding, gravity,
                                                  slot, config_.w_pseudorange),
              gnss_active));
        if (dop_kept)
          list.push_back(a.problem.add_factor(
              std::make_shared<DopplerFactor>(fb->second, a.alignment_block, cb, *anchor_,
                                              sat, obs, e.binding, gravity, slot,
                                              config_.w_doppler),
              gnss_active));
      }
    }
  }
  return a;
}

Estimator::CandidateAttach Estimator::attach_candidate_epoch(Assembly& a,
                                                             const RawGnssEpoch& epoch,
                                                             const SppSolution& spp,
                                                             const VelocitySolution& vel) const {
  CandidateAttach att;
  const Frame* anchor_frame = nullptr;
  for (auto it = window_.rbegin(); it != window_.rend(); ++it) {
    if (it->stamp <= epoch.stamp + 1e-9) {
      anchor_frame = &*it;
      break;
    }
  }
  if (!anchor_frame || a.alignment_block < 0) return att;

  const auto slots = epoch.constellations();
  ParamBlock cb;
  cb.value = VecX::Zero(2 * slots.size());
  for (size_t i = 0; i < slots.size(); ++i) {
    if (auto it = spp.clock_bias.find(slots[i]); it != spp.clock_bias.end())
      cb.value(2 * i) = it->second;
    if (auto it = vel.clock_drift.find(slots[i]); it != vel.clock_drift.end())
      cb.value(2 * i + 1) = it->second;
  }
  att.clock_block = a.problem.add_block(std::move(cb));

  const GnssBinding binding = make_binding(*anchor_frame, epoch.stamp);
  GravityVec gravity{config_.gravity};
  const int fb = a.frame_block.at(anchor_frame->id);
  for (const auto& [obs, sat] : epoch.observations) {
    const int slot = static_cast<int>(
        std::find(slots.begin(), slots.end(), sat.constellation) - slots.begin());
    att.pr_factors.emplace_back(
        obs.sat_id, a.problem.add_factor(std::make_shared<PseudorangeFactor>(
                        fb, a.alignment_block, att.clock_block, *anchor_, sat, obs, binding,
                        gravity, slot, config_.w_pseudorange)));
    att.dop_factors.emplace_back(
        obs.sat_id, a.problem.add_factor(std::make_shared<DopplerFactor>(
                        fb, a.alignment_block, att.clock_block, *anchor_, sat, obs, binding,
                        gravity, slot, config_.w_doppler)));
  }
  return att;
}

void Estimator::write_back(const Assembly& a) {
  for (Frame& f : window_) {
    const double stamp = f.stamp;
    f.state = vec_to_navstate(a.problem.block(a.frame_block.at(f.id)).value, stamp);
  }
  if (extrinsics_variable_) {
    const VecX& v = a.problem.block(a.extrinsics_block).value;
    extrinsics_.translation_c_in_b = v.segment<3>(0);
    extrinsics_.rotation_b_from_c = Quat(Eigen::Vector4d(v.segment<4>(3))).normalized();
  }
  if (a.alignment_block >= 0) {
    const VecX& v = a.problem.block(a.alignment_block).value;
    alignment_.yaw = v(0);
    alignment_.translation = v.segment<3>(1);
  }
  for (EpochEntry& e : epochs_) {
    auto it = a.clock_block.find(e.epoch.epoch_index);
    if (it != a.clock_block.end()) e.clock = a.problem.block(it->second).value;
  }
  for (auto& [tid, t] : tracks_) {
    auto it = a.landmark_block.find(tid);
    if (it == a.landmark_block.end()) continue;
    t.inverse_depth = a.problem.block(it->second).value(0);
    if (t.inverse_depth < 1e-4) t.triangulated = false;  // retriangulate later
  }
}

double Estimator::second_latest_speed() const {
  if (window_.size() < 2) return 0.0;
  return window_[window_.size() - 2].state.v_wl_b.norm();
}

void Estimator::solve_window(FrameDiagnostics& diag) {
  if (window_.size() < 2) return;
  bool gnss_active = true;
  diag.speed = second_latest_speed();
  if (mode_ == EstimatorMode::kFused && diag.speed < config_.low_speed_threshold)
    gnss_active = false;
  diag.gnss_active = gnss_active;

  Assembly a = build_problem(GnssFactorSet::kAll, gnss_active);
  SolveOptions opts;
  opts.max_iterations = config_.solver_iterations;
  const SolveReport report = solve(a.problem, opts);
  diag.cost_initial = report.initial_cost;
  diag.cost_final = report.final_cost;
  diag.iterations = report.iterations;
  diag.solver_ok = report.converged();
  diag.factor_counts = report.factor_counts;
  write_back(a);
  refresh_preintegrations();
}

void Estimator::refresh_preintegrations() {
  for (size_t i = 1; i < window_.size(); ++i) {
    const NavState& prev = window_[i - 1].state;
    Preintegration& pi = window_[i].preint_from_prev;
    if (pi.duration <= 0.0) continue;
    if ((prev.bias_accel - pi.bias_accel_ref).norm() > kBiasReintegrateThreshold ||
        (prev.bias_gyro - pi.bias_gyro_ref).norm() > kBiasReintegrateThreshold) {
      pi = integrate(window_[i].imu_from_prev, prev.bias_accel, prev.bias_gyro,
                     config_.imu_noise);
    }
  }
  for (EpochEntry& e : epochs_) {
    const Frame* anchor_frame = frame_by_id(e.anchor_frame);
    if (!anchor_frame) continue;
    if ((anchor_frame->state.bias_accel - e.binding.preint.bias_accel_ref).norm() >
            kBiasReintegrateThreshold ||
        (anchor_frame->state.bias_gyro - e.binding.preint.bias_gyro_ref).norm() >
            kBiasReintegrateThreshold) {
      e.binding = make_binding(*anchor_frame, e.epoch.stamp);
    }
  }
}

bool Estimator::second_latest_is_keyframe() const {
  const Frame& latest = window_.back();
  const Frame& second = window_[window_.size() - 2];
  int common = 0;
  double parallax = 0.0;
  for (const auto& [tid, t] : tracks_) {
    const Vec2* uv_l = nullptr;
    const Vec2* uv_s = nullptr;
    for (const auto& [fid, uv] : t.obs) {
      if (fid == latest.id) uv_l = &uv;
      if (fid == second.id) uv_s = &uv;
    }
    if (uv_l && uv_s) {
      ++common;
      parallax += (*uv_l - *uv_s).norm();
    }
  }
  if (common < config_.keyframe_min_tracks) return true;
  return parallax / double(common) >= config_.keyframe_parallax;
}

void Estimator::rehost_or_drop(int64_t track_id, int64_t removed_frame) {
  auto it = tracks_.find(track_id);
  if (it == tracks_.end()) return;
  FeatureTrack& t = it->second;

  Vec3 p_w = Vec3::Zero();
  const bool was_hosted = (t.host_frame == removed_frame);
  const bool had_depth = was_hosted && t.triangulated && frame_by_id(removed_frame);
  if (had_depth) p_w = landmark_world(t);

  t.obs.erase(std::remove_if(t.obs.begin(), t.obs.end(),
                             [&](const auto& p) { return p.first == removed_frame; }),
              t.obs.end());
  if (t.obs.size() < 2) {
    tracks_.erase(it);
    return;
  }
  if (!was_hosted) return;

  t.host_frame = t.obs.front().first;
  const Frame* host = frame_by_id(t.host_frame);
  if (!host) {
    tracks_.erase(it);
    return;
  }
  if (had_depth) {
    const Mat3 r_bc = extrinsics_.rotation_b_from_c.toRotationMatrix();
    const Vec3 p_b = host->state.q_wl_b.toRotationMatrix().transpose() * (p_w - host->state.p_wl_b);
    const Vec3 p_c = r_bc.transpose() * (p_b - extrinsics_.translation_c_in_b);
    if (p_c.z() > 0.1) {
      t.inverse_depth = 1.0 / p_c.z();
    } else {
      t.triangulated = false;
    }
  }
}

void Estimator::slide_keyframe() {
  const Frame old = window_.front();

  Assembly a = build_problem(GnssFactorSet::kAll, true);

  // invert the assembly maps to recover keys
  std::map<int, BlockKey> key_of;
  for (const auto& [fid, bid] : a.frame_block) key_of[bid] = {BlockKey::kFrame, fid};
  key_of[a.extrinsics_block] = {BlockKey::kExtrinsics, 0};
  if (a.alignment_block >= 0) key_of[a.alignment_block] = {BlockKey::kAlignment, 0};
  for (const auto& [eid, bid] : a.clock_block) key_of[bid] = {BlockKey::kClock, eid};
  for (const auto& [tid, bid] : a.landmark_block) key_of[bid] = {BlockKey::kLandmark, tid};

  std::set<int> drop_ids{a.frame_block.at(old.id)};
  for (const auto& [tid, bid] : a.landmark_block)
    if (tracks_.at(tid).host_frame == old.id) drop_ids.insert(bid);
  std::vector<int64_t> dropped_epochs;
  for (const EpochEntry& e : epochs_)
    if (e.anchor_frame == old.id) {
      drop_ids.insert(a.clock_block.at(e.epoch.epoch_index));
      dropped_epochs.push_back(e.epoch.epoch_index);
    }

  std::vector<int> marg_factors;
  std::set<int> keep_ids;
  for (int fi = 0; fi < a.problem.num_factors(); ++fi) {
    const Factor& f = a.problem.factor(fi);
    bool touches = false;
    for (int bid : f.blocks())
      if (drop_ids.count(bid)) touches = true;
    if (!touches) continue;
    marg_factors.push_back(fi);
    for (int bid : f.blocks())
      if (!drop_ids.count(bid) && !a.problem.block(bid).constant) keep_ids.insert(bid);
  }

  if (!marg_factors.empty()) {
    std::vector<int> drops(drop_ids.begin(), drop_ids.end());
    std::vector<int> keeps(keep_ids.begin(), keep_ids.end());
    prior_ = std::make_shared<MarginalPrior>(marginalize(a.problem, marg_factors, drops, keeps));
    prior_keys_.clear();
    for (int bid : keeps) prior_keys_.push_back(key_of.at(bid));
  }

  marginalized_epochs_ += static_cast<int64_t>(dropped_epochs.size());
  for (int64_t eid : dropped_epochs) {
    epochs_.erase(std::remove_if(epochs_.begin(), epochs_.end(),
                                 [&](const EpochEntry& e) { return e.epoch.epoch_index == eid; }),
                  epochs_.end());
  }

  std::vector<int64_t> observed_at_old;
  for (const auto& [tid, t] : tracks_)
    for (const auto& [fid, uv] : t.obs)
      if (fid == old.id) {
        observed_at_old.push_back(tid);
        break;
      }
  for (int64_t tid : observed_at_old) rehost_or_drop(tid, old.id);

  history_[old.stamp] = old.state;
  window_.pop_front();
}

void Estimator::slide_non_keyframe() {
  const size_t n = window_.size();
  const Frame dropped = window_[n - 2];
  Frame& latest = window_[n - 1];
  const Frame& prev = window_[n - 3];

  // prior may reference the dropped pose: marginalize it out of the prior
  if (prior_) {
    int drop_key = -1;
    for (size_t i = 0; i < prior_keys_.size(); ++i)
      if (prior_keys_[i].kind == BlockKey::kFrame && prior_keys_[i].id == dropped.id)
        drop_key = static_cast<int>(i);
    if (drop_key >= 0) {
      Problem mini;
      std::vector<int> ids;
      for (size_t i = 0; i < prior_keys_.size(); ++i) {
        ParamBlock b;
        b.manifold = prior_->manifolds[i];
        b.value = prior_->lin_values[i];
        // evaluate at current values where available
        if (prior_keys_[i].kind == BlockKey::kFrame) {
          if (const Frame* f = frame_by_id(prior_keys_[i].id))
            b.value = navstate_to_vec(f->state);
          else if (prior_keys_[i].id == dropped.id)
            b.value = navstate_to_vec(dropped.state);
        } else if (prior_keys_[i].kind == BlockKey::kExtrinsics) {
          b.value = pose_to_vec(extrinsics_.translation_c_in_b, extrinsics_.rotation_b_from_c);
        } else if (prior_keys_[i].kind == BlockKey::kAlignment) {
          b.value = VecX(4);
          b.value(0) = alignment_.yaw;
          b.value.segment<3>(1) = alignment_.translation;
        }
        ids.push_back(mini.add_block(std::move(b)));
      }
      mini.add_factor(std::make_shared<MarginalPriorFactor>(ids, prior_));
      std::vector<int> drops{ids[drop_key]};
      std::vector<int> keeps;
      for (size_t i = 0; i < ids.size(); ++i)
        if (static_cast<int>(i) != drop_key) keeps.push_back(ids[i]);
      prior_ = std::make_shared<MarginalPrior>(marginalize(mini, {0}, drops, keeps));
      std::vector<BlockKey> new_keys;
      for (size_t i = 0; i < prior_keys_.size(); ++i)
        if (static_cast<int>(i) != drop_key) new_keys.push_back(prior_keys_[i]);
      prior_keys_ = std::move(new_keys);
    }
  }

  // visual observations of the dropped frame are discarded outright
  std::vector<int64_t> affected;
  for (const auto& [tid, t] : tracks_)
    for (const auto& [fid, uv] : t.obs)
      if (fid == dropped.id) {
        affected.push_back(tid);
        break;
      }
  for (int64_t tid : affected) rehost_or_drop(tid, dropped.id);

  // merge IMU intervals (shared boundary sample dropped)
  std::vector<ImuSample> merged = dropped.imu_from_prev;
  for (const ImuSample& s : latest.imu_from_prev)
    if (merged.empty() || s.stamp > merged.back().stamp + 1e-12) merged.push_back(s);
  latest.imu_from_prev = std::move(merged);
  latest.preint_from_prev =
      integrate(latest.imu_from_prev, prev.state.bias_accel, prev.state.bias_gyro,
                config_.imu_noise);

  // GNSS epochs rebind to the third-latest frame; measurements unchanged
  for (EpochEntry& e : epochs_) {
    if (e.anchor_frame != dropped.id) continue;
    e.anchor_frame = prev.id;
  }

  history_[dropped.stamp] = dropped.state;
  window_.erase(window_.begin() + static_cast<long>(n - 2));

  // rebuild rebound preintegrations now that the window changed
  for (EpochEntry& e : epochs_) {
    if (e.anchor_frame != prev.id) continue;
    if (const Frame* af = frame_by_id(e.anchor_frame)) e.binding = make_binding(*af, e.epoch.stamp);
  }
}

void Estimator::update_turn_state() {
  if (extrinsics_variable_ || window_.empty()) return;
  const double yaw = yaw_of(window_.back().state.q_wl_b.toRotationMatrix());
  if (std::abs(wrap_angle(yaw - initial_yaw_)) >= deg2rad(config_.turn_threshold_deg))
    extrinsics_variable_ = true;
}

void Estimator::process_frame(const FrameInput& frame,
                              const std::vector<ImuSample>& imu_batch,
                              const std::vector<RawGnssEpoch>& gnss_epochs) {
  FrameDiagnostics diag;
  diag.stamp = frame.stamp;

  if (window_.empty()) {
    if (!have_initial_) throw std::logic_error("estimator: set_initial_state first");
    Frame f;
    f.id = next_frame_id_++;
    f.stamp = frame.stamp;
    f.state = pending_initial_;
    f.state.stamp = frame.stamp;
    initial_yaw_ = yaw_of(f.state.q_wl_b.toRotationMatrix());
    window_.push_back(std::move(f));
    ingest_features(window_.back().id, frame.features);
    for (const auto& e : gnss_epochs) handle_gnss_epoch(e);
    local_traj_.push_back({frame.stamp, window_.back().state.p_wl_b});
    diag.mode = mode_;
    diagnostics_.push_back(diag);
    return;
  }

  const Frame& prev = window_.back();
  Frame f;
  f.id = next_frame_id_++;
  f.stamp = frame.stamp;
  f.imu_from_prev = imu_batch;
  f.preint_from_prev =
      integrate(imu_batch, prev.state.bias_accel, prev.state.bias_gyro, config_.imu_noise);
  f.state = predict_state(prev.state, f.preint_from_prev, config_.gravity, frame.stamp);
  window_.push_back(std::move(f));
  ingest_features(window_.back().id, frame.features);

  for (const auto& e : gnss_epochs) handle_gnss_epoch(e);
  if (mode_ == EstimatorMode::kWarmup) try_initialize();

  triangulate_tracks();
  solve_window(diag);
  update_turn_state();

  if (static_cast<int>(window_.size()) > config_.window_size) {
    if (second_latest_is_keyframe())
      slide_keyframe();
    else
      slide_non_keyframe();
  }

  if (alignment_prior_active_ && marginalized_epochs_ > config_.prior_epoch_limit)
    alignment_prior_active_ = false;  // permanent removal

  local_traj_.push_back({frame.stamp, window_.back().state.p_wl_b});
  diag.mode = mode_;
  diag.marginalized_epochs = marginalized_epochs_;
  diag.alignment_prior_active = alignment_prior_active_;
  diag.extrinsics_variable = extrinsics_variable_;
  diagnostics_.push_back(diag);
}

std::optional<MatX> Estimator::alignment_marginal_information() const {
  if (!prior_) return std::nullopt;
  for (size_t i = 0; i < prior_keys_.size(); ++i)
    if (prior_keys_[i].kind == BlockKey::kAlignment)
      return prior_->marginal_information(static_cast<int>(i));
  return std::nullopt;
}

std::vector<std::pair<double, NavState>> Estimator::local_trajectory() const {
  std::map<double, NavState> merged = history_;
  for (const Frame& f : window_) merged[f.stamp] = f.state;
  std::vector<std::pair<double, NavState>> out;
  out.reserve(merged.size());
  for (const auto& [stamp, x] : merged) out.emplace_back(stamp, x);
  return out;
}

std::vector<GlobalPose> Estimator::export_global_trajectory() const {
  if (!initialized() || !anchor_)
    throw std::logic_error("export_global_trajectory: estimator not initialized");
  std::vector<GlobalPose> out;
  const Mat3 rz = yaw_rotation(alignment_);
  const Quat qz(rz);
  for (const auto& [stamp, x] : local_trajectory()) {
    GlobalPose g;
    g.stamp = stamp;
    g.enu = rz * x.p_wl_b + alignment_.translation;
    g.ecef = enu_to_ecef(*anchor_, g.enu);
    g.geodetic = ecef_to_geodetic(g.ecef);
    g.rotation_enu_b = (qz * x.q_wl_b).normalized();
    out.push_back(g);
  }
  return out;
}

}  // namespace gvio
