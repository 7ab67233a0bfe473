#include "gvio/gating.hpp"

#include <chrono>
#include <numeric>
#include <set>
#include <sstream>

#include "gvio/estimator.hpp"

namespace gvio {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

RawGnssEpoch subset(const RawGnssEpoch& epoch, const std::set<int>& sat_ids) {
  RawGnssEpoch out;
  out.epoch_index = epoch.epoch_index;
  out.stamp = epoch.stamp;
  for (const auto& [obs, sat] : epoch.observations)
    if (sat_ids.count(obs.sat_id)) out.observations.emplace_back(obs, sat);
  return out;
}

int min_kept(const RawGnssEpoch& e) {
  return 3 + static_cast<int>(e.constellations().size()) + 1;
}

void mark_all_removed(GateOutcome& out, const RawGnssEpoch& epoch) {
  for (const auto& [obs, sat] : epoch.observations) {
    bool in_pr = false, in_dop = false;
    for (const auto& [id, r] : out.report.pr_removed) in_pr |= (id == obs.sat_id);
    for (const auto& [id, r] : out.report.dop_removed) in_dop |= (id == obs.sat_id);
    if (!in_pr) out.report.pr_removed.emplace_back(obs.sat_id, 0.0);
    if (!in_dop) out.report.dop_removed.emplace_back(obs.sat_id, 0.0);
  }
  out.report.pr_kept.clear();
  out.report.dop_kept.clear();
  out.pr_kept_ids.clear();
  out.dop_kept_ids.clear();
  out.report.epoch_dropped = true;
}

}  // namespace

std::string GateReport::category() const {
  const bool any_removed = !pr_removed.empty() || !dop_removed.empty();
  if (epoch_dropped) return "all";
  return any_removed ? "partial" : "none";
}

GateOutcome gate_gnss_only(const RawGnssEpoch& epoch, const GateConfig& cfg) {
  const auto t0 = Clock::now();
  GateOutcome out;
  out.report.epoch_index = epoch.epoch_index;
  out.report.stamp = epoch.stamp;
  out.report.method = "gnss";

  std::set<int> pr_ids;
  for (const auto& [obs, sat] : epoch.observations) pr_ids.insert(obs.sat_id);

  // Pseudorange pass: refit, peel the worst offender, repeat.
  SppSolution spp;
  while (true) {
    const RawGnssEpoch sub = subset(epoch, pr_ids);
    try {
      spp = spp_solve(sub);
    } catch (const std::exception& e) {
      out.report.drop_reason = e.what();
      mark_all_removed(out, epoch);
      out.report.elapsed_ms = ms_since(t0);
      return out;
    }
    int worst_sat = -1;
    double worst = 0.0;
    for (size_t i = 0; i < sub.observations.size(); ++i) {
      if (std::abs(spp.residuals[i]) > worst) {
        worst = std::abs(spp.residuals[i]);
        worst_sat = sub.observations[i].first.sat_id;
      }
    }
    if (worst_sat >= 0 && worst > cfg.threshold_pseudorange) {
      out.report.pr_removed.emplace_back(worst_sat, worst);
      pr_ids.erase(worst_sat);
      continue;
    }
    for (size_t i = 0; i < sub.observations.size(); ++i)
      out.report.pr_kept.emplace_back(sub.observations[i].first.sat_id, spp.residuals[i]);
    break;
  }
  out.spp = spp;

  if (static_cast<int>(pr_ids.size()) < min_kept(subset(epoch, pr_ids))) {
    out.report.drop_reason = "too few measurements after filtering";
    mark_all_removed(out, epoch);
    out.report.elapsed_ms = ms_since(t0);
    return out;
  }

  // Doppler pass at the fixed SPP position.
  std::set<int> dop_ids;
  for (const auto& [obs, sat] : epoch.observations) dop_ids.insert(obs.sat_id);
  VelocitySolution vel;
  bool have_vel = false;
  while (true) {
    const RawGnssEpoch sub = subset(epoch, dop_ids);
    try {
      vel = velocity_solve(sub, spp.position_ecef);
      have_vel = true;
    } catch (const std::exception&) {
      for (int id : dop_ids) out.report.dop_removed.emplace_back(id, 0.0);
      dop_ids.clear();
      break;
    }
    int worst_sat = -1;
    double worst = 0.0;
    for (size_t i = 0; i < sub.observations.size(); ++i) {
      if (std::abs(vel.residuals[i]) > worst) {
        worst = std::abs(vel.residuals[i]);
        worst_sat = sub.observations[i].first.sat_id;
      }
    }
    if (worst_sat >= 0 && worst > cfg.threshold_doppler) {
      out.report.dop_removed.emplace_back(worst_sat, worst);
      dop_ids.erase(worst_sat);
      continue;
    }
    for (size_t i = 0; i < sub.observations.size(); ++i)
      out.report.dop_kept.emplace_back(sub.observations[i].first.sat_id, vel.residuals[i]);
    break;
  }
  if (have_vel) out.velocity = vel;

  out.pr_kept_ids.assign(pr_ids.begin(), pr_ids.end());
  out.dop_kept_ids.assign(dop_ids.begin(), dop_ids.end());
  out.report.elapsed_ms = ms_since(t0);
  return out;
}

GateOutcome gate_mixed(const RawGnssEpoch& epoch, Estimator& est) {
  const auto t0 = Clock::now();
  const GateConfig& cfg = est.config().gate;

  // Fallback to the SPP gate when nothing was kept recently: the window
  // position itself may be wrong, and good measurements must not pay for it.
  if (!est.initialized() || !est.any_kept_since(epoch.stamp - cfg.fallback_window)) {
    GateOutcome out = gate_gnss_only(epoch, cfg);
    out.report.method = "mixed_fallback";
    out.report.elapsed_ms = ms_since(t0);
    return out;
  }

  GateOutcome out;
  out.report.epoch_index = epoch.epoch_index;
  out.report.stamp = epoch.stamp;
  out.report.method = "mixed";

  SppSolution spp;
  VelocitySolution vel;
  try {
    spp = spp_solve(epoch);
    vel = velocity_solve(epoch, spp.position_ecef);
  } catch (const std::exception& e) {
    out.report.drop_reason = e.what();
    mark_all_removed(out, epoch);
    out.report.elapsed_ms = ms_since(t0);
    return out;
  }
  out.spp = spp;
  out.velocity = vel;

  Estimator::Assembly a = est.build_problem(Estimator::GnssFactorSet::kNone, true);
  const Estimator::CandidateAttach att = est.attach_candidate_epoch(a, epoch, spp, vel);
  if (att.clock_block < 0) {
    GateOutcome fb = gate_gnss_only(epoch, cfg);
    fb.report.method = "mixed_fallback";
    fb.report.elapsed_ms = ms_since(t0);
    return fb;
  }

  SolveOptions opts;
  opts.max_iterations = est.config().gate_clone_iterations;
  const SolveReport report = solve(a.problem, opts);
  if (!report.converged()) {
    GateOutcome fb = gate_gnss_only(epoch, cfg);
    fb.report.method = "mixed_fallback";
    fb.report.drop_reason = "clone solve failed";
    fb.report.elapsed_ms = ms_since(t0);
    return fb;
  }

  const auto evals = a.problem.evaluate_factors(EvalMode::kSerial, false);
  const double sqrt_wp = std::sqrt(est.config().w_pseudorange);
  const double sqrt_wd = std::sqrt(est.config().w_doppler);
  for (const auto& [sat_id, fi] : att.pr_factors) {
    const double r = evals[fi].residual(0) / sqrt_wp;
    if (std::abs(r) > cfg.threshold_pseudorange)
      out.report.pr_removed.emplace_back(sat_id, r);
    else {
      out.report.pr_kept.emplace_back(sat_id, r);
      out.pr_kept_ids.push_back(sat_id);
    }
  }
  for (const auto& [sat_id, fi] : att.dop_factors) {
    const double r = evals[fi].residual(0) / sqrt_wd;
    if (std::abs(r) > cfg.threshold_doppler)
      out.report.dop_removed.emplace_back(sat_id, r);
    else {
      out.report.dop_kept.emplace_back(sat_id, r);
      out.dop_kept_ids.push_back(sat_id);
    }
  }

  std::set<int> pr_ids(out.pr_kept_ids.begin(), out.pr_kept_ids.end());
  if (static_cast<int>(pr_ids.size()) < min_kept(subset(epoch, pr_ids))) {
    out.report.drop_reason = "too few measurements after filtering";
    mark_all_removed(out, epoch);
  }
  out.report.elapsed_ms = ms_since(t0);
  return out;
}

std::string serialize_gate_report(const GateReport& r) {
  std::ostringstream ss;
  ss << "epoch=" << r.epoch_index << " stamp=" << r.stamp << " method=" << r.method
     << " category=" << r.category() << " dropped=" << (r.epoch_dropped ? 1 : 0);
  auto emit = [&ss](const char* name, const std::vector<std::pair<int, double>>& v) {
    ss << " " << name << "=";
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) ss << ",";
      ss << v[i].first << ":" << v[i].second;
    }
  };
  emit("pr_kept", r.pr_kept);
  emit("pr_removed", r.pr_removed);
  emit("dop_kept", r.dop_kept);
  emit("dop_removed", r.dop_removed);
  ss << " time_ms=" << r.elapsed_ms;
  if (!r.drop_reason.empty()) ss << " reason=\"" << r.drop_reason << "\"";
  return ss.str();
}

GatingRunStats gating_cost_report(const std::string& method,
                                  const std::vector<GateReport>& reports, double ate) {
  GatingRunStats s;
  s.method = method;
  s.ate = ate;
  s.calls = static_cast<int64_t>(reports.size());
  if (!reports.empty()) {
    double total = 0.0;
    for (const auto& r : reports) total += r.elapsed_ms;
    s.mean_time_ms = total / double(reports.size());
  }
  return s;
}

std::string gating_table_csv(const std::vector<GatingRunStats>& rows) {
  std::ostringstream ss;
  ss << "method,ate_m,mean_time_ms,calls\n";
  for (const auto& r : rows)
    ss << r.method << "," << r.ate << "," << r.mean_time_ms << "," << r.calls << "\n";
  return ss.str();
}

}  // namespace gvio
