#pragma once

#include <optional>

#include "gvio/gnss.hpp"

namespace gvio {

class Estimator;

struct GateConfig {
  double threshold_pseudorange = 10.0;  // T^P, m
  double threshold_doppler = 3.0;       // T^D, m/s
  double fallback_window = 5.0;         // s without kept measurements -> SPP gate
};

/// Per-epoch filtering outcome; kept plus removed ids cover the observed
/// set for each measurement type.
struct GateReport {
  int64_t epoch_index = 0;
  double stamp = 0.0;
  std::string method;  // "gnss", "mixed", "mixed_fallback"
  bool epoch_dropped = false;
  std::string drop_reason;
  std::vector<std::pair<int, double>> pr_kept, pr_removed;    // (sat id, residual m)
  std::vector<std::pair<int, double>> dop_kept, dop_removed;  // (sat id, residual m/s)
  double elapsed_ms = 0.0;

  /// Fig-style category: "all" (everything removed), "partial", "none".
  std::string category() const;
};

struct GateOutcome {
  GateReport report;
  std::vector<int> pr_kept_ids, dop_kept_ids;
  std::optional<SppSolution> spp;
  std::optional<VelocitySolution> velocity;
};

/// Method 1: single point positioning + Doppler velocity determination,
/// then residual thresholding. Measurements over threshold are removed one
/// worst offender at a time with a refit in between, so a large outlier
/// cannot drag the fit enough to take healthy satellites with it. Drops the
/// whole epoch when fewer than 3 + |constellations| + 1 pseudoranges
/// survive.
GateOutcome gate_gnss_only(const RawGnssEpoch& epoch, const GateConfig& cfg);

/// Method 2: joint optimization of the window clone with only this epoch's
/// GNSS factors attached, then thresholding at the optimum. Falls back to
/// gate_gnss_only when nothing was kept in the trailing fallback window or
/// when the clone solve fails.
GateOutcome gate_mixed(const RawGnssEpoch& epoch, Estimator& estimator);

std::string serialize_gate_report(const GateReport& report);

struct GatingRunStats {
  std::string method;
  double ate = 0.0;
  double mean_time_ms = 0.0;
  int64_t calls = 0;
};

/// Mean per-call gating time plus the run's trajectory ATE.
GatingRunStats gating_cost_report(const std::string& method,
                                  const std::vector<GateReport>& reports, double ate);
std::string gating_table_csv(const std::vector<GatingRunStats>& rows);

}  // namespace gvio
