// Benchmark of factor evaluation and window solves: serial reference vs the
// OpenMP path. Both produce identical normal equations (per-factor results
// are scattered in a fixed order), so the comparison is timing only.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gvio/app.hpp"

using namespace gvio;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Estimator build_loaded_estimator(int window, int landmarks) {
  ScenarioConfig sc;
  sc.duration = 60.0;
  sc.n_landmarks = landmarks;
  sc.seed = 7;
  GroundTruth gt(sc);
  Rng rng(sc.seed);
  const auto imu = synth_imu(gt, sc, rng);

  EstimatorConfig cfg;
  cfg.window_size = window;
  cfg.lever_arm = sc.lever_arm;
  cfg.gravity = sc.gravity;
  cfg.extrinsics_init = sc.extrinsics_true;
  Estimator est(cfg);
  NavState x0 = gt.nav_state(0.0);
  est.set_initial_state(x0);

  const double dt = 1.0 / sc.cam_rate;
  size_t lo = 0;
  double prev = 0.0;
  for (int k = 0; k * dt <= 30.0; ++k) {
    const double t = k * dt;
    FrameInput f;
    f.stamp = t;
    f.features = synth_features(gt, sc, t, rng);
    std::vector<ImuSample> batch;
    if (k > 0) {
      while (lo < imu.size() && imu[lo].stamp < prev - 1e-9) ++lo;
      for (size_t i = lo; i < imu.size() && imu[i].stamp <= t + 1e-9; ++i)
        batch.push_back(imu[i]);
    }
    est.process_frame(f, batch, {});
    prev = t;
  }
  return est;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not available; both lanes run serially\n");
#endif

  Estimator est = build_loaded_estimator(20, 1200);
  auto assembly = est.build_problem(Estimator::GnssFactorSet::kAll, true);
  Problem& problem = assembly.problem;
  std::printf("problem: %d blocks, %d factors\n", problem.num_blocks(), problem.num_factors());

  constexpr int kReps = 200;
  double cost_serial = 0.0, cost_parallel = 0.0;

  auto t0 = Clock::now();
  for (int r = 0; r < kReps; ++r) {
    auto evals = problem.evaluate_factors(EvalMode::kSerial, true);
    cost_serial = Problem::cost_of(evals);
  }
  const double ms_serial = ms_since(t0) / kReps;

  t0 = Clock::now();
  for (int r = 0; r < kReps; ++r) {
    auto evals = problem.evaluate_factors(EvalMode::kParallel, true);
    cost_parallel = Problem::cost_of(evals);
  }
  const double ms_parallel = ms_since(t0) / kReps;

  std::printf("evaluate+jacobians: serial %.3f ms, parallel %.3f ms, speedup %.2fx\n",
              ms_serial, ms_parallel, ms_serial / ms_parallel);
  std::printf("cost identical: %s (%.12e vs %.12e)\n",
              cost_serial == cost_parallel ? "yes" : "NO", cost_serial, cost_parallel);

  SolveOptions opts;
  opts.max_iterations = 5;

  for (EvalMode mode : {EvalMode::kSerial, EvalMode::kParallel}) {
    auto a = est.build_problem(Estimator::GnssFactorSet::kAll, true);
    opts.eval_mode = mode;
    t0 = Clock::now();
    const SolveReport rep = solve(a.problem, opts);
    std::printf("full solve (%s): %.1f ms, cost %.3e -> %.3e, %d iterations\n",
                mode == EvalMode::kSerial ? "serial" : "parallel", ms_since(t0),
                rep.initial_cost, rep.final_cost, rep.iterations);
  }
  return 0;
}
