#pragma once

#include <map>

#include "gvio/problem.hpp"

namespace gvio {

struct SolveOptions {
  int max_iterations = 10;
  double cost_rel_tol = 1e-8;
  double gradient_tol = 1e-10;
  double init_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  int max_consecutive_rejects = 20;
  EvalMode eval_mode = EvalMode::kParallel;
};

enum class Termination {
  kConverged,        // relative cost decrease below tolerance
  kGradientTol,      // gradient norm below tolerance
  kMaxIterations,
  kNoProgress        // damping exhausted without an acceptable step
};

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::kMaxIterations;
  double gradient_norm = 0.0;
  std::map<std::string, int> factor_counts;  // active+valid factors by tag
  bool converged() const { return termination != Termination::kNoProgress; }
};

/// Levenberg-Marquardt with manifold retraction. Landmark blocks (flagged
/// eliminable) are removed from the normal equations by a Schur complement
/// before the reduced system is factorized.
SolveReport solve(Problem& problem, const SolveOptions& options = {});

/// Builds the damped normal equations at the given evaluation and returns
/// the tangent step for every block (zero for constants). Exposed for the
/// marginalization and gating paths that need single linear solves.
struct NormalEquations {
  MatX h;
  VecX b;  // -J^T r
  std::vector<int> offsets;  // tangent offset per block, -1 for constants
  int dim = 0;
};

NormalEquations assemble_normal_equations(const Problem& problem,
                                          const std::vector<FactorEval>& evals);

const char* termination_name(Termination t);

}  // namespace gvio
