#include "gvio/solver.hpp"

#include <limits>

namespace gvio {

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kGradientTol: return "gradient";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kNoProgress: return "no_progress";
  }
  return "?";
}

NormalEquations assemble_normal_equations(const Problem& problem,
                                          const std::vector<FactorEval>& evals) {
  NormalEquations ne;
  const int nb = problem.num_blocks();
  ne.offsets.assign(nb, -1);

  // Variable blocks first, eliminable (landmark) blocks last so the Schur
  // complement works on a trailing diagonal.
  int dim = 0;
  for (int i = 0; i < nb; ++i) {
    const ParamBlock& b = problem.block(i);
    if (b.constant || b.eliminable) continue;
    ne.offsets[i] = dim;
    dim += b.tangent();
  }
  for (int i = 0; i < nb; ++i) {
    const ParamBlock& b = problem.block(i);
    if (b.constant || !b.eliminable) continue;
    ne.offsets[i] = dim;
    dim += b.tangent();
  }
  ne.dim = dim;
  ne.h = MatX::Zero(dim, dim);
  ne.b = VecX::Zero(dim);

  for (int fi = 0; fi < problem.num_factors(); ++fi) {
    const FactorEval& e = evals[fi];
    if (!e.valid || !problem.factor_active(fi)) continue;
    const Factor& f = problem.factor(fi);
    const auto& ids = f.blocks();
    for (size_t a = 0; a < ids.size(); ++a) {
      const int ia = ids[a];
      if (ne.offsets[ia] < 0) continue;
      MatX ja = e.jacobians[a];
      const uint32_t mask_a = problem.block(ia).fixed_tangent_mask;
      if (mask_a) {
        for (int c = 0; c < ja.cols(); ++c)
          if (mask_a & (1u << c)) ja.col(c).setZero();
      }
      ne.b.segment(ne.offsets[ia], ja.cols()).noalias() -= ja.transpose() * e.residual;
      for (size_t bb = a; bb < ids.size(); ++bb) {
        const int ib = ids[bb];
        if (ne.offsets[ib] < 0) continue;
        MatX jb = e.jacobians[bb];
        const uint32_t mask_b = problem.block(ib).fixed_tangent_mask;
        if (mask_b) {
          for (int c = 0; c < jb.cols(); ++c)
            if (mask_b & (1u << c)) jb.col(c).setZero();
        }
        const MatX hab = ja.transpose() * jb;
        ne.h.block(ne.offsets[ia], ne.offsets[ib], hab.rows(), hab.cols()) += hab;
        if (ia != ib)
          ne.h.block(ne.offsets[ib], ne.offsets[ia], hab.cols(), hab.rows()) +=
              hab.transpose();
      }
    }
  }

  // Masked dimensions get a unit pivot so the factorization stays regular.
  for (int i = 0; i < nb; ++i) {
    const ParamBlock& b = problem.block(i);
    if (ne.offsets[i] < 0 || !b.fixed_tangent_mask) continue;
    for (int c = 0; c < b.tangent(); ++c) {
      if (b.fixed_tangent_mask & (1u << c)) {
        const int k = ne.offsets[i] + c;
        ne.h(k, k) = 1.0;
        ne.b(k) = 0.0;
      }
    }
  }
  return ne;
}

namespace {

/// Solves the damped system with the eliminable trailing block removed by a
/// Schur complement; the reduced system is Jacobi-equilibrated before the
/// LDLT so badly scaled parameters (clock seconds next to meters) do not
/// poison the factorization.
VecX schur_solve(const Problem& problem, const NormalEquations& ne, double lambda) {
  int n_dense = ne.dim;
  for (int i = 0; i < problem.num_blocks(); ++i) {
    const ParamBlock& b = problem.block(i);
    if (!b.constant && b.eliminable) n_dense -= b.tangent();
  }
  const int n_elim = ne.dim - n_dense;

  MatX h = ne.h;
  for (int i = 0; i < ne.dim; ++i) {
    h(i, i) *= (1.0 + lambda);
    if (h(i, i) < 1e-12) h(i, i) = 1e-12;
  }

  VecX delta(ne.dim);
  if (n_elim > 0) {
    const auto a = h.topLeftCorner(n_dense, n_dense);
    const auto bm = h.topRightCorner(n_dense, n_elim);
    VecX d_inv(n_elim);
    for (int i = 0; i < n_elim; ++i) d_inv(i) = 1.0 / h(n_dense + i, n_dense + i);
    const VecX b_a = ne.b.head(n_dense);
    const VecX b_d = ne.b.tail(n_elim);

    MatX a_red = a - bm * d_inv.asDiagonal() * bm.transpose();
    VecX b_red = b_a - bm * (d_inv.asDiagonal() * b_d);

    VecX scale(n_dense);
    for (int i = 0; i < n_dense; ++i)
      scale(i) = 1.0 / std::sqrt(std::max(a_red(i, i), 1e-300));
    MatX a_eq = scale.asDiagonal() * a_red * scale.asDiagonal();
    VecX x = scale.asDiagonal() * a_eq.ldlt().solve(scale.asDiagonal() * b_red).eval();
    delta.head(n_dense) = x;
    delta.tail(n_elim) = d_inv.asDiagonal() * (b_d - bm.transpose() * x);
  } else {
    VecX scale(ne.dim);
    for (int i = 0; i < ne.dim; ++i) scale(i) = 1.0 / std::sqrt(std::max(h(i, i), 1e-300));
    MatX h_eq = scale.asDiagonal() * h * scale.asDiagonal();
    delta = scale.asDiagonal() * h_eq.ldlt().solve(scale.asDiagonal() * ne.b).eval();
  }
  return delta;
}

std::vector<VecX> apply_step(const Problem& problem, const std::vector<VecX>& values,
                             const NormalEquations& ne, const VecX& delta) {
  std::vector<VecX> out = values;
  for (int i = 0; i < problem.num_blocks(); ++i) {
    if (ne.offsets[i] < 0) continue;
    const ParamBlock& b = problem.block(i);
    out[i] = block_retract(b.manifold, values[i], delta.segment(ne.offsets[i], b.tangent()));
  }
  return out;
}

bool any_new_invalid(const std::vector<FactorEval>& cur, const std::vector<FactorEval>& cand) {
  for (size_t i = 0; i < cur.size(); ++i)
    if (cur[i].valid && !cand[i].valid) return true;
  return false;
}

}  // namespace

SolveReport solve(Problem& problem, const SolveOptions& options) {
  SolveReport report;

  std::vector<VecX> values = problem.snapshot_values();
  std::vector<FactorEval> evals = problem.evaluate_factors(options.eval_mode, true, &values);
  double cost = Problem::cost_of(evals);
  report.initial_cost = cost;
  report.final_cost = cost;
  for (int i = 0; i < problem.num_factors(); ++i)
    if (problem.factor_active(i) && evals[i].valid)
      report.factor_counts[std::string(problem.factor(i).tag())]++;

  double lambda = options.init_lambda;
  int rejects = 0;

  for (int it = 0; it < options.max_iterations; ++it) {
    const NormalEquations ne = assemble_normal_equations(problem, evals);
    report.gradient_norm = ne.b.norm();
    if (report.gradient_norm < options.gradient_tol) {
      report.termination = Termination::kGradientTol;
      break;
    }

    bool accepted = false;
    while (rejects < options.max_consecutive_rejects) {
      const VecX delta = schur_solve(problem, ne, lambda);
      if (!delta.allFinite()) {
        lambda *= options.lambda_up;
        ++rejects;
        continue;
      }
      std::vector<VecX> cand = apply_step(problem, values, ne, delta);
      std::vector<FactorEval> cand_evals =
          problem.evaluate_factors(options.eval_mode, true, &cand);
      double cand_cost = Problem::cost_of(cand_evals);
      if (any_new_invalid(evals, cand_evals))
        cand_cost = std::numeric_limits<double>::infinity();

      if (cand_cost < cost) {
        const double decrease = cost - cand_cost;
        values = std::move(cand);
        evals = std::move(cand_evals);
        cost = cand_cost;
        lambda *= options.lambda_down;
        rejects = 0;
        accepted = true;
        report.iterations = it + 1;
        if (decrease < options.cost_rel_tol * std::max(cost, 1e-300)) {
          report.termination = Termination::kConverged;
          it = options.max_iterations;  // unwind
        }
        break;
      }
      lambda *= options.lambda_up;
      ++rejects;
    }
    if (!accepted) {
      report.termination = Termination::kNoProgress;
      break;
    }
    if (report.termination == Termination::kConverged) break;
  }

  report.final_cost = cost;
  for (int i = 0; i < problem.num_blocks(); ++i) problem.block(i).value = values[i];
  return report;
}

}  // namespace gvio
