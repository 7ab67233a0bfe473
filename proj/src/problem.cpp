#include "gvio/problem.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gvio {

int tangent_dim(Manifold m, int ambient_dim) {
  switch (m) {
    case Manifold::kEuclidean: return ambient_dim;
    case Manifold::kNavState: return 15;
    case Manifold::kPose: return 6;
    case Manifold::kYawTrans: return 4;
  }
  return ambient_dim;
}

VecX navstate_to_vec(const NavState& x) {
  VecX v(16);
  v.segment<3>(0) = x.p_wl_b;
  v.segment<3>(3) = x.v_wl_b;
  v.segment<4>(6) = x.q_wl_b.coeffs();  // xyzw
  v.segment<3>(10) = x.bias_accel;
  v.segment<3>(13) = x.bias_gyro;
  return v;
}

NavState vec_to_navstate(const VecX& v, double stamp) {
  NavState x;
  x.p_wl_b = v.segment<3>(0);
  x.v_wl_b = v.segment<3>(3);
  x.q_wl_b = Quat(v.segment<4>(6));
  x.bias_accel = v.segment<3>(10);
  x.bias_gyro = v.segment<3>(13);
  x.stamp = stamp;
  return x;
}

VecX pose_to_vec(const Vec3& p, const Quat& q) {
  VecX v(7);
  v.segment<3>(0) = p;
  v.segment<4>(3) = q.coeffs();
  return v;
}

VecX block_retract(Manifold m, const VecX& value, const VecX& delta) {
  switch (m) {
    case Manifold::kEuclidean:
      return value + delta;
    case Manifold::kNavState: {
      NavState x = vec_to_navstate(value);
      return navstate_to_vec(retract(x, Vec15(delta)));
    }
    case Manifold::kPose: {
      VecX out(7);
      out.segment<3>(0) = value.segment<3>(0) + delta.segment<3>(0);
      const Quat q(Eigen::Vector4d(value.segment<4>(3)));
      out.segment<4>(3) = (q * quat_exp(delta.segment<3>(3))).normalized().coeffs();
      return out;
    }
    case Manifold::kYawTrans: {
      VecX out(4);
      out(0) = wrap_angle(value(0) + delta(0));
      out.segment<3>(1) = value.segment<3>(1) + delta.segment<3>(1);
      return out;
    }
  }
  return value + delta;
}

VecX block_diff(Manifold m, const VecX& x2, const VecX& x1) {
  switch (m) {
    case Manifold::kEuclidean:
      return x2 - x1;
    case Manifold::kNavState:
      return VecX(local_diff(vec_to_navstate(x2), vec_to_navstate(x1)));
    case Manifold::kPose: {
      VecX d(6);
      d.segment<3>(0) = x2.segment<3>(0) - x1.segment<3>(0);
      const Quat q1(Eigen::Vector4d(x1.segment<4>(3)));
      const Quat q2(Eigen::Vector4d(x2.segment<4>(3)));
      d.segment<3>(3) = quat_log(q1.conjugate() * q2);
      return d;
    }
    case Manifold::kYawTrans: {
      VecX d(4);
      d(0) = wrap_angle(x2(0) - x1(0));
      d.segment<3>(1) = x2.segment<3>(1) - x1.segment<3>(1);
      return d;
    }
  }
  return x2 - x1;
}

int Problem::add_block(ParamBlock block) {
  blocks_.push_back(std::move(block));
  return static_cast<int>(blocks_.size()) - 1;
}

int Problem::add_factor(std::shared_ptr<const Factor> factor, bool active) {
  for (int id : factor->blocks()) {
    if (id < 0 || id >= num_blocks())
      throw std::invalid_argument("add_factor: unknown block id");
  }
  factors_.push_back(std::move(factor));
  active_.push_back(active ? 1 : 0);
  return static_cast<int>(factors_.size()) - 1;
}

std::vector<VecX> Problem::snapshot_values() const {
  std::vector<VecX> vals(blocks_.size());
  for (size_t i = 0; i < blocks_.size(); ++i) vals[i] = blocks_[i].value;
  return vals;
}

void Problem::apply_robust_loss(const Factor& factor, FactorEval& eval) {
  const double delta = factor.robust_delta();
  if (delta <= 0.0 || !eval.valid) return;
  const double s = eval.residual.norm();
  if (s <= delta) return;
  const double k = std::sqrt(delta / s);
  eval.residual *= k;
  for (auto& j : eval.jacobians) j *= k;
}

std::vector<FactorEval> Problem::evaluate_factors(EvalMode mode, bool with_jacobians,
                                                  const std::vector<VecX>* values) const {
  std::vector<VecX> owned;
  const std::vector<VecX>* src = values;
  if (!values) {
    owned = snapshot_values();
    src = &owned;
  }

  const int n = num_factors();
  std::vector<FactorEval> evals(n);

  auto eval_one = [&](int i) {
    if (!active_[i]) {
      evals[i].valid = false;
      return;
    }
    const Factor& f = *factors_[i];
    std::vector<const VecX*> params;
    params.reserve(f.blocks().size());
    for (int id : f.blocks()) params.push_back(&(*src)[id]);
    evals[i].jacobians.clear();
    evals[i].valid =
        f.evaluate(params, evals[i].residual, with_jacobians ? &evals[i].jacobians : nullptr);
    apply_robust_loss(f, evals[i]);
  };

  if (mode == EvalMode::kParallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (int i = 0; i < n; ++i) eval_one(i);
  } else {
    for (int i = 0; i < n; ++i) eval_one(i);
  }
  return evals;
}

double Problem::cost_of(const std::vector<FactorEval>& evals) {
  double c = 0.0;
  for (const auto& e : evals)
    if (e.valid) c += e.residual.squaredNorm();
  return c;
}

double Problem::evaluate_cost(EvalMode mode) const {
  return cost_of(evaluate_factors(mode, false));
}

}  // namespace gvio
