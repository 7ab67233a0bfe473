#include <doctest.h>

#include "gvio/factors.hpp"
#include "test_support.hpp"

using namespace gvio;

namespace {

class QuadraticFactor : public Factor {
 public:
  QuadraticFactor(int block, double target) : blocks_{block}, target_(target) {}
  int dim() const override { return 1; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "quadratic"; }
  bool evaluate(const std::vector<const VecX*>& p, VecX& r,
                std::vector<MatX>* j) const override {
    r.resize(1);
    r(0) = (*p[0])(0) - target_;
    if (j) {
      j->resize(1);
      (*j)[0] = MatX::Ones(1, 1);
    }
    return true;
  }

 private:
  std::vector<int> blocks_;
  double target_;
};

/// r = x_b - x_a - d (odometry-style coupling between scalar blocks)
class DiffFactor : public Factor {
 public:
  DiffFactor(int a, int b, double d, double w = 1.0) : blocks_{a, b}, d_(d), w_(w) {}
  int dim() const override { return 1; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "diff"; }
  bool evaluate(const std::vector<const VecX*>& p, VecX& r,
                std::vector<MatX>* j) const override {
    r.resize(1);
    r(0) = w_ * ((*p[1])(0) - (*p[0])(0) - d_);
    if (j) {
      j->resize(2);
      (*j)[0] = MatX::Constant(1, 1, -w_);
      (*j)[1] = MatX::Constant(1, 1, w_);
    }
    return true;
  }

 private:
  std::vector<int> blocks_;
  double d_, w_;
};

ParamBlock scalar_block(double v) {
  ParamBlock b;
  b.value = VecX::Constant(1, v);
  return b;
}

// Small bundle-adjustment problem exercising manifolds, the landmark
// elimination and the reference solver on the same factor objects.
struct BaProblem {
  Problem problem;
  std::vector<int> pose_ids;
  std::vector<int> lm_ids;
};

BaProblem make_ba_problem(uint64_t seed, bool permute) {
  Rng rng(seed);
  BaProblem ba;

  const int n_poses = 4, n_lms = 12;
  std::vector<NavState> poses(n_poses);
  for (int i = 0; i < n_poses; ++i) {
    poses[i].p_wl_b = Vec3(i * 1.0, 0.2 * i, 0.0);
    poses[i].q_wl_b = quat_exp(Vec3(0, 0.02 * i, 0.05 * i));
  }
  Extrinsics extr;  // identity camera
  std::vector<Vec3> lms(n_lms);
  for (int i = 0; i < n_lms; ++i)
    lms[i] = Vec3(rng.uniform(-3, 6), rng.uniform(-3, 3), rng.uniform(4, 12));

  // observations from ground truth
  auto project = [&](const NavState& x, const Vec3& p_w) {
    const Vec3 p_c = x.q_wl_b.toRotationMatrix().transpose() * (p_w - x.p_wl_b);
    return Vec2(p_c.x() / p_c.z(), p_c.y() / p_c.z());
  };

  // blocks: optionally permuted insertion order
  int extr_id = -1;
  std::vector<int> order(n_poses);
  for (int i = 0; i < n_poses; ++i) order[i] = i;
  if (permute) std::reverse(order.begin(), order.end());

  std::vector<NavState> noisy(n_poses);
  for (int k = 0; k < n_poses; ++k) {
    noisy[k] = poses[k];
    if (k != 0) {
      noisy[k].p_wl_b += rng.gauss_vec3(0.05);
      noisy[k].q_wl_b = (noisy[k].q_wl_b * quat_exp(rng.gauss_vec3(0.01))).normalized();
    }
  }
  ba.pose_ids.resize(n_poses);
  for (int k : order) {
    ParamBlock b;
    b.value = navstate_to_vec(noisy[k]);
    b.manifold = Manifold::kNavState;
    if (k == 0) b.fixed_tangent_mask = 0x3F;  // gauge
    ba.pose_ids[k] = ba.problem.add_block(std::move(b));
  }
  {
    ParamBlock b;
    b.value = pose_to_vec(extr.translation_c_in_b, extr.rotation_b_from_c);
    b.manifold = Manifold::kPose;
    b.constant = true;
    extr_id = ba.problem.add_block(std::move(b));
  }
  ba.lm_ids.resize(n_lms);
  for (int i = 0; i < n_lms; ++i) {
    const Vec3 p_c0 = poses[0].q_wl_b.toRotationMatrix().transpose() * (lms[i] - poses[0].p_wl_b);
    ParamBlock b;
    b.value = VecX::Constant(1, 1.0 / p_c0.z() * rng.uniform(0.8, 1.2));
    b.eliminable = true;
    ba.lm_ids[i] = ba.problem.add_block(std::move(b));
  }
  for (int i = 0; i < n_lms; ++i) {
    const Vec2 host_uv = project(poses[0], lms[i]);
    for (int k = 1; k < n_poses; ++k) {
      const Vec2 uv = project(poses[k], lms[i]);
      ba.problem.add_factor(std::make_shared<ReprojectionFactor>(
          ba.pose_ids[0], ba.pose_ids[k], extr_id, ba.lm_ids[i], host_uv, uv, 1.0 / 460.0,
          0.0));
    }
  }
  return ba;
}

}  // namespace

TEST_SUITE_BEGIN("solver");

TEST_CASE("zero-residual start terminates immediately") {
  Problem p;
  const int x = p.add_block(scalar_block(3.0));
  p.add_factor(std::make_shared<QuadraticFactor>(x, 3.0));
  const SolveReport rep = solve(p);
  CHECK(rep.iterations == 0);
  CHECK(rep.initial_cost == 0.0);
  CHECK(rep.final_cost == 0.0);
  CHECK(rep.termination == Termination::kGradientTol);
}

TEST_CASE("1-D quadratic converges to the target") {
  Problem p;
  const int x = p.add_block(scalar_block(0.0));
  p.add_factor(std::make_shared<QuadraticFactor>(x, 3.0));
  const SolveReport rep = solve(p);
  CHECK(std::abs(p.block(x).value(0) - 3.0) < 1e-10);
  CHECK(rep.final_cost <= rep.initial_cost);
}

TEST_CASE("evaluate_cost") {
  Problem p;
  CHECK(p.evaluate_cost() == 0.0);
  const int x = p.add_block(scalar_block(1.0));
  p.add_factor(std::make_shared<QuadraticFactor>(x, 4.0));
  CHECK(p.evaluate_cost() == doctest::Approx(9.0));

  // independent summation oracle over several factors
  p.add_factor(std::make_shared<QuadraticFactor>(x, -1.0));
  const auto evals = p.evaluate_factors(EvalMode::kSerial, false);
  double expect = 0.0;
  for (const auto& e : evals) expect += e.residual.squaredNorm();
  CHECK(p.evaluate_cost() == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("bundle adjustment matches the dense reference solver") {
  BaProblem a = make_ba_problem(42, false);
  BaProblem b = make_ba_problem(42, false);

  const SolveReport rep = solve(a.problem);
  const double ref_cost = gvio::testing::dense_reference_solve(b.problem);
  CHECK(rep.final_cost ==
        doctest::Approx(ref_cost).epsilon(std::max(1e-8, 1e-8 * std::abs(ref_cost))));
  CHECK(rep.final_cost <= rep.initial_cost);
  CHECK(rep.final_cost < 1e-12);  // noiseless observations admit a perfect fit
}

TEST_CASE("solution is invariant to block insertion order") {
  BaProblem a = make_ba_problem(7, false);
  BaProblem b = make_ba_problem(7, true);
  solve(a.problem);
  solve(b.problem);
  for (size_t k = 0; k < a.pose_ids.size(); ++k) {
    const VecX va = a.problem.block(a.pose_ids[k]).value;
    const VecX vb = b.problem.block(b.pose_ids[k]).value;
    CHECK((va - vb).norm() < 1e-8);
  }
}

TEST_CASE("serial and parallel evaluation agree bitwise") {
  BaProblem a = make_ba_problem(3, false);
  const auto es = a.problem.evaluate_factors(EvalMode::kSerial, true);
  const auto ep = a.problem.evaluate_factors(EvalMode::kParallel, true);
  REQUIRE(es.size() == ep.size());
  for (size_t i = 0; i < es.size(); ++i) {
    CHECK(es[i].valid == ep[i].valid);
    if (!es[i].valid) continue;
    CHECK(es[i].residual == ep[i].residual);
    for (size_t j = 0; j < es[i].jacobians.size(); ++j)
      CHECK(es[i].jacobians[j] == ep[i].jacobians[j]);
  }
  const NormalEquations ns = assemble_normal_equations(a.problem, es);
  const NormalEquations np = assemble_normal_equations(a.problem, ep);
  CHECK(ns.h == np.h);
  CHECK(ns.b == np.b);

  SolveOptions so;
  so.eval_mode = EvalMode::kSerial;
  BaProblem s1 = make_ba_problem(3, false);
  const SolveReport r1 = solve(s1.problem, so);
  so.eval_mode = EvalMode::kParallel;
  BaProblem s2 = make_ba_problem(3, false);
  const SolveReport r2 = solve(s2.problem, so);
  CHECK(r1.final_cost == r2.final_cost);
}

TEST_CASE("chain problem converges from a poor start") {
  Problem p;
  std::vector<int> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(p.add_block(scalar_block(0.0)));
  p.add_factor(std::make_shared<QuadraticFactor>(ids[0], 1.0));
  for (int i = 0; i + 1 < 10; ++i)
    p.add_factor(std::make_shared<DiffFactor>(ids[i], ids[i + 1], 2.0));
  const SolveReport rep = solve(p);
  CHECK(rep.final_cost < 1e-16);
  for (int i = 0; i < 10; ++i)
    CHECK(p.block(ids[i]).value(0) == doctest::Approx(1.0 + 2.0 * i).epsilon(1e-9));
}

TEST_CASE("inactive factors do not contribute") {
  Problem p;
  const int x = p.add_block(scalar_block(0.0));
  p.add_factor(std::make_shared<QuadraticFactor>(x, 3.0));
  const int off = p.add_factor(std::make_shared<QuadraticFactor>(x, 100.0));
  p.set_factor_active(off, false);
  solve(p);
  CHECK(std::abs(p.block(x).value(0) - 3.0) < 1e-10);
}

TEST_SUITE_END();
