#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gvio/state.hpp"

namespace gvio {

/// Manifold attached to a parameter block. Euclidean blocks have equal
/// ambient and tangent dimension; NavState is 16 ambient / 15 tangent with
/// the quaternion stored as xyzw at offset 6; Pose is 7/6; YawTrans is a
/// wrapped angle plus translation (4/4).
enum class Manifold { kEuclidean, kNavState, kPose, kYawTrans };

int tangent_dim(Manifold m, int ambient_dim);
VecX block_retract(Manifold m, const VecX& value, const VecX& delta);
VecX block_diff(Manifold m, const VecX& x2, const VecX& x1);

// NavState <-> ambient vector packing [p, v, q(xyzw), ba, bg].
VecX navstate_to_vec(const NavState& x);
NavState vec_to_navstate(const VecX& v, double stamp = 0.0);
VecX pose_to_vec(const Vec3& p, const Quat& q);

struct ParamBlock {
  VecX value;
  Manifold manifold = Manifold::kEuclidean;
  bool constant = false;
  bool eliminable = false;          // Schur-eliminated first (landmarks)
  uint32_t fixed_tangent_mask = 0;  // per-dim gauge fixing

  int ambient() const { return static_cast<int>(value.size()); }
  int tangent() const { return tangent_dim(manifold, ambient()); }
};

/// One evaluated factor: weighted residual and one Jacobian per involved
/// block, columns in tangent coordinates.
struct FactorEval {
  VecX residual;
  std::vector<MatX> jacobians;
  bool valid = true;
};

class Factor {
 public:
  virtual ~Factor() = default;
  virtual int dim() const = 0;
  virtual const std::vector<int>& blocks() const = 0;
  virtual std::string_view tag() const = 0;
  /// Returns false when the factor cannot be evaluated at this point (e.g.
  /// a landmark behind the camera); such factors are skipped for the
  /// iteration. jacobians may be null for residual-only evaluation.
  virtual bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                        std::vector<MatX>* jacobians) const = 0;
  /// Huber threshold on the whitened residual norm; 0 disables the loss.
  /// The loss is applied by the evaluation machinery, not by evaluate(), so
  /// analytic Jacobians stay exact.
  virtual double robust_delta() const { return 0.0; }
};

enum class EvalMode { kSerial, kParallel };

/// Factor-graph container over ordered parameter blocks. Assembly order is
/// fixed by insertion, so serial and parallel evaluation produce identical
/// normal equations.
class Problem {
 public:
  int add_block(ParamBlock block);
  int add_factor(std::shared_ptr<const Factor> factor, bool active = true);

  ParamBlock& block(int id) { return blocks_[id]; }
  const ParamBlock& block(int id) const { return blocks_[id]; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  const Factor& factor(int idx) const { return *factors_[idx]; }
  std::shared_ptr<const Factor> factor_ptr(int idx) const { return factors_[idx]; }
  int num_factors() const { return static_cast<int>(factors_.size()); }
  void set_factor_active(int idx, bool active) { active_[idx] = active; }
  bool factor_active(int idx) const { return active_[idx]; }

  std::vector<VecX> snapshot_values() const;

  /// Evaluates every active factor at the given values (default: current
  /// block values). Inactive factors yield empty evals.
  std::vector<FactorEval> evaluate_factors(EvalMode mode, bool with_jacobians,
                                           const std::vector<VecX>* values = nullptr) const;

  /// Sum of squared weighted residuals over active, valid factors.
  double evaluate_cost(EvalMode mode = EvalMode::kSerial) const;
  static double cost_of(const std::vector<FactorEval>& evals);

  /// Rescales residual and Jacobians by sqrt(delta/|r|) above the Huber
  /// threshold.
  static void apply_robust_loss(const Factor& factor, FactorEval& eval);

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<std::shared_ptr<const Factor>> factors_;
  std::vector<char> active_;
};

}  // namespace gvio
