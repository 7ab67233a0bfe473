#pragma once

#include "gvio/solver.hpp"

namespace gvio {

/// Gaussian prior over retained blocks produced by Schur-complementing
/// dropped blocks out of the linearized factors. Jacobians stay frozen at
/// the linearization point; later evaluations read
///   e = residual_offset + sqrt_info * (x [-] x_lin).
struct MarginalPrior {
  std::vector<Manifold> manifolds;
  std::vector<VecX> lin_values;
  std::vector<int> tangent_offsets;
  MatX sqrt_info;
  VecX residual_offset;

  int dim() const { return static_cast<int>(residual_offset.size()); }

  /// Information sub-block for the retained block at the given index
  /// (conditional form, from sqrt_info^T sqrt_info).
  MatX information() const { return sqrt_info.transpose() * sqrt_info; }

  /// Marginal information of one retained block: Schur complement of the
  /// full prior information onto that block (complement pseudo-inverted).
  MatX marginal_information(int block_index) const;
};

/// Linearizes the listed factors at the current block values and removes
/// the drop blocks by a Schur complement. Every listed factor must touch at
/// least one drop block; drop and keep sets must be disjoint. Constant
/// blocks contribute values but no tangent columns. Eigenvalues of the
/// reduced Hessian below 1e-10 are clamped to zero when factoring.
MarginalPrior marginalize(const Problem& problem, const std::vector<int>& factor_indices,
                          const std::vector<int>& drop_blocks,
                          const std::vector<int>& keep_blocks);

/// Adapts a MarginalPrior to the factor interface; block ids give the
/// current problem's ids of the retained blocks, in prior order.
class MarginalPriorFactor : public Factor {
 public:
  MarginalPriorFactor(std::vector<int> block_ids, std::shared_ptr<const MarginalPrior> prior);

  int dim() const override { return prior_->dim(); }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "marginal_prior"; }
  bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                std::vector<MatX>* jacobians) const override;

  const MarginalPrior& prior() const { return *prior_; }

 private:
  std::vector<int> blocks_;
  std::shared_ptr<const MarginalPrior> prior_;
};

}  // namespace gvio
