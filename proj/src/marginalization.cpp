#include "gvio/marginalization.hpp"

#include <set>

namespace gvio {

namespace {

/// Symmetric pseudo-inverse with eigenvalues below tol clamped to zero.
MatX sym_pinv(const MatX& m, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (m + m.transpose()));
  const VecX& s = eig.eigenvalues();
  VecX inv = VecX::Zero(s.size());
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

MatX MarginalPrior::marginal_information(int block_index) const {
  const MatX h = information();
  const int off = tangent_offsets[block_index];
  const int dim = tangent_dim(manifolds[block_index], lin_values[block_index].size());
  const int n = static_cast<int>(h.rows());

  // Permute the block to the front, Schur-complement the rest away.
  std::vector<int> order;
  for (int i = 0; i < dim; ++i) order.push_back(off + i);
  for (int i = 0; i < n; ++i)
    if (i < off || i >= off + dim) order.push_back(i);
  MatX hp(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) hp(i, j) = h(order[i], order[j]);
  const MatX haa = hp.topLeftCorner(dim, dim);
  const MatX hab = hp.topRightCorner(dim, n - dim);
  const MatX hbb = hp.bottomRightCorner(n - dim, n - dim);
  return haa - hab * sym_pinv(hbb) * hab.transpose();
}

MarginalPrior marginalize(const Problem& problem, const std::vector<int>& factor_indices,
                          const std::vector<int>& drop_blocks,
                          const std::vector<int>& keep_blocks) {
  std::set<int> drop_set(drop_blocks.begin(), drop_blocks.end());
  std::set<int> keep_set(keep_blocks.begin(), keep_blocks.end());
  for (int id : drop_blocks)
    if (keep_set.count(id))
      throw std::invalid_argument("marginalize: drop and keep sets overlap");

  // Tangent layout: keep blocks first (in the given order), then drops.
  std::vector<int> offsets(problem.num_blocks(), -1);
  int n_keep = 0;
  for (int id : keep_blocks) {
    const ParamBlock& b = problem.block(id);
    if (b.constant) continue;
    offsets[id] = n_keep;
    n_keep += b.tangent();
  }
  int total = n_keep;
  for (int id : drop_blocks) {
    const ParamBlock& b = problem.block(id);
    if (b.constant) continue;
    offsets[id] = total;
    total += b.tangent();
  }

  MatX h = MatX::Zero(total, total);
  VecX g = VecX::Zero(total);

  const std::vector<VecX> values = problem.snapshot_values();
  for (int fi : factor_indices) {
    const Factor& f = problem.factor(fi);
    bool touches_drop = false;
    for (int id : f.blocks())
      if (drop_set.count(id)) touches_drop = true;
    if (!touches_drop)
      throw std::invalid_argument("marginalize: factor touches no drop block");

    std::vector<const VecX*> params;
    for (int id : f.blocks()) params.push_back(&values[id]);
    FactorEval e;
    e.valid = f.evaluate(params, e.residual, &e.jacobians);
    if (!e.valid) continue;
    Problem::apply_robust_loss(f, e);

    const auto& ids = f.blocks();
    for (size_t a = 0; a < ids.size(); ++a) {
      if (offsets[ids[a]] < 0) continue;
      MatX ja = e.jacobians[a];
      const uint32_t mask_a = problem.block(ids[a]).fixed_tangent_mask;
      if (mask_a)
        for (int c = 0; c < ja.cols(); ++c)
          if (mask_a & (1u << c)) ja.col(c).setZero();
      g.segment(offsets[ids[a]], ja.cols()).noalias() += ja.transpose() * e.residual;
      for (size_t bb = a; bb < ids.size(); ++bb) {
        if (offsets[ids[bb]] < 0) continue;
        MatX jb = e.jacobians[bb];
        const uint32_t mask_b = problem.block(ids[bb]).fixed_tangent_mask;
        if (mask_b)
          for (int c = 0; c < jb.cols(); ++c)
            if (mask_b & (1u << c)) jb.col(c).setZero();
        const MatX hab = ja.transpose() * jb;
        h.block(offsets[ids[a]], offsets[ids[bb]], hab.rows(), hab.cols()) += hab;
        if (ids[a] != ids[bb])
          h.block(offsets[ids[bb]], offsets[ids[a]], hab.cols(), hab.rows()) +=
              hab.transpose();
      }
    }
  }

  const int n_drop = total - n_keep;
  MatX h_red = h.topLeftCorner(n_keep, n_keep);
  VecX g_red = g.head(n_keep);
  if (n_drop > 0) {
    const MatX h_kd = h.topRightCorner(n_keep, n_drop);
    const MatX h_dd_inv = sym_pinv(h.bottomRightCorner(n_drop, n_drop));
    h_red -= h_kd * h_dd_inv * h_kd.transpose();
    g_red -= h_kd * (h_dd_inv * g.tail(n_drop));
  }

  // Factor the reduced information: sqrt_info = S^1/2 V^T with small
  // eigenvalues clamped to zero, offset chosen so that the prior reproduces
  // the marginal gradient at the linearization point.
  Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (h_red + h_red.transpose()));
  VecX s = eig.eigenvalues();
  VecX s_sqrt = VecX::Zero(s.size());
  VecX s_inv_sqrt = VecX::Zero(s.size());
  for (int i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-10) {
      s_sqrt(i) = std::sqrt(s(i));
      s_inv_sqrt(i) = 1.0 / s_sqrt(i);
    }
  }

  MarginalPrior prior;
  prior.sqrt_info = s_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  prior.residual_offset = s_inv_sqrt.asDiagonal() * (eig.eigenvectors().transpose() * g_red);
  for (int id : keep_blocks) {
    const ParamBlock& b = problem.block(id);
    if (b.constant) continue;
    prior.manifolds.push_back(b.manifold);
    prior.lin_values.push_back(b.value);
    prior.tangent_offsets.push_back(offsets[id]);
  }
  return prior;
}

MarginalPriorFactor::MarginalPriorFactor(std::vector<int> block_ids,
                                         std::shared_ptr<const MarginalPrior> prior)
    : blocks_(std::move(block_ids)), prior_(std::move(prior)) {
  if (blocks_.size() != prior_->manifolds.size())
    throw std::invalid_argument("MarginalPriorFactor: block count mismatch");
}

bool MarginalPriorFactor::evaluate(const std::vector<const VecX*>& params, VecX& residual,
                                   std::vector<MatX>* jacobians) const {
  VecX dx = VecX::Zero(prior_->dim());
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const VecX d = block_diff(prior_->manifolds[i], *params[i], prior_->lin_values[i]);
    dx.segment(prior_->tangent_offsets[i], d.size()) = d;
  }
  residual = prior_->residual_offset + prior_->sqrt_info * dx;
  if (jacobians) {
    jacobians->resize(blocks_.size());
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const int td = tangent_dim(prior_->manifolds[i],
                                 static_cast<int>(prior_->lin_values[i].size()));
      (*jacobians)[i] = prior_->sqrt_info.middleCols(prior_->tangent_offsets[i], td);
    }
  }
  return true;
}

}  // namespace gvio
