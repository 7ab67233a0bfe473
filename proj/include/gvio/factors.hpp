#pragma once

#include "gvio/geodesy.hpp"
#include "gvio/gnss.hpp"
#include "gvio/preintegration.hpp"
#include "gvio/problem.hpp"

namespace gvio {

/// Anchor-frame binding of one GNSS epoch: preintegration from the host
/// image to the measurement moment plus the body rate there.
struct GnssBinding {
  Preintegration preint;   // image k -> m(e)
  Vec3 gyro_at_epoch = Vec3::Zero();
  LeverArm lever;
};

/// Pseudorange residual: predicted range through the local->ENU->ECEF chain
/// (receiver position extrapolated to the epoch moment) against the
/// measured pseudorange. Blocks: [nav_k, alignment, clock].
class PseudorangeFactor : public Factor {
 public:
  PseudorangeFactor(int nav_id, int align_id, int clock_id, EnuAnchor anchor,
                    SatelliteState sat, SatObs obs, GnssBinding binding,
                    GravityVec gravity, int clock_slot, double weight);

  int dim() const override { return 1; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "pseudorange"; }
  bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                std::vector<MatX>* jacobians) const override;

 private:
  std::vector<int> blocks_;
  EnuAnchor anchor_;
  SatelliteState sat_;
  SatObs obs_;
  GnssBinding binding_;
  GravityVec gravity_;
  int clock_slot_;
  double sqrt_w_;
};

/// Doppler-shift residual against -lambda*D. Blocks: [nav_k, alignment,
/// clock]; the alignment translation enters only through the line of sight.
class DopplerFactor : public Factor {
 public:
  DopplerFactor(int nav_id, int align_id, int clock_id, EnuAnchor anchor,
                SatelliteState sat, SatObs obs, GnssBinding binding, GravityVec gravity,
                int clock_slot, double weight);

  int dim() const override { return 1; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "doppler"; }
  bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                std::vector<MatX>* jacobians) const override;

  /// Residual-only path with an externally fixed line of sight; used to
  /// check that the alignment translation has no other entry point.
  double residual_with_fixed_los(const std::vector<const VecX*>& params,
                                 const Vec3& los_ecef) const;

 private:
  std::vector<int> blocks_;
  EnuAnchor anchor_;
  SatelliteState sat_;
  SatObs obs_;
  GnssBinding binding_;
  GravityVec gravity_;
  int clock_slot_;
  double sqrt_w_;
};

/// Two-frame inverse-depth reprojection on the unit plane with a Huber loss
/// on the whitened residual. Blocks: [nav_host, nav_target, extrinsics,
/// inverse_depth].
class ReprojectionFactor : public Factor {
 public:
  ReprojectionFactor(int nav_host_id, int nav_target_id, int extrinsics_id,
                     int landmark_id, Vec2 host_uv, Vec2 target_uv, double sigma,
                     double huber_delta = 1.0);

  int dim() const override { return 2; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "reprojection"; }
  bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                std::vector<MatX>* jacobians) const override;
  double robust_delta() const override { return huber_delta_; }

 private:
  std::vector<int> blocks_;
  Vec2 host_uv_, target_uv_;
  double inv_sigma_;
  double huber_delta_;
};

/// 15-dim preintegration residual between consecutive nav states, weighted
/// by the inverse square root of the propagated covariance.
class ImuFactor : public Factor {
 public:
  ImuFactor(int nav_i_id, int nav_j_id, Preintegration pi, GravityVec gravity);

  int dim() const override { return 15; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "imu"; }
  bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                std::vector<MatX>* jacobians) const override;

  const Preintegration& preintegration() const { return pi_; }

 private:
  std::vector<int> blocks_;
  Preintegration pi_;
  GravityVec gravity_;
  Mat15 sqrt_info_;
};

/// Gaussian prior on the 4-DoF world alignment; the yaw component wraps.
class AlignmentPriorFactor : public Factor {
 public:
  AlignmentPriorFactor(int align_id, const WorldAlignment& prior_value,
                       const Vec4& sqrt_weight_diag);

  int dim() const override { return 4; }
  const std::vector<int>& blocks() const override { return blocks_; }
  std::string_view tag() const override { return "alignment_prior"; }
  bool evaluate(const std::vector<const VecX*>& params, VecX& residual,
                std::vector<MatX>* jacobians) const override;

 private:
  std::vector<int> blocks_;
  double prior_yaw_;
  Vec3 prior_translation_;
  Vec4 sqrt_weight_;
};

/// Inverse square root of a covariance; falls back to a 1e-12 diagonal
/// regularization when the matrix is not positive definite.
Mat15 sqrt_information_15(const Mat15& covariance);

}  // namespace gvio
