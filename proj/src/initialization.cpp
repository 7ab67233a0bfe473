#include "gvio/initialization.hpp"

namespace gvio {

std::optional<EcefVec> select_reference(const std::vector<EcefVec>& spp_fixes) {
  if (spp_fixes.size() < 3) return std::nullopt;
  return spp_fixes[2];
}

std::vector<std::pair<size_t, Vec3>> interpolate_positions(
    const std::vector<TimedPosition>& traj, const std::vector<double>& query_stamps) {
  std::vector<std::pair<size_t, Vec3>> out;
  if (traj.size() < 2) return out;
  for (size_t qi = 0; qi < query_stamps.size(); ++qi) {
    const double t = query_stamps[qi];
    if (t < traj.front().stamp || t > traj.back().stamp) continue;
    size_t hi = 1;
    while (hi + 1 < traj.size() && traj[hi].stamp < t) ++hi;
    const auto& a = traj[hi - 1];
    const auto& b = traj[hi];
    const double span = b.stamp - a.stamp;
    const double w = span > 0.0 ? (t - a.stamp) / span : 0.0;
    out.emplace_back(qi, a.position + w * (b.position - a.position));
  }
  return out;
}

AlignmentEstimate align_5dof(const std::vector<Vec3>& enu_pts,
                             const std::vector<Vec3>& local_pts) {
  if (enu_pts.size() != local_pts.size())
    throw std::invalid_argument("align_5dof: size mismatch");
  const size_t n = enu_pts.size();
  if (n < 3) throw std::invalid_argument("align_5dof: need at least 3 correspondences");

  Vec3 cq = Vec3::Zero(), cp = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    cq += enu_pts[i];
    cp += local_pts[i];
  }
  cq /= double(n);
  cp /= double(n);

  double sxx = 0.0, sxy = 0.0, pp = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 q = enu_pts[i] - cq;
    const Vec3 p = local_pts[i] - cp;
    sxx += p.x() * q.x() + p.y() * q.y();
    sxy += p.x() * q.y() - p.y() * q.x();
    pp += p.squaredNorm();
  }
  if (pp < 1e-12) throw std::invalid_argument("align_5dof: degenerate local points");

  AlignmentEstimate est;
  est.yaw = std::atan2(sxy, sxx);
  const Mat3 r = rot_z(est.yaw);
  double dot = 0.0;
  for (size_t i = 0; i < n; ++i)
    dot += (enu_pts[i] - cq).dot(r * (local_pts[i] - cp));
  est.scale = dot / pp;
  est.translation = cq - est.scale * r * cp;

  double sq = 0.0;
  for (size_t i = 0; i < n; ++i)
    sq += (enu_pts[i] - est.scale * r * local_pts[i] - est.translation).squaredNorm();
  est.rms = std::sqrt(sq / double(n));
  return est;
}

}  // namespace gvio
