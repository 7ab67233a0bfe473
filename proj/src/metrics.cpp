#include "gvio/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gvio {

std::vector<std::pair<size_t, size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                 double max_dt) {
  std::vector<std::pair<size_t, size_t>> pairs;
  if (gt.empty()) return pairs;
  size_t j = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    while (j + 1 < gt.size() && gt[j + 1].stamp <= est[i].stamp) ++j;
    size_t best = j;
    if (j + 1 < gt.size() &&
        std::abs(gt[j + 1].stamp - est[i].stamp) < std::abs(gt[j].stamp - est[i].stamp))
      best = j + 1;
    if (std::abs(gt[best].stamp - est[i].stamp) <= max_dt) pairs.emplace_back(i, best);
  }
  return pairs;
}

RigidTransform align_rigid(const Trajectory& est, const Trajectory& gt) {
  const auto pairs = associate(est, gt);
  if (pairs.size() < 3) throw std::runtime_error("align_rigid: fewer than 3 associated pairs");

  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (const auto& [i, j] : pairs) {
    ce += est[i].position;
    cg += gt[j].position;
  }
  ce /= double(pairs.size());
  cg /= double(pairs.size());

  Mat3 w = Mat3::Zero();
  for (const auto& [i, j] : pairs)
    w += (gt[j].position - cg) * (est[i].position - ce).transpose();
  Eigen::JacobiSVD<Mat3> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  RigidTransform t;
  t.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  t.translation = cg - t.rotation * ce;
  return t;
}

Trajectory apply_transform(const Trajectory& traj, const RigidTransform& t) {
  Trajectory out = traj;
  const Quat qr(t.rotation);
  for (auto& p : out) {
    p.position = t.rotation * p.position + t.translation;
    p.rotation = (qr * p.rotation).normalized();
  }
  return out;
}

double compute_ate(const Trajectory& aligned_est, const Trajectory& gt) {
  const auto pairs = associate(aligned_est, gt);
  if (pairs.empty()) return 0.0;
  double sq = 0.0;
  for (const auto& [i, j] : pairs)
    sq += (aligned_est[i].position - gt[j].position).squaredNorm();
  return std::sqrt(sq / double(pairs.size()));
}

double compute_completeness(const std::vector<double>& est_stamps, double t_begin,
                            double t_end) {
  if (t_end <= t_begin) throw std::invalid_argument("compute_completeness: empty span");
  std::vector<double> sorted = est_stamps;
  std::sort(sorted.begin(), sorted.end());
  const int64_t n = static_cast<int64_t>(std::floor((t_end - t_begin) / 0.1 + 1e-9)) + 1;
  int64_t hit = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = t_begin + 0.1 * double(i);
    auto it = std::lower_bound(sorted.begin(), sorted.end(), t - 3.0 - 1e-9);
    if (it != sorted.end() && *it <= t + 3.0 + 1e-9) ++hit;
  }
  return double(hit) / double(n);
}

void compute_mae(const Trajectory& aligned_est, const Trajectory& gt, Vec3* mae_translation,
                 Vec3* mae_rotation_deg) {
  const auto pairs = associate(aligned_est, gt);
  Vec3 mt = Vec3::Zero(), mr = Vec3::Zero();
  if (!pairs.empty()) {
    for (const auto& [i, j] : pairs) {
      mt += (aligned_est[i].position - gt[j].position).cwiseAbs();
      const Mat3 err = gt[j].rotation.toRotationMatrix().transpose() *
                       aligned_est[i].rotation.toRotationMatrix();
      // ZYX Euler angles of the error rotation; reported as (Z, Y, X).
      const Vec3 zyx = err.eulerAngles(2, 1, 0);
      // eulerAngles can return the far branch; re-wrap each component.
      mr += Vec3(std::abs(wrap_angle(zyx(0))), std::abs(wrap_angle(zyx(1))),
                 std::abs(wrap_angle(zyx(2))));
    }
    mt /= double(pairs.size());
    mr = mr * (180.0 / kPi) / double(pairs.size());
  }
  if (mae_translation) *mae_translation = mt;
  if (mae_rotation_deg) *mae_rotation_deg = mr;
}

TrajectoryEval evaluate_trajectory(const Trajectory& est, const Trajectory& gt, bool align) {
  Trajectory aligned = est;
  if (align) aligned = apply_transform(est, align_rigid(est, gt));
  TrajectoryEval eval;
  compute_mae(aligned, gt, &eval.mae_translation, &eval.mae_rotation_deg);
  eval.rmse_translation = compute_ate(aligned, gt);
  std::vector<double> stamps;
  stamps.reserve(est.size());
  for (const auto& p : est) stamps.push_back(p.stamp);
  if (!gt.empty() && gt.back().stamp > gt.front().stamp)
    eval.completeness = compute_completeness(stamps, gt.front().stamp, gt.back().stamp);
  return eval;
}

Trajectory read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TimedPose p;
    double qx, qy, qz, qw;
    if (!(ss >> p.stamp >> p.position.x() >> p.position.y() >> p.position.z() >> qx >> qy >>
          qz >> qw))
      throw std::runtime_error("bad trajectory line at " + path + ":" +
                               std::to_string(line_no));
    p.rotation = Quat(qw, qx, qy, qz).normalized();
    traj.push_back(p);
  }
  return traj;
}

void write_tum(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory: " + path);
  char buf[256];
  for (const auto& p : traj) {
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", p.stamp,
                  p.position.x(), p.position.y(), p.position.z(), p.rotation.x(),
                  p.rotation.y(), p.rotation.z(), p.rotation.w());
    out << buf;
  }
}

std::string metrics_csv_header() {
  return "label,mae_x_m,mae_y_m,mae_z_m,mae_rot_z_deg,mae_rot_y_deg,mae_rot_x_deg,"
         "rmse_trans_m,completeness";
}

std::string metrics_csv_row(const std::string& label, const TrajectoryEval& e) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                label.c_str(), e.mae_translation.x(), e.mae_translation.y(),
                e.mae_translation.z(), e.mae_rotation_deg.x(), e.mae_rotation_deg.y(),
                e.mae_rotation_deg.z(), e.rmse_translation, e.completeness);
  return buf;
}

}  // namespace gvio
