#pragma once

// Shared oracles for the test suites. Everything here is deliberately
// implemented independently of the library's optimization/integration paths
// (plain stacked dense algebra, straightforward stepwise integration) so it
// can serve as a reference.

#include <doctest.h>

#include "gvio/estimator.hpp"
#include "gvio/solver.hpp"

namespace gvio::testing {

inline Quat random_quat(Rng& rng) {
  const Vec3 axis = rng.gauss_vec3(1.0).normalized();
  return quat_exp(axis * rng.uniform(-kPi * 0.9, kPi * 0.9));
}

inline NavState random_navstate(Rng& rng) {
  NavState x;
  x.p_wl_b = rng.gauss_vec3(10.0);
  x.v_wl_b = rng.gauss_vec3(3.0);
  x.q_wl_b = random_quat(rng);
  x.bias_accel = rng.gauss_vec3(0.05);
  x.bias_gyro = rng.gauss_vec3(0.005);
  return x;
}

/// Central finite differences of a factor's residual w.r.t. every involved
/// block's tangent, compared against the analytic Jacobians. Returns the
/// worst relative error (absolute error where the column norm is tiny).
inline double jacobian_fd_error(const Factor& factor, Problem& problem, double step = 1e-6) {
  std::vector<VecX> values;
  for (int id : factor.blocks()) values.push_back(problem.block(id).value);

  std::vector<const VecX*> params;
  for (const VecX& v : values) params.push_back(&v);
  VecX r0;
  std::vector<MatX> jac;
  REQUIRE(factor.evaluate(params, r0, &jac));

  double worst = 0.0;
  for (size_t b = 0; b < values.size(); ++b) {
    const ParamBlock& blk = problem.block(factor.blocks()[b]);
    const int td = blk.tangent();
    MatX fd(r0.size(), td);
    for (int c = 0; c < td; ++c) {
      VecX delta = VecX::Zero(td);
      delta(c) = step;
      VecX vp = block_retract(blk.manifold, values[b], delta);
      delta(c) = -step;
      VecX vm = block_retract(blk.manifold, values[b], delta);
      std::vector<const VecX*> p2 = params;
      VecX rp, rm;
      p2[b] = &vp;
      REQUIRE(factor.evaluate(p2, rp, nullptr));
      p2[b] = &vm;
      REQUIRE(factor.evaluate(p2, rm, nullptr));
      fd.col(c) = (rp - rm) / (2.0 * step);
    }
    const double scale = std::max(1.0, fd.norm());
    worst = std::max(worst, (fd - jac[b]).norm() / scale);
  }
  return worst;
}

/// Plain dense Levenberg-Marquardt over the same Problem: stacked residuals,
/// single dense normal system with additive damping, no elimination. Serves
/// as the independent reference for the sparse/Schur solver.
inline double dense_reference_solve(Problem& problem, int max_iters = 60) {
  std::vector<VecX> values = problem.snapshot_values();

  std::vector<int> offsets(problem.num_blocks(), -1);
  int dim = 0;
  for (int i = 0; i < problem.num_blocks(); ++i) {
    if (problem.block(i).constant) continue;
    offsets[i] = dim;
    dim += problem.block(i).tangent();
  }

  auto eval_all = [&](const std::vector<VecX>& vals, MatX* jac, VecX* res) {
    double cost = 0.0;
    std::vector<MatX> jrows;
    std::vector<VecX> rrows;
    std::vector<std::vector<int>> brows;
    int total = 0;
    for (int fi = 0; fi < problem.num_factors(); ++fi) {
      if (!problem.factor_active(fi)) continue;
      const Factor& f = problem.factor(fi);
      std::vector<const VecX*> params;
      for (int id : f.blocks()) params.push_back(&vals[id]);
      FactorEval e;
      e.valid = f.evaluate(params, e.residual, jac ? &e.jacobians : nullptr);
      if (!e.valid) continue;
      Problem::apply_robust_loss(f, e);
      cost += e.residual.squaredNorm();
      if (jac) {
        MatX row = MatX::Zero(e.residual.size(), dim);
        for (size_t b = 0; b < f.blocks().size(); ++b) {
          const int id = f.blocks()[b];
          if (offsets[id] < 0) continue;
          MatX jb = e.jacobians[b];
          const uint32_t mask = problem.block(id).fixed_tangent_mask;
          if (mask)
            for (int c = 0; c < jb.cols(); ++c)
              if (mask & (1u << c)) jb.col(c).setZero();
          row.middleCols(offsets[id], jb.cols()) += jb;
        }
        jrows.push_back(row);
        rrows.push_back(e.residual);
        total += static_cast<int>(e.residual.size());
      }
    }
    if (jac) {
      jac->resize(total, dim);
      res->resize(total);
      int at = 0;
      for (size_t i = 0; i < jrows.size(); ++i) {
        jac->middleRows(at, jrows[i].rows()) = jrows[i];
        res->segment(at, rrows[i].size()) = rrows[i];
        at += static_cast<int>(jrows[i].rows());
      }
    }
    return cost;
  };

  double lambda = 1e-4;
  double cost = eval_all(values, nullptr, nullptr);
  for (int it = 0; it < max_iters; ++it) {
    MatX j;
    VecX r;
    eval_all(values, &j, &r);
    const MatX h = j.transpose() * j;
    const VecX g = -j.transpose() * r;
    if (g.norm() < 1e-12) break;
    bool accepted = false;
    for (int tries = 0; tries < 30; ++tries) {
      MatX hd = h + lambda * MatX::Identity(dim, dim);
      const VecX delta = hd.ldlt().solve(g);
      std::vector<VecX> cand = values;
      for (int i = 0; i < problem.num_blocks(); ++i) {
        if (offsets[i] < 0) continue;
        cand[i] = block_retract(problem.block(i).manifold, values[i],
                                delta.segment(offsets[i], problem.block(i).tangent()));
      }
      const double c2 = eval_all(cand, nullptr, nullptr);
      if (c2 < cost) {
        values = std::move(cand);
        cost = c2;
        lambda = std::max(1e-12, lambda * 0.3);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  return cost;
}

/// Straightforward high-rate integration of ideal IMU signals sampled from
/// the ground truth; independent of the library's midpoint preintegration.
struct FineIntegrationResult {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();
};

template <typename OmegaFn, typename AccelFn>
FineIntegrationResult fine_integrate(OmegaFn omega, AccelFn accel, double t0, double t1,
                                     double dt) {
  FineIntegrationResult s;
  double t = t0;
  while (t < t1 - 1e-12) {
    const double h = std::min(dt, t1 - t);
    const Vec3 w = omega(t + 0.5 * h);
    const Vec3 a = accel(t + 0.5 * h);
    const Quat q_mid = (s.gamma * quat_exp(w * 0.5 * h)).normalized();
    const Vec3 a_rot = q_mid.toRotationMatrix() * a;
    s.alpha += s.beta * h + 0.5 * a_rot * h * h;
    s.beta += a_rot * h;
    s.gamma = (s.gamma * quat_exp(w * h)).normalized();
    t += h;
  }
  return s;
}

/// Simulator-independent constellation for SPP tests: satellites spread on
/// rays from the site.
inline RawGnssEpoch make_test_epoch(const Vec3& receiver_ecef, const Vec3& receiver_vel,
                                    const std::map<Constellation, double>& bias,
                                    const std::map<Constellation, double>& drift,
                                    int n_gps = 8, int n_glo = 0, Rng* noise_rng = nullptr,
                                    double sigma_pr = 0.0, double sigma_rr = 0.0) {
  RawGnssEpoch epoch;
  epoch.stamp = 0.0;
  const EnuAnchor anchor = make_enu_anchor(receiver_ecef);
  const int n = n_gps + n_glo;
  for (int k = 0; k < n; ++k) {
    const bool gps = k < n_gps;
    const double az = 2.0 * kPi * k / double(n) + 0.3;
    const double el = deg2rad(15.0 + 60.0 * ((k * 29) % n) / double(n));
    const Vec3 dir_enu(std::cos(el) * std::sin(az), std::cos(el) * std::cos(az),
                       std::sin(el));
    const Vec3 dir = anchor.rotation_ecef_from_enu * dir_enu;
    SatelliteState sat;
    sat.sat_id = k + 1;
    sat.constellation = gps ? Constellation::kGps : Constellation::kGlonass;
    sat.position_ecef = receiver_ecef + dir * 2.2e7;
    sat.velocity_ecef = dir.cross(Vec3(0, 0, 1)).normalized() * 3000.0;
    sat.clock_bias = 1e-5 * std::sin(k * 1.7);
    sat.clock_drift = 1e-11 * std::cos(k * 0.9);
    SatObs obs;
    obs.sat_id = sat.sat_id;
    obs.wavelength = gps ? 0.1903 : 0.1871;
    const double b = bias.count(sat.constellation) ? bias.at(sat.constellation) : 0.0;
    const double d = drift.count(sat.constellation) ? drift.at(sat.constellation) : 0.0;
    const Vec3 los = (sat.position_ecef - receiver_ecef).normalized();
    double pr = (sat.position_ecef - receiver_ecef).norm() +
                kSpeedOfLight * (b - sat.clock_bias);
    double rate = los.dot(sat.velocity_ecef - receiver_vel) +
                  kSpeedOfLight * (d - sat.clock_drift);
    if (noise_rng) {
      pr += noise_rng->gauss(sigma_pr);
      rate += noise_rng->gauss(sigma_rr);
    }
    obs.pseudorange = pr;
    obs.doppler = -rate / obs.wavelength;
    epoch.observations.emplace_back(obs, sat);
  }
  return epoch;
}

}  // namespace gvio::testing
