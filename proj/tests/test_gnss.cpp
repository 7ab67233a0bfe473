#include <doctest.h>

#include <filesystem>

#include "test_support.hpp"

using namespace gvio;
using gvio::testing::make_test_epoch;

namespace {
const Vec3 kSite = geodetic_to_ecef({deg2rad(37.77), deg2rad(-122.42), 30.0});
}

TEST_SUITE_BEGIN("gnss");

TEST_CASE("predict_pseudorange terms") {
  SatelliteState sat;
  sat.position_ecef = kSite + Vec3(2e7, 0, 0);

  SUBCASE("pure geometric range") {
    CHECK(predict_pseudorange(sat, kSite, 0.0) == doctest::Approx(2e7).epsilon(1e-12));
  }
  SUBCASE("receiver clock bias adds c*dt") {
    const double base = predict_pseudorange(sat, kSite, 0.0);
    CHECK(predict_pseudorange(sat, kSite, 1e-6) - base ==
          doctest::Approx(299.792458).epsilon(1e-9));
  }
  SUBCASE("satellite clock bias subtracts c*dt") {
    const double base = predict_pseudorange(sat, kSite, 0.0);
    sat.clock_bias = 1e-6;
    CHECK(predict_pseudorange(sat, kSite, 0.0) - base ==
          doctest::Approx(-299.792458).epsilon(1e-9));
  }
  SUBCASE("coincident points are a domain error") {
    sat.position_ecef = kSite;
    CHECK_THROWS_AS(predict_pseudorange(sat, kSite, 0.0), std::domain_error);
  }
}

TEST_CASE("predict_range_rate") {
  SatelliteState sat;
  sat.position_ecef = kSite + Vec3(2e7, 0, 0);

  SUBCASE("all static is zero") {
    CHECK(predict_range_rate(sat, kSite, Vec3::Zero(), 0.0) == doctest::Approx(0.0));
  }
  SUBCASE("receiver moving toward the satellite shrinks the range") {
    const Vec3 v = Vec3(10, 0, 0);  // toward the satellite
    CHECK(predict_range_rate(sat, kSite, v, 0.0) == doctest::Approx(-10.0).epsilon(1e-12));
  }
  SUBCASE("finite difference of predict_pseudorange over 1 ms") {
    sat.velocity_ecef = Vec3(800.0, -2500.0, 1200.0);
    const Vec3 v_recv(5.0, 3.0, -1.0);
    const double rate = predict_range_rate(sat, kSite, v_recv, 0.0);
    const double h = 0.5e-3;  // central difference spanning 1 ms
    SatelliteState satp = sat, satm = sat;
    satp.position_ecef += sat.velocity_ecef * h;
    satm.position_ecef -= sat.velocity_ecef * h;
    const double fd =
        (predict_pseudorange(satp, kSite + v_recv * h, 0.0) -
         predict_pseudorange(satm, kSite - v_recv * h, 0.0)) /
        (2.0 * h);
    CHECK(std::abs(rate - fd) < 1e-4);
  }
}

TEST_CASE("pseudorange is invariant under a common rigid rotation") {
  Rng rng(13);
  SatelliteState sat;
  sat.position_ecef = kSite + Vec3(1.9e7, 5e6, 8e6);
  const double base = predict_pseudorange(sat, kSite, 1e-7);
  for (int i = 0; i < 20; ++i) {
    const Mat3 r = gvio::testing::random_quat(rng).toRotationMatrix();
    SatelliteState rsat = sat;
    rsat.position_ecef = r * sat.position_ecef;
    const double rotated = predict_pseudorange(rsat, r * kSite, 1e-7);
    CHECK(std::abs(rotated - base) < 1e-9 * base);
  }
}

TEST_CASE("spp_solve recovers the generating position and clocks") {
  const std::map<Constellation, double> bias{{Constellation::kGps, 1e-6},
                                             {Constellation::kGlonass, 2e-6}};
  const RawGnssEpoch epoch = make_test_epoch(kSite, Vec3::Zero(), bias, {}, 8, 6);

  SUBCASE("from a guess 100 km from the Earth center") {
    const SppSolution sol = spp_solve(epoch, Vec3(1e5, 0, 0));
    CHECK((sol.position_ecef - kSite).norm() < 1e-3);
    CHECK(std::abs(sol.clock_bias.at(Constellation::kGps) - 1e-6) < 1e-10);
    CHECK(std::abs(sol.clock_bias.at(Constellation::kGlonass) - 2e-6) < 1e-10);
    for (double r : sol.residuals) CHECK(std::abs(r) < 1e-6);
    CHECK(sol.pdop > 0.5);
    CHECK(sol.pdop < 10.0);
  }

  SUBCASE("underdetermined epochs are rejected") {
    RawGnssEpoch small = epoch;
    small.observations.resize(3);  // single constellation -> needs 4
    CHECK_THROWS_AS(spp_solve(small), InsufficientObservations);
  }
}

TEST_CASE("spp noise envelope over 500 Monte-Carlo epochs") {
  Rng rng(77);
  double sum_sq = 0.0;
  double pdop = 0.0;
  const int trials = 500;
  for (int i = 0; i < trials; ++i) {
    const RawGnssEpoch epoch =
        make_test_epoch(kSite, Vec3::Zero(), {}, {}, 8, 0, &rng, 1.0, 0.0);
    const SppSolution sol = spp_solve(epoch);
    sum_sq += (sol.position_ecef - kSite).squaredNorm();
    pdop = sol.pdop;
  }
  const double rms = std::sqrt(sum_sq / trials);
  CHECK(rms <= 3.0 * pdop);  // sigma = 1 m
}

TEST_CASE("velocity_solve") {
  const std::map<Constellation, double> drift{{Constellation::kGps, 1e-9},
                                              {Constellation::kGlonass, 1e-9}};

  SUBCASE("static receiver, zero noise") {
    const RawGnssEpoch epoch = make_test_epoch(kSite, Vec3::Zero(), {}, {}, 8, 0);
    const VelocitySolution sol = velocity_solve(epoch, kSite);
    CHECK(sol.velocity_ecef.norm() < 1e-9);
  }
  SUBCASE("recovers 10 m/s and the drift") {
    const EnuAnchor anchor = make_enu_anchor(kSite);
    const Vec3 v = anchor.rotation_ecef_from_enu * Vec3(10, 0, 0);  // east
    const RawGnssEpoch epoch = make_test_epoch(kSite, v, {}, drift, 8, 6);
    const VelocitySolution sol = velocity_solve(epoch, kSite);
    CHECK((sol.velocity_ecef - v).norm() < 1e-6);
    CHECK(std::abs(sol.clock_drift.at(Constellation::kGps) - 1e-9) < 1e-12);
  }
  SUBCASE("underdetermined is rejected") {
    RawGnssEpoch epoch = make_test_epoch(kSite, Vec3::Zero(), {}, {}, 3, 0);
    CHECK_THROWS_AS(velocity_solve(epoch, kSite), InsufficientObservations);
  }
}

TEST_CASE("epoch file round trip") {
  Rng rng(5);
  std::vector<RawGnssEpoch> epochs;
  for (int e = 0; e < 3; ++e) {
    RawGnssEpoch ep = make_test_epoch(kSite, Vec3::Zero(), {}, {}, 5, 3, &rng, 1.0, 0.5);
    ep.epoch_index = e;
    ep.stamp = 0.37 + e;
    epochs.push_back(ep);
  }
  const std::string path = std::filesystem::temp_directory_path() / "gvio_gnss_test.txt";
  write_gnss_file(path, epochs);
  const auto back = read_gnss_file(path);
  REQUIRE(back.size() == epochs.size());
  for (size_t e = 0; e < epochs.size(); ++e) {
    CHECK(back[e].stamp == doctest::Approx(epochs[e].stamp).epsilon(1e-12));
    REQUIRE(back[e].observations.size() == epochs[e].observations.size());
    for (size_t i = 0; i < epochs[e].observations.size(); ++i) {
      const auto& [obs_a, sat_a] = epochs[e].observations[i];
      const auto& [obs_b, sat_b] = back[e].observations[i];
      CHECK(obs_b.sat_id == obs_a.sat_id);
      CHECK(static_cast<int>(sat_b.constellation) == static_cast<int>(sat_a.constellation));
      CHECK(std::abs(obs_b.pseudorange - obs_a.pseudorange) < 1e-5);
      CHECK(std::abs(obs_b.doppler - obs_a.doppler) < 1e-8);
      CHECK((sat_b.position_ecef - sat_a.position_ecef).norm() < 1e-5);
      CHECK(std::abs(sat_b.clock_bias - sat_a.clock_bias) < 1e-18);
    }
  }
  std::filesystem::remove(path);
}

TEST_SUITE_END();
