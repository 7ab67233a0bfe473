#pragma once

#include "gvio/core.hpp"

namespace gvio {

// WGS-84 ellipsoid constants.
inline constexpr double kWgs84SemiMajor = 6378137.0;
inline constexpr double kWgs84Flattening = 1.0 / 298.257223563;
inline constexpr double kWgs84SemiMinor = kWgs84SemiMajor * (1.0 - kWgs84Flattening);
inline constexpr double kWgs84Ecc2 = kWgs84Flattening * (2.0 - kWgs84Flattening);

struct GeodeticCoord {
  double lat = 0.0;     // radians, |lat| <= pi/2
  double lon = 0.0;     // radians, (-pi, pi]
  double height = 0.0;  // meters above the ellipsoid
};

using EcefVec = Vec3;

/// Local east-north-up frame anchored on the ellipsoid. The rotation maps
/// ENU vectors into ECEF; columns are the east/north/up axes.
struct EnuAnchor {
  Mat3 rotation_ecef_from_enu = Mat3::Identity();
  EcefVec origin_ecef = EcefVec::Zero();
  GeodeticCoord origin_geodetic;
};

EcefVec geodetic_to_ecef(const GeodeticCoord& g);

/// Iterative inverse of geodetic_to_ecef. Throws std::domain_error for the
/// Earth-center singularity.
GeodeticCoord ecef_to_geodetic(const EcefVec& p);

/// Builds the ENU frame at the given ECEF reference point. At the poles the
/// east/north axes follow the longitude-zero convention (ecef_to_geodetic
/// returns lon = 0 there).
EnuAnchor make_enu_anchor(const EcefVec& ref);

Vec3 ecef_to_enu(const EnuAnchor& anchor, const EcefVec& p);
EcefVec enu_to_ecef(const EnuAnchor& anchor, const Vec3& enu);

}  // namespace gvio
