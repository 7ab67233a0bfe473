#include "gvio/geodesy.hpp"

namespace gvio {

EcefVec geodetic_to_ecef(const GeodeticCoord& g) {
  const double sin_lat = std::sin(g.lat), cos_lat = std::cos(g.lat);
  const double sin_lon = std::sin(g.lon), cos_lon = std::cos(g.lon);
  const double n = kWgs84SemiMajor / std::sqrt(1.0 - kWgs84Ecc2 * sin_lat * sin_lat);
  return EcefVec((n + g.height) * cos_lat * cos_lon,
                 (n + g.height) * cos_lat * sin_lon,
                 (n * (1.0 - kWgs84Ecc2) + g.height) * sin_lat);
}

GeodeticCoord ecef_to_geodetic(const EcefVec& p) {
  const double r = p.norm();
  if (r < 1.0) throw std::domain_error("ecef_to_geodetic: point at Earth center");

  GeodeticCoord g;
  const double rho = std::hypot(p.x(), p.y());
  g.lon = (rho < 1e-9) ? 0.0 : std::atan2(p.y(), p.x());

  if (rho < 1e-9) {  // on the polar axis
    g.lat = (p.z() >= 0.0) ? 0.5 * kPi : -0.5 * kPi;
    g.height = std::abs(p.z()) - kWgs84SemiMinor;
    return g;
  }

  // Fixed-point iteration on the latitude; converges in a handful of steps
  // anywhere away from the center.
  double lat = std::atan2(p.z(), rho * (1.0 - kWgs84Ecc2));
  double n = kWgs84SemiMajor;
  double h = 0.0;
  for (int it = 0; it < 10; ++it) {
    const double sin_lat = std::sin(lat);
    n = kWgs84SemiMajor / std::sqrt(1.0 - kWgs84Ecc2 * sin_lat * sin_lat);
    h = rho / std::cos(lat) - n;
    const double lat_next = std::atan2(p.z(), rho * (1.0 - kWgs84Ecc2 * n / (n + h)));
    const double dlat = std::abs(lat_next - lat);
    lat = lat_next;
    if (dlat < 1e-12) break;
  }
  const double sin_lat = std::sin(lat);
  n = kWgs84SemiMajor / std::sqrt(1.0 - kWgs84Ecc2 * sin_lat * sin_lat);
  g.lat = lat;
  g.height = rho / std::cos(lat) - n;
  return g;
}

EnuAnchor make_enu_anchor(const EcefVec& ref) {
  if (ref.norm() < 1.0) throw std::domain_error("make_enu_anchor: reference at Earth center");
  EnuAnchor a;
  a.origin_ecef = ref;
  a.origin_geodetic = ecef_to_geodetic(ref);
  const double sin_lat = std::sin(a.origin_geodetic.lat), cos_lat = std::cos(a.origin_geodetic.lat);
  const double sin_lon = std::sin(a.origin_geodetic.lon), cos_lon = std::cos(a.origin_geodetic.lon);
  Mat3& r = a.rotation_ecef_from_enu;
  // columns: east, north, up
  r.col(0) = Vec3(-sin_lon, cos_lon, 0.0);
  r.col(1) = Vec3(-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat);
  r.col(2) = Vec3(cos_lat * cos_lon, cos_lat * sin_lon, sin_lat);
  return a;
}

Vec3 ecef_to_enu(const EnuAnchor& anchor, const EcefVec& p) {
  return anchor.rotation_ecef_from_enu.transpose() * (p - anchor.origin_ecef);
}

EcefVec enu_to_ecef(const EnuAnchor& anchor, const Vec3& enu) {
  return anchor.rotation_ecef_from_enu * enu + anchor.origin_ecef;
}

}  // namespace gvio
