#include "poicast/projection.hpp"

#include <algorithm>
#include <cmath>

namespace poicast {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kWgs84A = 6378137.0;             // semi-major axis, meters
constexpr double kWgs84F = 1.0 / 298.257223563;   // flattening
constexpr double kScale = 0.9996;                 // central meridian scale
constexpr double kFalseEasting = 500000.0;
constexpr double kFalseNorthingSouth = 10000000.0;

double deg2rad(double d) { return d * kPi / 180.0; }
}  // namespace

ProjectionZone zone_for(double lat, double lon) {
  int zone = static_cast<int>(std::floor((lon + 180.0) / 6.0)) + 1;
  zone = std::clamp(zone, 1, 60);
  return ProjectionZone{zone, lat >= 0.0};
}

std::pair<double, double> project_to_plane(double lat, double lon, const ProjectionZone& zone) {
  const double e2 = kWgs84F * (2.0 - kWgs84F);   // first eccentricity squared
  const double ep2 = e2 / (1.0 - e2);            // second eccentricity squared

  const double phi = deg2rad(lat);
  const double dlam = deg2rad(lon - zone.central_meridian_deg());

  const double sin_phi = std::sin(phi);
  const double cos_phi = std::cos(phi);
  const double tan_phi = std::tan(phi);

  const double nu = kWgs84A / std::sqrt(1.0 - e2 * sin_phi * sin_phi);
  const double T = tan_phi * tan_phi;
  const double C = ep2 * cos_phi * cos_phi;
  const double A = dlam * cos_phi;

  // Meridional arc length (Snyder series).
  const double e4 = e2 * e2;
  const double e6 = e4 * e2;
  const double M =
      kWgs84A *
      ((1.0 - e2 / 4.0 - 3.0 * e4 / 64.0 - 5.0 * e6 / 256.0) * phi -
       (3.0 * e2 / 8.0 + 3.0 * e4 / 32.0 + 45.0 * e6 / 1024.0) * std::sin(2.0 * phi) +
       (15.0 * e4 / 256.0 + 45.0 * e6 / 1024.0) * std::sin(4.0 * phi) -
       (35.0 * e6 / 3072.0) * std::sin(6.0 * phi));

  const double A2 = A * A;
  const double A3 = A2 * A;
  const double A4 = A2 * A2;
  const double A5 = A4 * A;
  const double A6 = A4 * A2;

  double easting = kFalseEasting +
                   kScale * nu *
                       (A + (1.0 - T + C) * A3 / 6.0 +
                        (5.0 - 18.0 * T + T * T + 72.0 * C - 58.0 * ep2) * A5 / 120.0);

  double northing = kScale * (M + nu * tan_phi *
                                      (A2 / 2.0 + (5.0 - T + 9.0 * C + 4.0 * C * C) * A4 / 24.0 +
                                       (61.0 - 58.0 * T + T * T + 600.0 * C - 330.0 * ep2) * A6 / 720.0));
  if (!zone.north) {
    northing += kFalseNorthingSouth;
  }
  return {easting, northing};
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0088;
  const double p1 = deg2rad(lat1);
  const double p2 = deg2rad(lat2);
  const double dp = deg2rad(lat2 - lat1);
  const double dl = deg2rad(lon2 - lon1);
  const double a = std::sin(dp / 2.0) * std::sin(dp / 2.0) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2.0) * std::sin(dl / 2.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace poicast
