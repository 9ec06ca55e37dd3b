#pragma once

#include <utility>

namespace poicast {

// One transverse-Mercator zone, fixed for a whole run. All data is assumed
// to fall in a single zone chosen from the dataset centroid.
struct ProjectionZone {
  int zone = 18;       // 1..60
  bool north = true;   // hemisphere

  double central_meridian_deg() const { return -183.0 + 6.0 * zone; }
};

// Zone arithmetic from a longitude/latitude (standard 6-degree zones).
ProjectionZone zone_for(double lat, double lon);

// Forward transverse-Mercator projection (WGS84, k0 = 0.9996, standard
// false easting/northing). Returns (easting, northing) in meters.
// Deterministic; coordinates outside the zone are projected anyway.
std::pair<double, double> project_to_plane(double lat, double lon, const ProjectionZone& zone);

// Great-circle distance in kilometers. Test oracle and centroid sanity
// checks only; the pipeline itself ranks with planar distances.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

}  // namespace poicast
