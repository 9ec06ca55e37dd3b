#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "poicast/ingest.hpp"
#include "poicast/types.hpp"

namespace poicast::test {

inline Poi make_poi(const std::string& id, double lat, double lon, const std::string& cat) {
  Poi p;
  p.poi_id = id;
  p.lat = lat;
  p.lon = lon;
  p.category_id = cat;
  return p;
}

// A planar POI placed directly in projected meters (skips the projection
// step; handy for distance-sensitive fixtures).
inline Poi planar_poi(const std::string& id, double easting_km, double northing_km,
                      const std::string& cat) {
  Poi p;
  p.poi_id = id;
  p.category_id = cat;
  p.easting_m = easting_km * 1000.0;
  p.northing_m = northing_km * 1000.0;
  return p;
}

inline Visit make_visit(const std::string& user, int64_t timestamp, const std::string& poi,
                        int offset_minutes = 0) {
  Visit v;
  v.user_id = user;
  v.timestamp = timestamp;
  v.utc_offset_minutes = offset_minutes;
  v.poi_id = poi;
  return v;
}

// Assembles a Dataset from explicit parts, rebuilding every index.
inline Dataset make_dataset(std::vector<Poi> pois, std::vector<UserHistory> histories) {
  Dataset d;
  d.pois.pois = std::move(pois);
  d.pois.rebuild_indexes();
  d.histories = std::move(histories);
  return d;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    auto candidate = base / (tag + "_" + std::to_string(rng()));
    if (std::filesystem::create_directories(candidate)) return candidate;
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace poicast::test
