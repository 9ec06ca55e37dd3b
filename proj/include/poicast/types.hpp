#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace poicast {

// One point of interest: identity, WGS84 coordinates, semantic category and
// the planar (projected) coordinates used for distance computations.
struct Poi {
  std::string poi_id;
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
  std::string category_id;
  double easting_m = 0.0;
  double northing_m = 0.0;
};

// The candidate universe for one run. poi ids are unique; the category
// vocabulary lists every distinct category id exactly once, sorted.
struct PoiSet {
  std::vector<Poi> pois;
  std::vector<std::string> category_vocabulary;
  std::map<std::string, int> poi_index;       // poi_id -> index into pois
  std::map<std::string, int> category_index;  // category_id -> class index

  int poi_count() const { return static_cast<int>(pois.size()); }
  int category_count() const { return static_cast<int>(category_vocabulary.size()); }

  const Poi& poi(const std::string& id) const { return pois[poi_index.at(id)]; }
  bool contains(const std::string& id) const { return poi_index.count(id) > 0; }

  // Rebuilds the index maps and the sorted category vocabulary from `pois`.
  void rebuild_indexes();
};

// One check-in. timestamp is UTC seconds; the offset carries the venue's
// local timezone so temporal features can use local time.
struct Visit {
  std::string user_id;
  int64_t timestamp = 0;
  int utc_offset_minutes = 0;
  std::string poi_id;
};

// A user's time-ordered check-in sequence (non-decreasing timestamps).
struct UserHistory {
  std::string user_id;
  std::vector<Visit> visits;

  int size() const { return static_cast<int>(visits.size()); }
};

struct Dataset {
  PoiSet pois;
  std::vector<UserHistory> histories;  // sorted by user_id
  int64_t skipped_lines = 0;

  int user_index(const std::string& user_id) const;
  int64_t total_visits() const;
};

}  // namespace poicast
