#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "poicast/projection.hpp"
#include "poicast/types.hpp"

namespace poicast {

// A prediction target: the visit at `visit_index` of `histories[user_index]`
// is the ground truth; everything before it is the observation prefix.
// A visit qualifies as a target only when at least kMinPrefix visits
// precede it (one of them doubles as the distance anchor).
struct TargetRef {
  int user_index = 0;
  int visit_index = 0;
};

inline constexpr int kMinPrefix = 2;

struct DatasetSplit {
  int64_t threshold = 0;  // UTC seconds; train is strictly before
  uint64_t seed = 0;
  // Per user, the number of leading visits with timestamp < threshold.
  std::vector<int> train_prefix_len;
  std::vector<TargetRef> validation;  // post-threshold targets, 50/50 split
  std::vector<TargetRef> test;
  std::set<std::string> unseen_poi_ids;
  double realized_unseen_ratio = 0.0;  // |unseen| / |distinct POI ids among targets|
};

// Parses tab-separated check-ins, one per line:
//   user id, venue id, venue category id, venue category name,
//   latitude, longitude, timezone offset minutes, UTC time string
// Duplicate venue ids keep their first coordinates/category. Malformed
// lines are skipped and counted; more than 10% malformed is fatal.
// Histories come back sorted by user id, visits sorted by timestamp.
Dataset parse_checkins(std::istream& raw_stream);
Dataset parse_checkins_file(const std::string& path);

// Projects every POI into the given zone (or the zone of the data centroid
// when absent) and returns the zone used.
ProjectionZone project_dataset(Dataset& dataset, std::optional<ProjectionZone> zone = std::nullopt);

// Parses "Tue Apr 03 18:00:09 +0000 2012" into UTC seconds.
// Returns nullopt on malformed input.
std::optional<int64_t> parse_utc_time(const std::string& text);

// Splits prediction targets at `threshold`: training keeps all visits
// strictly before it, post-threshold targets are assigned 50/50 at random
// (seeded) to validation/test. Fatal when train or test would be empty.
DatasetSplit temporal_split(const std::vector<UserHistory>& histories, int64_t threshold,
                            uint64_t seed);

// Unseen ratio realized by a threshold, without materializing a split:
// |{target POI ids post-threshold} \ {train POI ids}| / |{target POI ids}|.
double unseen_ratio_at(const std::vector<UserHistory>& histories, int64_t threshold);

// Finds the visit-timestamp threshold whose realized unseen ratio is
// closest to target_ratio (binary search over the in-practice monotone
// ratio curve, plus a local scan around the crossing). Fatal when nothing
// lands within 5 percentage points; the error reports the achievable range.
int64_t find_threshold_for_unseen_ratio(const std::vector<UserHistory>& histories,
                                        double target_ratio, double* realized = nullptr);

// Split manifest round-trip (bit-exact ids and timestamps).
std::string split_manifest_to_json(const DatasetSplit& split, const Dataset& dataset);
DatasetSplit split_manifest_from_json(const std::string& json_text, const Dataset& dataset);

// Train-partition views.
std::vector<UserHistory> train_histories(const Dataset& dataset, const DatasetSplit& split);
std::vector<TargetRef> train_targets(const Dataset& dataset, const DatasetSplit& split);

}  // namespace poicast
