#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "poicast/types.hpp"

namespace poicast {

// Uniform-width distance buckets plus one overflow bucket. Bucket equality
// is the "similar distance" relation the ranker scores with.
struct DistanceBucketing {
  double bucket_width_km = 0.5;
  double max_distance_km = 30.0;

  int bucket_count() const {
    return static_cast<int>(std::ceil(max_distance_km / bucket_width_km)) + 1;
  }
  // Total on non-negative distances; everything past max_distance_km lands
  // in the overflow bucket.
  int bucket_of(double distance_km) const {
    int b = static_cast<int>(std::floor(distance_km / bucket_width_km));
    int overflow = bucket_count() - 1;
    return b < 0 ? 0 : (b >= overflow ? overflow : b);
  }
};

// Normalized discrete distribution over trip-distance buckets, estimated
// from consecutive same-user training visits. Counts are the source of
// truth; probabilities are (count + alpha) / (total + alpha * buckets).
struct ProximityPrior {
  DistanceBucketing bucketing;
  std::vector<int64_t> counts;
  std::vector<double> probabilities;
  double smoothing_alpha = 1.0;

  void normalize();
};

// Euclidean distance on projected coordinates, in kilometers.
double planar_distance_km(const Poi& a, const Poi& b);

// Counts one distance per consecutive same-user visit pair (n_i - 1 pairs
// per history); pairs never cross users. Fatal when no pair exists.
ProximityPrior estimate_prior(const std::vector<UserHistory>& train, const PoiSet& pois,
                              const DistanceBucketing& bucketing, double smoothing_alpha);

// The prior probability that a candidate is "as far" from the anchor as
// the next trip tends to be: probabilities[bucket(distance(anchor, cand))].
double prior_probability(const ProximityPrior& prior, const Poi& anchor, const Poi& candidate);

// Persistence: counts round-trip through JSON; probabilities are
// recomputed on load.
std::string prior_to_json(const ProximityPrior& prior);
ProximityPrior prior_from_json(const std::string& json_text);

// Histogram export: bucket_lower_km,bucket_upper_km,count per row.
std::string prior_histogram_csv(const ProximityPrior& prior);

}  // namespace poicast
