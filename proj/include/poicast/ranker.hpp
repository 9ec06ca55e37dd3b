#pragma once

#include <string>
#include <vector>

#include "poicast/classifier.hpp"
#include "poicast/geo_prior.hpp"
#include "poicast/types.hpp"

namespace poicast {

// Scores over the full candidate POI set (aligned with PoiSet order).
// When `normalized` is set the scores sum to 1.
struct ForecastRanking {
  Eigen::VectorXd scores;
  bool normalized = false;
};

// Joint score: Pr[category of candidate | history] x Pr[candidate is a
// typical trip distance away | history]. Defined for every candidate,
// including POIs never visited in training.
ForecastRanking rank_joint(const Eigen::VectorXd& category_probabilities,
                           const ProximityPrior& prior, const Poi& anchor,
                           const PoiSet& candidates);

// Baseline score: the classifier's probability for candidates inside the
// training vocabulary, exactly 0.0 for everything else (no output unit).
ForecastRanking rank_baseline(const Eigen::VectorXd& poi_probabilities,
                              const Vocabulary& poi_vocabulary, const PoiSet& candidates);

// Candidate indices ordered by score descending, ties by ascending poi_id.
std::vector<int> ranked_candidates(const ForecastRanking& ranking, const PoiSet& candidates);

// The k best poi ids (k clamped to the candidate count).
std::vector<std::string> top_k(const ForecastRanking& ranking, const PoiSet& candidates, int k);

// 1-based rank of a candidate under the same ordering, without sorting.
int rank_of(const ForecastRanking& ranking, const PoiSet& candidates, const std::string& poi_id);

}  // namespace poicast
