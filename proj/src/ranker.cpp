#include "poicast/ranker.hpp"

#include <algorithm>
#include <stdexcept>

#include "poicast/common.hpp"

namespace poicast {

ForecastRanking rank_joint(const Eigen::VectorXd& category_probabilities,
                           const ProximityPrior& prior, const Poi& anchor,
                           const PoiSet& candidates) {
  if (category_probabilities.size() != candidates.category_count())
    throw std::invalid_argument("category distribution does not match the category vocabulary");
  ForecastRanking ranking;
  ranking.scores.resize(candidates.poi_count());
  for (int i = 0; i < candidates.poi_count(); ++i) {
    const Poi& cand = candidates.pois[i];
    const int category = candidates.category_index.at(cand.category_id);
    ranking.scores(i) =
        category_probabilities(category) * prior_probability(prior, anchor, cand);
  }
  const double total = ranking.scores.sum();
  if (total > 0.0) {
    ranking.scores /= total;
    ranking.normalized = true;
  }
  return ranking;
}

ForecastRanking rank_baseline(const Eigen::VectorXd& poi_probabilities,
                              const Vocabulary& poi_vocabulary, const PoiSet& candidates) {
  if (poi_probabilities.size() != poi_vocabulary.class_count())
    throw std::invalid_argument("POI distribution does not match the POI vocabulary");
  ForecastRanking ranking;
  ranking.scores.resize(candidates.poi_count());
  for (int i = 0; i < candidates.poi_count(); ++i) {
    const int cls = poi_vocabulary.class_of(candidates.pois[i].poi_id);
    // A candidate outside the training vocabulary has no output unit, so
    // its probability is structurally zero, not merely small.
    ranking.scores(i) = cls >= 0 ? poi_probabilities(cls) : 0.0;
  }
  // Every vocabulary POI is a candidate, so the mass already sums to 1.
  ranking.normalized = true;
  return ranking;
}

namespace {

// score descending, poi_id ascending
bool candidate_before(const ForecastRanking& ranking, const PoiSet& candidates, int a, int b) {
  if (ranking.scores(a) != ranking.scores(b)) return ranking.scores(a) > ranking.scores(b);
  return candidates.pois[a].poi_id < candidates.pois[b].poi_id;
}

}  // namespace

std::vector<int> ranked_candidates(const ForecastRanking& ranking, const PoiSet& candidates) {
  std::vector<int> order(candidates.poi_count());
  for (int i = 0; i < candidates.poi_count(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return candidate_before(ranking, candidates, a, b); });
  return order;
}

std::vector<std::string> top_k(const ForecastRanking& ranking, const PoiSet& candidates, int k) {
  k = std::min(k, candidates.poi_count());
  std::vector<int> order(candidates.poi_count());
  for (int i = 0; i < candidates.poi_count(); ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) { return candidate_before(ranking, candidates, a, b); });
  std::vector<std::string> ids;
  ids.reserve(k);
  for (int i = 0; i < k; ++i) ids.push_back(candidates.pois[order[i]].poi_id);
  return ids;
}

int rank_of(const ForecastRanking& ranking, const PoiSet& candidates, const std::string& poi_id) {
  auto it = candidates.poi_index.find(poi_id);
  if (it == candidates.poi_index.end())
    throw std::invalid_argument("rank_of: unknown poi id " + poi_id);
  const int target = it->second;
  int before = 0;
  for (int i = 0; i < candidates.poi_count(); ++i) {
    if (i != target && candidate_before(ranking, candidates, i, target)) ++before;
  }
  return before + 1;
}

}  // namespace poicast
