#include "poicast/geo_prior.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poicast/common.hpp"

namespace poicast {

double planar_distance_km(const Poi& a, const Poi& b) {
  const double de = a.easting_m - b.easting_m;
  const double dn = a.northing_m - b.northing_m;
  return std::sqrt(de * de + dn * dn) / 1000.0;
}

void ProximityPrior::normalize() {
  const int n = bucketing.bucket_count();
  probabilities.assign(n, 0.0);
  long double total = 0.0;
  for (int64_t c : counts) total += c;
  const long double denom = total + static_cast<long double>(smoothing_alpha) * n;
  if (denom <= 0.0) throw DataError("proximity prior is undefined: no mass and no smoothing");
  for (int b = 0; b < n; ++b) {
    probabilities[b] = static_cast<double>((counts[b] + static_cast<long double>(smoothing_alpha)) / denom);
  }
}

ProximityPrior estimate_prior(const std::vector<UserHistory>& train, const PoiSet& pois,
                              const DistanceBucketing& bucketing, double smoothing_alpha) {
  ProximityPrior prior;
  prior.bucketing = bucketing;
  prior.smoothing_alpha = smoothing_alpha;
  prior.counts.assign(bucketing.bucket_count(), 0);

  int64_t pairs = 0;
  for (const auto& h : train) {
    for (int i = 0; i + 1 < h.size(); ++i) {
      const Poi& a = pois.poi(h.visits[i].poi_id);
      const Poi& b = pois.poi(h.visits[i + 1].poi_id);
      ++prior.counts[bucketing.bucket_of(planar_distance_km(a, b))];
      ++pairs;
    }
  }
  if (pairs == 0) throw DataError("proximity prior is undefined: no consecutive visit pairs");
  prior.normalize();
  return prior;
}

double prior_probability(const ProximityPrior& prior, const Poi& anchor, const Poi& candidate) {
  return prior.probabilities[prior.bucketing.bucket_of(planar_distance_km(anchor, candidate))];
}

std::string prior_to_json(const ProximityPrior& prior) {
  nlohmann::ordered_json doc;
  doc["bucket_width_km"] = prior.bucketing.bucket_width_km;
  doc["max_distance_km"] = prior.bucketing.max_distance_km;
  doc["smoothing_alpha"] = prior.smoothing_alpha;
  doc["counts"] = prior.counts;
  return doc.dump(2) + "\n";
}

ProximityPrior prior_from_json(const std::string& json_text) {
  auto doc = nlohmann::ordered_json::parse(json_text);
  ProximityPrior prior;
  prior.bucketing.bucket_width_km = doc.at("bucket_width_km").get<double>();
  prior.bucketing.max_distance_km = doc.at("max_distance_km").get<double>();
  prior.smoothing_alpha = doc.at("smoothing_alpha").get<double>();
  prior.counts = doc.at("counts").get<std::vector<int64_t>>();
  if (static_cast<int>(prior.counts.size()) != prior.bucketing.bucket_count()) {
    throw DataError("prior JSON counts length does not match its bucketing");
  }
  prior.normalize();
  return prior;
}

std::string prior_histogram_csv(const ProximityPrior& prior) {
  std::ostringstream out;
  out << "bucket_lower_km,bucket_upper_km,count\n";
  const int n = prior.bucketing.bucket_count();
  for (int b = 0; b < n; ++b) {
    double lo = b * prior.bucketing.bucket_width_km;
    if (b + 1 < n) {
      out << lo << ',' << lo + prior.bucketing.bucket_width_km << ',' << prior.counts[b] << '\n';
    } else {
      out << lo << ",inf," << prior.counts[b] << '\n';
    }
  }
  return out.str();
}

}  // namespace poicast
