#include "poicast/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poicast/common.hpp"

namespace poicast {

using ordered_json = nlohmann::ordered_json;

void PoiSet::rebuild_indexes() {
  poi_index.clear();
  category_index.clear();
  std::set<std::string> categories;
  for (size_t i = 0; i < pois.size(); ++i) {
    poi_index.emplace(pois[i].poi_id, static_cast<int>(i));
    categories.insert(pois[i].category_id);
  }
  category_vocabulary.assign(categories.begin(), categories.end());
  for (size_t s = 0; s < category_vocabulary.size(); ++s) {
    category_index.emplace(category_vocabulary[s], static_cast<int>(s));
  }
}

int Dataset::user_index(const std::string& user_id) const {
  auto it = std::lower_bound(histories.begin(), histories.end(), user_id,
                             [](const UserHistory& h, const std::string& id) { return h.user_id < id; });
  if (it == histories.end() || it->user_id != user_id) return -1;
  return static_cast<int>(it - histories.begin());
}

int64_t Dataset::total_visits() const {
  int64_t n = 0;
  for (const auto& h : histories) n += h.size();
  return n;
}

namespace {

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = y - era * 400;
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + doe - 719468;
}

int month_from_name(const std::string& name) {
  static const char* names[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  for (int i = 0; i < 12; ++i) {
    if (name == names[i]) return i + 1;
  }
  return 0;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double* out) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return false;
    *out = v;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int(const std::string& s, int* out) {
  try {
    size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) return false;
    *out = v;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::optional<int64_t> parse_utc_time(const std::string& text) {
  // e.g. "Tue Apr 03 18:00:09 +0000 2012"
  std::istringstream in(text);
  std::string weekday, month, zone;
  std::string day_s, clock, year_s;
  if (!(in >> weekday >> month >> day_s >> clock >> zone >> year_s)) return std::nullopt;

  int m = month_from_name(month);
  int day = 0, year = 0;
  if (m == 0 || !parse_int(day_s, &day) || !parse_int(year_s, &year)) return std::nullopt;
  if (day < 1 || day > 31) return std::nullopt;

  int hh = 0, mm = 0, ss = 0;
  if (clock.size() != 8 || clock[2] != ':' || clock[5] != ':') return std::nullopt;
  if (!parse_int(clock.substr(0, 2), &hh) || !parse_int(clock.substr(3, 2), &mm) ||
      !parse_int(clock.substr(6, 2), &ss))
    return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;

  if (zone.size() != 5 || (zone[0] != '+' && zone[0] != '-')) return std::nullopt;
  int zh = 0, zm = 0;
  if (!parse_int(zone.substr(1, 2), &zh) || !parse_int(zone.substr(3, 2), &zm)) return std::nullopt;
  int64_t zone_seconds = (zh * 3600LL + zm * 60LL) * (zone[0] == '-' ? -1 : 1);

  int64_t t = days_from_civil(year, m, day) * 86400LL + hh * 3600LL + mm * 60LL + ss;
  return t - zone_seconds;
}

Dataset parse_checkins(std::istream& raw_stream) {
  if (raw_stream.bad()) throw DataError("check-in stream is unreadable");

  Dataset out;
  std::map<std::string, std::vector<Visit>> per_user;
  std::vector<std::string> bad_samples;
  int64_t total_lines = 0;

  std::string line;
  while (std::getline(raw_stream, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total_lines;

    auto cols = split_tabs(line);
    bool ok = cols.size() == 8;
    double lat = 0.0, lon = 0.0;
    int offset = 0;
    std::optional<int64_t> ts;
    if (ok) ok = parse_double(cols[4], &lat) && lat >= -90.0 && lat <= 90.0;
    if (ok) ok = parse_double(cols[5], &lon) && lon >= -180.0 && lon <= 180.0;
    if (ok) ok = parse_int(cols[6], &offset);
    if (ok) {
      ts = parse_utc_time(cols[7]);
      ok = ts.has_value();
    }
    if (ok) ok = !cols[0].empty() && !cols[1].empty() && !cols[2].empty();

    if (!ok) {
      ++out.skipped_lines;
      if (bad_samples.size() < 5) bad_samples.push_back(line);
      continue;
    }

    const std::string& venue = cols[1];
    if (!out.pois.poi_index.count(venue)) {
      // first occurrence wins for coordinates and category
      out.pois.poi_index.emplace(venue, static_cast<int>(out.pois.pois.size()));
      out.pois.pois.push_back(Poi{venue, lat, lon, cols[2], 0.0, 0.0});
    }
    per_user[cols[0]].push_back(Visit{cols[0], *ts, offset, venue});
  }

  if (raw_stream.bad()) throw DataError("check-in stream became unreadable mid-parse");
  if (total_lines > 0 && out.skipped_lines * 10 > total_lines) {
    std::string msg = "more than 10% of lines are malformed (" +
                      std::to_string(out.skipped_lines) + "/" + std::to_string(total_lines) +
                      "); samples:";
    for (const auto& s : bad_samples) msg += "\n  " + s;
    throw DataError(msg);
  }

  out.pois.rebuild_indexes();
  out.histories.reserve(per_user.size());
  for (auto& [user, visits] : per_user) {
    std::stable_sort(visits.begin(), visits.end(),
                     [](const Visit& a, const Visit& b) { return a.timestamp < b.timestamp; });
    out.histories.push_back(UserHistory{user, std::move(visits)});
  }
  return out;
}

Dataset parse_checkins_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open check-in file: " + path);
  return parse_checkins(in);
}

ProjectionZone project_dataset(Dataset& dataset, std::optional<ProjectionZone> zone) {
  ProjectionZone z;
  if (zone) {
    z = *zone;
  } else {
    double lat_sum = 0.0, lon_sum = 0.0;
    int64_t n = 0;
    for (const auto& p : dataset.pois.pois) {
      lat_sum += p.lat;
      lon_sum += p.lon;
      ++n;
    }
    if (n == 0) return ProjectionZone{};
    z = zone_for(lat_sum / n, lon_sum / n);
  }
  for (auto& p : dataset.pois.pois) {
    auto [e, nrth] = project_to_plane(p.lat, p.lon, z);
    p.easting_m = e;
    p.northing_m = nrth;
  }
  return z;
}

namespace {

int prefix_len_before(const UserHistory& h, int64_t threshold) {
  auto it = std::lower_bound(h.visits.begin(), h.visits.end(), threshold,
                             [](const Visit& v, int64_t t) { return v.timestamp < t; });
  return static_cast<int>(it - h.visits.begin());
}

struct RatioParts {
  std::set<std::string> target_pois;
  std::set<std::string> train_pois;
  int64_t train_visits = 0;
  int64_t target_count = 0;
};

RatioParts ratio_parts_at(const std::vector<UserHistory>& histories, int64_t threshold) {
  RatioParts parts;
  for (const auto& h : histories) {
    for (int i = 0; i < h.size(); ++i) {
      if (h.visits[i].timestamp < threshold) {
        parts.train_pois.insert(h.visits[i].poi_id);
        ++parts.train_visits;
      } else if (i >= kMinPrefix) {
        parts.target_pois.insert(h.visits[i].poi_id);
        ++parts.target_count;
      }
    }
  }
  return parts;
}

double ratio_from_parts(const RatioParts& parts) {
  if (parts.target_pois.empty()) return 0.0;
  int64_t unseen = 0;
  for (const auto& id : parts.target_pois) {
    if (!parts.train_pois.count(id)) ++unseen;
  }
  return static_cast<double>(unseen) / static_cast<double>(parts.target_pois.size());
}

}  // namespace

double unseen_ratio_at(const std::vector<UserHistory>& histories, int64_t threshold) {
  return ratio_from_parts(ratio_parts_at(histories, threshold));
}

DatasetSplit temporal_split(const std::vector<UserHistory>& histories, int64_t threshold,
                            uint64_t seed) {
  DatasetSplit split;
  split.threshold = threshold;
  split.seed = seed;
  split.train_prefix_len.resize(histories.size());

  std::vector<TargetRef> targets;
  std::set<std::string> train_pois;
  int64_t train_visits = 0;
  for (size_t u = 0; u < histories.size(); ++u) {
    const auto& h = histories[u];
    split.train_prefix_len[u] = prefix_len_before(h, threshold);
    for (int i = 0; i < h.size(); ++i) {
      if (h.visits[i].timestamp < threshold) {
        train_pois.insert(h.visits[i].poi_id);
        ++train_visits;
      } else if (i >= kMinPrefix) {
        targets.push_back(TargetRef{static_cast<int>(u), i});
      }
    }
  }

  if (train_visits == 0) throw ConfigError("temporal split leaves an empty training partition");
  if (targets.empty()) throw ConfigError("temporal split leaves an empty test partition");

  // Even random assignment of targets to test/validation.
  std::vector<size_t> order(targets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, "split-assignment"));
  std::shuffle(order.begin(), order.end(), rng);
  size_t test_count = (order.size() + 1) / 2;
  std::vector<bool> is_test(targets.size(), false);
  for (size_t i = 0; i < test_count; ++i) is_test[order[i]] = true;
  for (size_t i = 0; i < targets.size(); ++i) {
    (is_test[i] ? split.test : split.validation).push_back(targets[i]);
  }

  std::set<std::string> target_pois;
  for (const auto& t : targets) {
    target_pois.insert(histories[t.user_index].visits[t.visit_index].poi_id);
  }
  for (const auto& id : target_pois) {
    if (!train_pois.count(id)) split.unseen_poi_ids.insert(id);
  }
  split.realized_unseen_ratio =
      target_pois.empty() ? 0.0
                          : static_cast<double>(split.unseen_poi_ids.size()) /
                                static_cast<double>(target_pois.size());
  return split;
}

int64_t find_threshold_for_unseen_ratio(const std::vector<UserHistory>& histories,
                                        double target_ratio, double* realized) {
  // Candidate thresholds are the distinct visit timestamps that keep both
  // partitions non-empty.
  std::set<int64_t> stamps;
  int64_t min_ts = std::numeric_limits<int64_t>::max();
  for (const auto& h : histories) {
    for (int i = 0; i < h.size(); ++i) {
      min_ts = std::min(min_ts, h.visits[i].timestamp);
      if (i >= kMinPrefix) stamps.insert(h.visits[i].timestamp);
    }
  }
  std::vector<int64_t> candidates;
  for (int64_t t : stamps) {
    if (t > min_ts) candidates.push_back(t);  // keeps at least one train visit
  }
  if (candidates.empty()) throw ConfigError("no feasible split threshold in the data range");

  auto ratio_at = [&](size_t idx) { return unseen_ratio_at(histories, candidates[idx]); };

  size_t best_idx = 0;
  double best_ratio = 0.0;
  if (candidates.size() <= 4096) {
    double best_dist = 1e18;
    for (size_t i = 0; i < candidates.size(); ++i) {
      double r = ratio_at(i);
      double d = std::abs(r - target_ratio);
      if (d < best_dist - 1e-15) {
        best_dist = d;
        best_idx = i;
        best_ratio = r;
      }
    }
  } else {
    // Ratio decreases (in practice) as the threshold moves later. Binary
    // search for the crossing, then refine in a window around it.
    size_t lo = 0, hi = candidates.size() - 1;
    while (hi - lo > 1) {
      size_t mid = lo + (hi - lo) / 2;
      if (ratio_at(mid) >= target_ratio) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    size_t from = lo > 64 ? lo - 64 : 0;
    size_t to = std::min(candidates.size() - 1, hi + 64);
    double best_dist = 1e18;
    for (size_t i = from; i <= to; ++i) {
      double r = ratio_at(i);
      double d = std::abs(r - target_ratio);
      if (d < best_dist - 1e-15) {
        best_dist = d;
        best_idx = i;
        best_ratio = r;
      }
    }
  }

  if (std::abs(best_ratio - target_ratio) > 0.05) {
    double first = ratio_at(0);
    double last = ratio_at(candidates.size() - 1);
    std::ostringstream msg;
    msg << "no split threshold realizes unseen ratio " << target_ratio
        << " within 5 percentage points; achievable range is approximately ["
        << std::min(first, last) << ", " << std::max(first, last) << "]";
    throw ConfigError(msg.str());
  }
  if (realized) *realized = best_ratio;
  return candidates[best_idx];
}

std::string split_manifest_to_json(const DatasetSplit& split, const Dataset& dataset) {
  ordered_json doc;
  doc["threshold"] = split.threshold;
  doc["seed"] = split.seed;
  doc["realized_unseen_ratio"] = split.realized_unseen_ratio;
  doc["unseen_poi_ids"] = split.unseen_poi_ids;
  auto targets = ordered_json::array();
  auto emit = [&](const std::vector<TargetRef>& list, const char* assignment) {
    for (const auto& t : list) {
      ordered_json row;
      row["user_id"] = dataset.histories[t.user_index].user_id;
      row["visit_index"] = t.visit_index;
      row["assignment"] = assignment;
      targets.push_back(std::move(row));
    }
  };
  emit(split.validation, "validation");
  emit(split.test, "test");
  std::sort(targets.begin(), targets.end(), [](const ordered_json& a, const ordered_json& b) {
    if (a["user_id"] != b["user_id"]) return a["user_id"] < b["user_id"];
    return a["visit_index"] < b["visit_index"];
  });
  doc["targets"] = std::move(targets);
  return doc.dump(2) + "\n";
}

DatasetSplit split_manifest_from_json(const std::string& json_text, const Dataset& dataset) {
  ordered_json doc = ordered_json::parse(json_text);
  DatasetSplit split;
  split.threshold = doc.at("threshold").get<int64_t>();
  split.seed = doc.at("seed").get<uint64_t>();
  split.realized_unseen_ratio = doc.at("realized_unseen_ratio").get<double>();
  for (const auto& id : doc.at("unseen_poi_ids")) {
    split.unseen_poi_ids.insert(id.get<std::string>());
  }
  split.train_prefix_len.resize(dataset.histories.size());
  for (size_t u = 0; u < dataset.histories.size(); ++u) {
    split.train_prefix_len[u] = prefix_len_before(dataset.histories[u], split.threshold);
  }
  for (const auto& row : doc.at("targets")) {
    int u = dataset.user_index(row.at("user_id").get<std::string>());
    if (u < 0) throw DataError("split manifest references unknown user: " +
                               row.at("user_id").get<std::string>());
    int vi = row.at("visit_index").get<int>();
    if (vi < 0 || vi >= dataset.histories[u].size()) {
      throw DataError("split manifest visit_index out of range for user " +
                      dataset.histories[u].user_id);
    }
    TargetRef t{u, vi};
    if (row.at("assignment").get<std::string>() == "test") {
      split.test.push_back(t);
    } else {
      split.validation.push_back(t);
    }
  }
  return split;
}

std::vector<UserHistory> train_histories(const Dataset& dataset, const DatasetSplit& split) {
  std::vector<UserHistory> out;
  out.reserve(dataset.histories.size());
  for (size_t u = 0; u < dataset.histories.size(); ++u) {
    const auto& h = dataset.histories[u];
    UserHistory t;
    t.user_id = h.user_id;
    t.visits.assign(h.visits.begin(), h.visits.begin() + split.train_prefix_len[u]);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TargetRef> train_targets(const Dataset& dataset, const DatasetSplit& split) {
  std::vector<TargetRef> out;
  for (size_t u = 0; u < dataset.histories.size(); ++u) {
    for (int i = kMinPrefix; i < split.train_prefix_len[u]; ++i) {
      out.push_back(TargetRef{static_cast<int>(u), i});
    }
  }
  return out;
}

}  // namespace poicast
