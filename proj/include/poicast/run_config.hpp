#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poicast/classifier.hpp"
#include "poicast/encoder.hpp"
#include "poicast/geo_prior.hpp"
#include "poicast/projection.hpp"

namespace poicast {

// Everything a run needs, loaded from one JSON file. Flags and environment
// overrides are applied by the CLI before validation.
struct RunConfig {
  std::string data_path;
  std::string output_dir = "out";
  uint64_t seed = 7;
  std::string methods = "both";  // joint | baseline | both
  bool deterministic = false;    // zero out wall-clock fields in outputs

  std::optional<ProjectionZone> projection_zone;  // default: dataset centroid

  DistanceBucketing bucketing;
  double smoothing_alpha = 1.0;

  EncoderConfig encoder;
  OptimizerConfig optimizer;

  // Exactly one of the two must be set.
  std::optional<int64_t> split_threshold;
  std::optional<double> target_unseen_ratio;

  std::vector<int> k_values = {1, 5, 10, 20};
  int dump_top_k = 0;

  std::vector<double> sweep_ratios = {0.2, 0.4, 0.6, 0.8};

  void validate() const;
  std::vector<Method> method_list() const;
};

RunConfig run_config_from_json(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization: fixed key order, every field explicit. Equal
// configs serialize identically, so the run id is stable.
std::string run_config_to_json(const RunConfig& config);

// Short content hash of the canonical serialization, e.g. "a3f29c41d0b8".
std::string run_id(const RunConfig& config);

}  // namespace poicast
