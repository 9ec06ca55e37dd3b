#include "poicast/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "poicast/common.hpp"

namespace poicast {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void bad_key(const std::string& section, const std::string& key) {
  throw ConfigError("unknown config key '" + key + "'" +
                    (section.empty() ? "" : " in section '" + section + "'"));
}

}  // namespace

void RunConfig::validate() const {
  if (data_path.empty()) throw ConfigError("data_path must be set");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (methods != "joint" && methods != "baseline" && methods != "both")
    throw ConfigError("methods must be one of joint, baseline, both");
  if (projection_zone) {
    if (projection_zone->zone < 1 || projection_zone->zone > 60)
      throw ConfigError("projection zone must lie in 1..60");
  }
  if (!(bucketing.bucket_width_km > 0.0)) throw ConfigError("bucket_width_km must be > 0");
  if (!(bucketing.max_distance_km >= bucketing.bucket_width_km))
    throw ConfigError("max_distance_km must be at least one bucket wide");
  if (!(smoothing_alpha >= 0.0)) throw ConfigError("smoothing_alpha must be >= 0");
  encoder.validate();
  optimizer.validate();
  if (split_threshold.has_value() == target_unseen_ratio.has_value())
    throw ConfigError("set exactly one of split.threshold and split.target_unseen_ratio");
  if (target_unseen_ratio && !(*target_unseen_ratio > 0.0 && *target_unseen_ratio < 1.0))
    throw ConfigError("target_unseen_ratio must lie strictly between 0 and 1");
  if (k_values.empty()) throw ConfigError("eval.k_values must not be empty");
  for (size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] < 1) throw ConfigError("eval.k_values entries must be >= 1");
    if (i > 0 && k_values[i] <= k_values[i - 1])
      throw ConfigError("eval.k_values must be strictly increasing");
  }
  if (dump_top_k < 0) throw ConfigError("eval.dump_top_k must be >= 0");
  for (double r : sweep_ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sweep.ratios must lie in [0, 1]");
}

std::vector<Method> RunConfig::method_list() const {
  if (methods == "joint") return {Method::kJoint};
  if (methods == "baseline") return {Method::kBaseline};
  return {Method::kBaseline, Method::kJoint};
}

RunConfig run_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig config;
  for (const auto& [key, value] : j.items()) {
    if (key == "data_path") {
      config.data_path = value.get<std::string>();
    } else if (key == "output_dir") {
      config.output_dir = value.get<std::string>();
    } else if (key == "seed") {
      config.seed = value.get<uint64_t>();
    } else if (key == "methods") {
      config.methods = value.get<std::string>();
    } else if (key == "deterministic") {
      config.deterministic = value.get<bool>();
    } else if (key == "projection_zone") {
      if (value.is_null()) continue;
      ProjectionZone zone;
      for (const auto& [zkey, zvalue] : value.items()) {
        if (zkey == "zone")
          zone.zone = zvalue.get<int>();
        else if (zkey == "north")
          zone.north = zvalue.get<bool>();
        else
          bad_key("projection_zone", zkey);
      }
      config.projection_zone = zone;
    } else if (key == "bucketing") {
      for (const auto& [bkey, bvalue] : value.items()) {
        if (bkey == "bucket_width_km")
          config.bucketing.bucket_width_km = bvalue.get<double>();
        else if (bkey == "max_distance_km")
          config.bucketing.max_distance_km = bvalue.get<double>();
        else if (bkey == "smoothing_alpha")
          config.smoothing_alpha = bvalue.get<double>();
        else
          bad_key("bucketing", bkey);
      }
    } else if (key == "encoder") {
      config.encoder = encoder_config_from_json(value.dump());
    } else if (key == "optimizer") {
      config.optimizer = optimizer_config_from_json(value.dump());
    } else if (key == "split") {
      for (const auto& [skey, svalue] : value.items()) {
        if (skey == "threshold")
          config.split_threshold = svalue.get<int64_t>();
        else if (skey == "target_unseen_ratio")
          config.target_unseen_ratio = svalue.get<double>();
        else
          bad_key("split", skey);
      }
    } else if (key == "eval") {
      for (const auto& [ekey, evalue] : value.items()) {
        if (ekey == "k_values")
          config.k_values = evalue.get<std::vector<int>>();
        else if (ekey == "dump_top_k")
          config.dump_top_k = evalue.get<int>();
        else
          bad_key("eval", ekey);
      }
    } else if (key == "sweep") {
      for (const auto& [skey, svalue] : value.items()) {
        if (skey == "ratios")
          config.sweep_ratios = svalue.get<std::vector<double>>();
        else
          bad_key("sweep", skey);
      }
    } else {
      bad_key("", key);
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str());
}

std::string run_config_to_json(const RunConfig& config) {
  ordered_json j;
  j["data_path"] = config.data_path;
  j["output_dir"] = config.output_dir;
  j["seed"] = config.seed;
  j["methods"] = config.methods;
  j["deterministic"] = config.deterministic;
  if (config.projection_zone) {
    j["projection_zone"] = {{"zone", config.projection_zone->zone},
                            {"north", config.projection_zone->north}};
  } else {
    j["projection_zone"] = nullptr;
  }
  j["bucketing"] = {{"bucket_width_km", config.bucketing.bucket_width_km},
                    {"max_distance_km", config.bucketing.max_distance_km},
                    {"smoothing_alpha", config.smoothing_alpha}};
  j["encoder"] = nlohmann::json::parse(encoder_config_to_json(config.encoder));
  j["optimizer"] = nlohmann::json::parse(optimizer_config_to_json(config.optimizer));
  j["split"] = ordered_json::object();
  if (config.split_threshold) j["split"]["threshold"] = *config.split_threshold;
  if (config.target_unseen_ratio) j["split"]["target_unseen_ratio"] = *config.target_unseen_ratio;
  j["eval"] = {{"k_values", config.k_values}, {"dump_top_k", config.dump_top_k}};
  j["sweep"] = {{"ratios", config.sweep_ratios}};
  return j.dump(2);
}

std::string run_id(const RunConfig& config) {
  const std::string canonical = run_config_to_json(config);
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%012llx", static_cast<unsigned long long>(h & 0xffffffffffffULL));
  return std::string(buf);
}

}  // namespace poicast
