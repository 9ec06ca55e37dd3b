#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "support/synthetic_world.hpp"

// Emits a synthetic check-ins file for demos and tests, plus the split
// threshold that matches the world's construction.
int main(int argc, char** argv) {
  CLI::App app{"synthetic check-in generator"};

  std::string mode = "swap";
  std::string out_path;
  poicast::synth::WorldConfig config;
  app.add_option("--mode", mode, "static | swap | gradual | turnover")
      ->check(CLI::IsMember({"static", "swap", "gradual", "turnover"}));
  app.add_option("--users", config.users)->check(CLI::PositiveNumber);
  app.add_option("--visits", config.visits_per_user)->check(CLI::PositiveNumber);
  app.add_option("--categories", config.categories)->check(CLI::PositiveNumber);
  app.add_option("--pois-per-category", config.pois_per_category)->check(CLI::PositiveNumber);
  app.add_option("--swap-fraction", config.swap_fraction)->check(CLI::Range(0.0, 1.0));
  app.add_option("--turnover-events", config.turnover_events,
                 "replacement count for turnover mode (0 = 4x the POI count)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", config.seed);
  app.add_option("--out", out_path, "check-ins TSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    config.mode = poicast::synth::mode_from_name(mode);
    const poicast::synth::World world = poicast::synth::generate_world(config);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << world.checkins_tsv;
    out.close();

    nlohmann::ordered_json info;
    info["mode"] = mode;
    info["pois"] = world.pois.size();
    info["checkins"] = static_cast<long long>(config.users) * config.visits_per_user;
    info["start_time"] = world.start_time;
    info["end_time"] = world.end_time;
    info["threshold"] = world.threshold;
    std::cout << info.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
