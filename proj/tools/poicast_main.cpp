#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "poicast/commands.hpp"
#include "poicast/common.hpp"
#include "poicast/run_config.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> data_path;
  std::optional<std::string> output_dir;
  std::optional<uint64_t> seed;
  std::optional<std::string> methods;
  std::optional<int64_t> threshold;
  std::optional<double> target_unseen_ratio;
  bool deterministic = false;
  bool resume = false;
};

void add_common_options(CLI::App* cmd, Overrides* ov) {
  cmd->add_option("-c,--config", ov->config_path, "run config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--data", ov->data_path, "override check-ins TSV path");
  cmd->add_option("--output-dir", ov->output_dir, "override output directory");
  cmd->add_option("--seed", ov->seed, "override RNG seed");
  cmd->add_option("--methods", ov->methods, "override methods")
      ->check(CLI::IsMember({"joint", "baseline", "both"}));
  CLI::Option* thr = cmd->add_option("--threshold", ov->threshold, "override split threshold");
  cmd->add_option("--target-unseen-ratio", ov->target_unseen_ratio,
                  "override target unseen ratio")
      ->excludes(thr);
  cmd->add_flag("--deterministic", ov->deterministic, "zero wall-clock fields in outputs");
}

poicast::RunConfig resolve_config(const Overrides& ov) {
  poicast::RunConfig config = poicast::load_run_config(ov.config_path);
  if (ov.data_path) config.data_path = *ov.data_path;
  if (ov.output_dir) {
    config.output_dir = *ov.output_dir;
  } else if (const char* env = std::getenv("POICAST_OUTPUT_DIR"); env && *env) {
    config.output_dir = env;
  }
  if (ov.seed) config.seed = *ov.seed;
  if (ov.methods) config.methods = *ov.methods;
  if (ov.threshold) {
    config.split_threshold = *ov.threshold;
    config.target_unseen_ratio.reset();
  }
  if (ov.target_unseen_ratio) {
    config.target_unseen_ratio = *ov.target_unseen_ratio;
    config.split_threshold.reset();
  }
  if (ov.deterministic) config.deterministic = true;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"next-POI forecasting pipeline"};
  app.require_subcommand(1);

  Overrides ov;
  CLI::App* ingest = app.add_subcommand("ingest", "parse, project and split the check-ins");
  CLI::App* train = app.add_subcommand("train", "train the configured methods");
  CLI::App* eval = app.add_subcommand("eval", "rank test targets and write reports");
  CLI::App* sweep = app.add_subcommand("sweep", "retrain across unseen-ratio splits");
  CLI::App* plot = app.add_subcommand("plot", "regenerate SVG plots from saved outputs");
  for (CLI::App* cmd : {ingest, train, eval, sweep, plot}) add_common_options(cmd, &ov);
  train->add_flag("--resume", ov.resume, "continue from saved checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const bool is_train = train->parsed() || sweep->parsed();
  poicast::CommandIO io{&std::cout, &std::cerr};
  try {
    const poicast::RunConfig config = resolve_config(ov);
    if (ingest->parsed()) poicast::cmd_ingest(config, io);
    if (train->parsed()) poicast::cmd_train(config, ov.resume, io);
    if (eval->parsed()) poicast::cmd_eval(config, io);
    if (sweep->parsed()) poicast::cmd_sweep(config, io);
    if (plot->parsed()) poicast::cmd_plot(config, io);
  } catch (const poicast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const poicast::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const poicast::TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_train ? 3 : 2;
  }
  return 0;
}
