#pragma once

#include <iosfwd>
#include <string>

#include "poicast/run_config.hpp"

namespace poicast {

// Library entry points behind the CLI subcommands. Each validates inputs
// before writing anything, throws ConfigError / DataError / TrainError on
// failure and returns only on success.
struct CommandIO {
  std::ostream* out = nullptr;  // progress and summaries
  std::ostream* err = nullptr;  // warnings
};

// Parses and projects the data, derives (or reloads) the temporal split
// and writes manifest.json, vocabularies, ingest_stats.json and
// run_config.json into output_dir.
void cmd_ingest(const RunConfig& config, const CommandIO& io);

// Ingest (if needed) + proximity prior + model training with per-epoch
// checkpoints and metrics CSVs. With resume, continues from the saved
// checkpoints instead of starting over.
void cmd_train(const RunConfig& config, bool resume, const CommandIO& io);

// Ranks every test target with the trained checkpoints and writes
// results.json, table1.csv and the prior histogram.
void cmd_eval(const RunConfig& config, const CommandIO& io);

// Re-splits at each requested unseen ratio, retrains and re-evaluates,
// then writes sweep.json / sweep.csv / sweep.svg.
void cmd_sweep(const RunConfig& config, const CommandIO& io);

// Regenerates the SVG plots from data already in output_dir.
void cmd_plot(const RunConfig& config, const CommandIO& io);

}  // namespace poicast
