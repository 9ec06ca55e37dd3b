#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "poicast/geo_prior.hpp"
#include "poicast/ingest.hpp"
#include "poicast/ranker.hpp"

namespace poicast {

// A rankable forecasting method, abstracted so the harness can evaluate
// trained models and synthetic references the same way. The callable owns
// (or safely references) everything it needs.
struct MethodHandle {
  std::string name;
  std::function<ForecastRanking(const TargetRef&)> rank;
};

// Trains nothing itself: builds a ready-to-rank handle for a given split.
// Used by the sweep, which re-splits and re-trains per ratio point.
struct NamedMethodFactory {
  std::string name;
  std::function<MethodHandle(const Dataset& dataset, const DatasetSplit& split, uint64_t seed)>
      make;
};

struct EvalReport {
  std::string method;
  std::vector<int> k_values;
  std::vector<double> accuracy;         // over all test targets
  std::vector<double> unseen_accuracy;  // over unseen-POI targets; empty when none exist
  int64_t target_count = 0;
  int64_t unseen_target_count = 0;
};

// Acc@k over explicit (ranking, truth poi id) pairs.
double accuracy_at_k(const std::vector<std::pair<ForecastRanking, std::string>>& results,
                     const PoiSet& candidates, int k);

// Ranks every test target once and scores Acc@k for each k, overall and on
// the unseen-POI subset (rankings always cover the full candidate set).
// When dump_top_n > 0, writes one JSON line per target with its top-n
// candidates to dump_stream.
EvalReport evaluate(const MethodHandle& method, const Dataset& dataset, const DatasetSplit& split,
                    const std::vector<int>& k_values, std::ostream* dump_stream = nullptr,
                    int dump_top_n = 0);

struct SweepPoint {
  double target_ratio = 0.0;
  double realized_ratio = 0.0;
  int64_t threshold = 0;
  // method name -> accuracies aligned with k_values (all test targets)
  std::map<std::string, std::vector<double>> accuracy;
};

struct SweepResult {
  std::vector<int> k_values;
  std::vector<SweepPoint> points;  // ascending realized ratio
  // method name -> per-k least-squares slope of accuracy vs realized ratio
  std::map<std::string, std::vector<double>> slopes;
};

// Fits y = a + b*x and returns b. Fatal when fewer than two distinct x.
double least_squares_slope(const std::vector<std::pair<double, double>>& points);

// Re-splits the data at each requested unseen ratio, rebuilds every method
// and evaluates it. Unrealizable or duplicate ratios are skipped with a
// warning; fewer than two surviving points is fatal.
SweepResult sweep_unseen_ratio(const std::vector<NamedMethodFactory>& methods,
                               const Dataset& dataset, const std::vector<double>& ratios,
                               const std::vector<int>& k_values, uint64_t seed,
                               std::ostream* warnings = nullptr);

// Report emission. Paths are created under output_dir; reruns with the
// same inputs produce byte-identical files.
struct ReportContext {
  std::string run_id;
  std::string output_dir;
};

// results.json, table1.csv, prior_histogram.csv, prior_histogram.svg
void emit_report(const std::vector<EvalReport>& reports, const ProximityPrior& prior,
                 const DatasetSplit& split, const ReportContext& ctx);
// sweep.json, sweep.csv, sweep.svg
void emit_report(const SweepResult& sweep, const ReportContext& ctx);

// Deterministic, dependency-free SVG renderings of the two plots.
std::string render_histogram_svg(const ProximityPrior& prior);
std::string render_sweep_svg(const SweepResult& sweep);

// Atomic write (tmp + rename) of one file under dir, creating dir first.
void write_text_file(const std::string& dir, const std::string& name, const std::string& content);

}  // namespace poicast
