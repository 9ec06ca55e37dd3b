#include "poicast/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "poicast/common.hpp"
#include "poicast/eval.hpp"
#include "poicast/ingest.hpp"

namespace fs = std::filesystem;

namespace poicast {

namespace {

using nlohmann::ordered_json;

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

void log(const CommandIO& io, const std::string& line) {
  if (io.out) *io.out << line << "\n";
}

void warn(const CommandIO& io, const std::string& line) {
  if (io.err) *io.err << "warning: " << line << "\n";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Prepared {
  Dataset dataset;
  DatasetSplit split;
  ProjectionZone zone;
};

// Shared front half of every subcommand: parse, project, split. The split
// manifest in output_dir wins when present (so train/eval stay consistent);
// otherwise the split is derived from the config and, when write_outputs
// is set, persisted along with the vocabularies and ingest stats.
Prepared prepare_data(const RunConfig& config, const CommandIO& io, bool write_outputs) {
  config.validate();

  Prepared prep;
  prep.dataset = parse_checkins_file(config.data_path);
  prep.zone = project_dataset(prep.dataset, config.projection_zone);
  if (prep.dataset.skipped_lines > 0)
    warn(io, std::to_string(prep.dataset.skipped_lines) + " malformed lines skipped");

  const fs::path manifest_path = fs::path(config.output_dir) / "manifest.json";
  bool from_manifest = false;
  if (fs::exists(manifest_path)) {
    prep.split = split_manifest_from_json(read_file(manifest_path), prep.dataset);
    from_manifest = true;
    if (prep.split.seed != config.seed)
      throw ConfigError("manifest.json was built with seed " + std::to_string(prep.split.seed) +
                        ", config says " + std::to_string(config.seed) +
                        "; clear the output directory to re-split");
    if (config.split_threshold && *config.split_threshold != prep.split.threshold)
      throw ConfigError("manifest.json was built with threshold " +
                        std::to_string(prep.split.threshold) + ", config says " +
                        std::to_string(*config.split_threshold) +
                        "; clear the output directory to re-split");
    if (config.target_unseen_ratio &&
        std::abs(prep.split.realized_unseen_ratio - *config.target_unseen_ratio) > 0.05)
      throw ConfigError("manifest.json realizes unseen ratio " +
                        fmt(prep.split.realized_unseen_ratio, 4) + ", config asks for " +
                        fmt(*config.target_unseen_ratio, 4) +
                        "; clear the output directory to re-split");
    log(io, "split: reusing " + manifest_path.string());
  } else {
    int64_t threshold = 0;
    if (config.split_threshold) {
      threshold = *config.split_threshold;
    } else {
      double realized = 0.0;
      threshold = find_threshold_for_unseen_ratio(prep.dataset.histories,
                                                  *config.target_unseen_ratio, &realized);
      log(io, "split: threshold " + std::to_string(threshold) + " realizes unseen ratio " +
                  fmt(realized, 4));
    }
    prep.split = temporal_split(prep.dataset.histories, threshold, config.seed);
  }

  std::ostringstream stats_line;
  stats_line << "data: " << prep.dataset.histories.size() << " users, "
             << prep.dataset.pois.poi_count() << " POIs, " << prep.dataset.total_visits()
             << " visits; " << prep.split.test.size() << " test / " << prep.split.validation.size()
             << " validation targets, unseen ratio " << fmt(prep.split.realized_unseen_ratio, 4);
  log(io, stats_line.str());

  if (write_outputs && !from_manifest) {
    Vocabularies vocabs = build_vocabularies(prep.dataset, prep.split);
    int64_t train_visits = 0;
    for (int n : prep.split.train_prefix_len) train_visits += n;

    ordered_json stats;
    stats["run_id"] = run_id(config);
    stats["data_path"] = config.data_path;
    stats["users"] = prep.dataset.histories.size();
    stats["pois"] = prep.dataset.pois.poi_count();
    stats["categories"] = prep.dataset.pois.category_count();
    stats["visits"] = prep.dataset.total_visits();
    stats["skipped_lines"] = prep.dataset.skipped_lines;
    stats["projection_zone"] = {{"zone", prep.zone.zone}, {"north", prep.zone.north}};
    stats["threshold"] = prep.split.threshold;
    stats["realized_unseen_ratio"] = prep.split.realized_unseen_ratio;
    stats["unseen_poi_count"] = prep.split.unseen_poi_ids.size();
    stats["train_visits"] = train_visits;
    stats["validation_targets"] = prep.split.validation.size();
    stats["test_targets"] = prep.split.test.size();

    write_text_file(config.output_dir, "run_config.json", run_config_to_json(config) + "\n");
    write_text_file(config.output_dir, "manifest.json",
                    split_manifest_to_json(prep.split, prep.dataset));
    write_text_file(config.output_dir, "poi_vocabulary.json", vocabs.poi.to_json() + "\n");
    write_text_file(config.output_dir, "category_vocabulary.json", vocabs.category.to_json() + "\n");
    write_text_file(config.output_dir, "ingest_stats.json", stats.dump(2) + "\n");
  }
  return prep;
}

std::string checkpoint_name(Method method) {
  return "checkpoint_" + method_name(method) + ".bin";
}

// Acc@1 of the snapshot stored as "best" in a checkpoint, for resume
// verification.
double best_params_metric(TrainSession& session, const Dataset& dataset,
                          const DatasetSplit& split) {
  Model& model = *session.model;
  std::vector<nn::Matrix> current(model.store.size());
  for (size_t i = 0; i < model.store.size(); ++i) current[i] = model.store.at(i).value;
  restore_best(session);
  NeighborContext ctx = make_neighbor_context(dataset, split, model.config.neighbor_count);
  refresh_user_vectors(model, dataset, split, ctx);
  double metric = validation_metric(model, dataset, split, ctx);
  for (size_t i = 0; i < model.store.size(); ++i) model.store.at(i).value = current[i];
  return metric;
}

void train_one(const RunConfig& config, const Prepared& prep, const Vocabularies& vocabs,
               Method method, bool resume, const CommandIO& io) {
  const std::string tag = method_name(method);
  const fs::path ckpt_path = fs::path(config.output_dir) / checkpoint_name(method);
  const fs::path csv_path = fs::path(config.output_dir) / ("metrics_" + tag + ".csv");
  const uint64_t method_seed = mix_seed(config.seed, "train-" + tag);

  TrainSession session;
  bool resumed = false;
  if (resume && fs::exists(ckpt_path)) {
    session = load_checkpoint(ckpt_path.string());
    if (session.model->method != method)
      throw DataError(ckpt_path.string() + " holds a different method's model");
    if (encoder_config_to_json(session.model->config) != encoder_config_to_json(config.encoder))
      throw ConfigError("checkpoint encoder config differs from the current config; "
                        "remove " + ckpt_path.string() + " to retrain");
    // learning rate and batch size shape the trajectory; stopping policy
    // (max_epochs, patience) may legitimately change on resume
    if (session.optimizer.learning_rate != config.optimizer.learning_rate ||
        session.optimizer.batch_size != config.optimizer.batch_size)
      throw ConfigError("checkpoint optimizer config differs from the current config; "
                        "remove " + ckpt_path.string() + " to retrain");
    session.optimizer = config.optimizer;
    if (session.seed != method_seed)
      throw ConfigError("checkpoint seed differs from the current config; remove " +
                        ckpt_path.string() + " to retrain");
    if (session.best_epoch >= 0 && !prep.split.validation.empty()) {
      const double metric = best_params_metric(session, prep.dataset, prep.split);
      if (std::abs(metric - session.best_val_metric) > 1e-6)
        throw TrainError("checkpoint validation metric " + fmt(session.best_val_metric, 6) +
                         " does not reproduce (got " + fmt(metric, 6) +
                         "); data or split changed since it was written");
    }
    resumed = true;
    log(io, tag + ": resuming after epoch " + std::to_string(session.epochs_done - 1));
  } else {
    session = make_session(method, config.encoder, vocabs, config.optimizer, method_seed);
    log(io, tag + ": training " + std::to_string(session.model->store.scalar_count()) +
                " parameters");
  }

  const bool append_csv = resumed && fs::exists(csv_path);
  std::ofstream csv(csv_path, append_csv ? (std::ios::binary | std::ios::app)
                                         : (std::ios::binary | std::ios::trunc));
  if (!csv) throw DataError("cannot write " + csv_path.string());
  if (!append_csv) {
    csv << "epoch,train_loss,"
        << (method == Method::kJoint ? "val_category_acc1" : "val_poi_acc1") << ",wall_seconds\n";
  }

  train_loop(session, prep.dataset, prep.split,
             [&](const TrainSession& s, const EpochMetrics& m) {
               const double wall = config.deterministic ? 0.0 : m.wall_seconds;
               csv << m.epoch << "," << fmt(m.train_loss, 6) << "," << fmt(m.val_metric, 6) << ","
                   << fmt(wall, 3) << "\n";
               csv.flush();
               save_checkpoint(ckpt_path.string(), s);
               log(io, tag + ": epoch " + std::to_string(m.epoch) + " loss " +
                           fmt(m.train_loss, 4) + " val " + fmt(m.val_metric, 4));
             });

  restore_best(session);
  log(io, tag + ": best epoch " + std::to_string(session.best_epoch) + " (val " +
              fmt(session.best_val_metric, 4) + "), checkpoint " + ckpt_path.string());
}

// Ready-to-rank handle around a trained model. Owns the model and the
// neighbor context via shared_ptr so the closure can outlive this frame.
MethodHandle handle_for(std::unique_ptr<Model> model_in, const Dataset& dataset,
                        const DatasetSplit& split, std::shared_ptr<const ProximityPrior> prior) {
  std::shared_ptr<Model> model(std::move(model_in));
  auto ctx = std::make_shared<NeighborContext>(
      make_neighbor_context(dataset, split, model->config.neighbor_count));
  refresh_user_vectors(*model, dataset, split, *ctx);

  MethodHandle handle;
  handle.name = method_name(model->method);
  const Dataset* data = &dataset;
  handle.rank = [model, ctx, data, prior](const TargetRef& target) {
    ForwardCache cache;
    Eigen::VectorXd probs = model_probabilities(*model, *data, target, *ctx, cache);
    if (model->method == Method::kJoint) {
      const UserHistory& history = data->histories[target.user_index];
      const Poi& anchor = data->pois.poi(history.visits[target.visit_index - 1].poi_id);
      return rank_joint(probs, *prior, anchor, data->pois);
    }
    return rank_baseline(probs, model->vocabs.poi, data->pois);
  };
  return handle;
}

void check_same_categories(const Model& model, const PoiSet& pois, const std::string& ckpt) {
  if (model.vocabs.category.entries() != pois.category_vocabulary)
    throw DataError(ckpt + " was trained on data with a different category vocabulary");
}

SweepResult sweep_from_json(const std::string& json_text) {
  auto j = nlohmann::json::parse(json_text);
  SweepResult sweep;
  sweep.k_values = j.at("k_values").get<std::vector<int>>();
  for (const auto& pj : j.at("points")) {
    SweepPoint point;
    point.target_ratio = pj.at("target_ratio").get<double>();
    point.realized_ratio = pj.at("realized_ratio").get<double>();
    point.threshold = pj.at("threshold").get<int64_t>();
    for (const auto& [name, accs] : pj.at("accuracy").items()) {
      std::vector<double> acc;
      for (int k : sweep.k_values) acc.push_back(accs.at("acc@" + std::to_string(k)).get<double>());
      point.accuracy[name] = std::move(acc);
    }
    sweep.points.push_back(std::move(point));
  }
  for (const auto& [name, slopes] : j.at("slopes").items()) {
    std::vector<double> s;
    for (int k : sweep.k_values) s.push_back(slopes.at("acc@" + std::to_string(k)).get<double>());
    sweep.slopes[name] = std::move(s);
  }
  return sweep;
}

}  // namespace

void cmd_ingest(const RunConfig& config, const CommandIO& io) {
  prepare_data(config, io, /*write_outputs=*/true);
  log(io, "ingest: outputs written to " + config.output_dir);
}

void cmd_train(const RunConfig& config, bool resume, const CommandIO& io) {
  Prepared prep = prepare_data(config, io, /*write_outputs=*/true);

  ProximityPrior prior = estimate_prior(train_histories(prep.dataset, prep.split),
                                        prep.dataset.pois, config.bucketing,
                                        config.smoothing_alpha);
  write_text_file(config.output_dir, "proximity_prior.json", prior_to_json(prior));

  Vocabularies vocabs = build_vocabularies(prep.dataset, prep.split);
  for (Method method : config.method_list())
    train_one(config, prep, vocabs, method, resume, io);
}

void cmd_eval(const RunConfig& config, const CommandIO& io) {
  Prepared prep = prepare_data(config, io, /*write_outputs=*/true);

  const fs::path prior_path = fs::path(config.output_dir) / "proximity_prior.json";
  if (!fs::exists(prior_path))
    throw DataError(prior_path.string() + " not found; run the train subcommand first");
  auto prior = std::make_shared<const ProximityPrior>(prior_from_json(read_file(prior_path)));

  std::vector<EvalReport> reports;
  for (Method method : config.method_list()) {
    const fs::path ckpt_path = fs::path(config.output_dir) / checkpoint_name(method);
    if (!fs::exists(ckpt_path))
      throw DataError(ckpt_path.string() + " not found; run the train subcommand first");
    TrainSession session = load_checkpoint(ckpt_path.string());
    if (session.model->method != method)
      throw DataError(ckpt_path.string() + " holds a different method's model");
    restore_best(session);
    check_same_categories(*session.model, prep.dataset.pois, ckpt_path.string());

    MethodHandle handle = handle_for(std::move(session.model), prep.dataset, prep.split, prior);

    std::unique_ptr<std::ofstream> dump;
    const std::string dump_name = "topk_" + handle.name + ".jsonl";
    const fs::path dump_tmp = fs::path(config.output_dir) / (dump_name + ".tmp");
    if (config.dump_top_k > 0) {
      dump = std::make_unique<std::ofstream>(dump_tmp, std::ios::binary | std::ios::trunc);
      if (!*dump) throw DataError("cannot write " + dump_tmp.string());
    }

    EvalReport report = evaluate(handle, prep.dataset, prep.split, config.k_values, dump.get(),
                                 config.dump_top_k);
    if (dump) {
      dump->close();
      fs::rename(dump_tmp, fs::path(config.output_dir) / dump_name);
    }
    if (report.unseen_accuracy.empty())
      warn(io, handle.name + ": no unseen-POI targets in this split; unseen rows omitted");

    std::ostringstream line;
    line << handle.name << ":";
    for (size_t i = 0; i < config.k_values.size(); ++i)
      line << " acc@" << config.k_values[i] << " " << fmt(report.accuracy[i], 4);
    if (!report.unseen_accuracy.empty()) {
      line << " | unseen:";
      for (size_t i = 0; i < config.k_values.size(); ++i)
        line << " acc@" << config.k_values[i] << " " << fmt(report.unseen_accuracy[i], 4);
    }
    log(io, line.str());
    reports.push_back(std::move(report));
  }

  emit_report(reports, *prior, prep.split, ReportContext{run_id(config), config.output_dir});
  log(io, "eval: outputs written to " + config.output_dir);
}

void cmd_sweep(const RunConfig& config, const CommandIO& io) {
  config.validate();
  if (config.sweep_ratios.empty()) throw ConfigError("sweep.ratios must not be empty");

  Dataset dataset = parse_checkins_file(config.data_path);
  project_dataset(dataset, config.projection_zone);

  std::vector<NamedMethodFactory> factories;
  for (Method method : config.method_list()) {
    NamedMethodFactory factory;
    factory.name = method_name(method);
    factory.make = [method, &config, &io](const Dataset& data, const DatasetSplit& split,
                                          uint64_t seed) {
      Vocabularies vocabs = build_vocabularies(data, split);
      TrainSession session = make_session(method, config.encoder, vocabs, config.optimizer,
                                          mix_seed(seed, "sweep-" + method_name(method)));
      train_loop(session, data, split, {});
      restore_best(session);
      std::shared_ptr<const ProximityPrior> prior;
      if (method == Method::kJoint) {
        prior = std::make_shared<const ProximityPrior>(
            estimate_prior(train_histories(data, split), data.pois, config.bucketing,
                           config.smoothing_alpha));
      }
      log(io, method_name(method) + ": trained for threshold " +
                  std::to_string(split.threshold) + " (best val " +
                  fmt(session.best_val_metric, 4) + ")");
      return handle_for(std::move(session.model), data, split, prior);
    };
    factories.push_back(std::move(factory));
  }

  SweepResult sweep = sweep_unseen_ratio(factories, dataset, config.sweep_ratios, config.k_values,
                                         config.seed, io.err);
  emit_report(sweep, ReportContext{run_id(config), config.output_dir});

  for (const auto& [name, slopes] : sweep.slopes) {
    std::ostringstream line;
    line << name << " slopes:";
    for (size_t i = 0; i < sweep.k_values.size(); ++i)
      line << " acc@" << sweep.k_values[i] << " " << fmt(slopes[i], 4);
    log(io, line.str());
  }
  log(io, "sweep: outputs written to " + config.output_dir);
}

void cmd_plot(const RunConfig& config, const CommandIO& io) {
  config.validate();
  bool plotted = false;

  const fs::path prior_path = fs::path(config.output_dir) / "proximity_prior.json";
  if (fs::exists(prior_path)) {
    ProximityPrior prior = prior_from_json(read_file(prior_path));
    write_text_file(config.output_dir, "prior_histogram.csv", prior_histogram_csv(prior));
    write_text_file(config.output_dir, "prior_histogram.svg", render_histogram_svg(prior));
    log(io, "plot: prior_histogram.svg refreshed");
    plotted = true;
  }

  const fs::path sweep_path = fs::path(config.output_dir) / "sweep.json";
  if (fs::exists(sweep_path)) {
    SweepResult sweep = sweep_from_json(read_file(sweep_path));
    write_text_file(config.output_dir, "sweep.svg", render_sweep_svg(sweep));
    log(io, "plot: sweep.svg refreshed");
    plotted = true;
  }

  if (!plotted)
    throw DataError("nothing to plot in " + config.output_dir +
                    "; run the train or sweep subcommands first");
}

}  // namespace poicast
