#include "poicast/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "poicast/common.hpp"

namespace poicast {

namespace {

using nlohmann::ordered_json;

void check_finite_logits(const nn::Matrix& logits, const char* where) {
  if (logits.allFinite()) return;
  std::ostringstream msg;
  msg << "non-finite logits in " << where << " (first entries:";
  for (Eigen::Index j = 0; j < std::min<Eigen::Index>(logits.cols(), 4); ++j)
    msg << " " << logits(0, j);
  msg << ")";
  throw TrainError(msg.str());
}

}  // namespace

int CategoryDistribution::argmax() const {
  Eigen::Index idx = 0;
  probabilities.maxCoeff(&idx);
  return static_cast<int>(idx);
}

CategoryHead::CategoryHead(int hidden_dim, int class_count, nn::ParamStore& store,
                           std::mt19937_64& rng) {
  fc1_ = nn::Linear::make(store, "head.category.fc1", hidden_dim, hidden_dim, rng);
  fc2_ = nn::Linear::make(store, "head.category.fc2", hidden_dim, class_count, rng);
}

CategoryDistribution CategoryHead::forward(const Eigen::VectorXd& fused, Cache& cache) const {
  cache.input = fused.transpose();
  cache.hidden_pre = fc1_.forward(cache.input);
  nn::Matrix logits = fc2_.forward(nn::gelu(cache.hidden_pre));
  check_finite_logits(logits, "category head");
  cache.probabilities = nn::softmax(logits.row(0).transpose());
  return CategoryDistribution{cache.probabilities};
}

Eigen::VectorXd CategoryHead::backward(const Cache& cache, const Eigen::VectorXd& d_logits) const {
  nn::Matrix dl = d_logits.transpose();
  nn::Matrix dhidden = fc2_.backward(nn::gelu(cache.hidden_pre), dl);
  nn::Matrix dpre = nn::gelu_backward(cache.hidden_pre, dhidden);
  return fc1_.backward(cache.input, dpre).row(0).transpose();
}

int CategoryHead::class_count() const {
  return fc2_.weight ? static_cast<int>(fc2_.weight->value.cols()) : 0;
}

BaselineHead::BaselineHead(int hidden_dim, int class_count, nn::ParamStore& store,
                           std::mt19937_64& rng) {
  out_ = nn::Linear::make(store, "head.poi.out", hidden_dim, class_count, rng);
}

Eigen::VectorXd BaselineHead::forward(const Eigen::VectorXd& fused, Cache& cache) const {
  cache.input = fused.transpose();
  nn::Matrix logits = out_.forward(cache.input);
  check_finite_logits(logits, "POI head");
  cache.probabilities = nn::softmax(logits.row(0).transpose());
  return cache.probabilities;
}

Eigen::VectorXd BaselineHead::backward(const Cache& cache, const Eigen::VectorXd& d_logits) const {
  nn::Matrix dl = d_logits.transpose();
  return out_.backward(cache.input, dl).row(0).transpose();
}

int BaselineHead::class_count() const {
  return out_.weight ? static_cast<int>(out_.weight->value.cols()) : 0;
}

double cross_entropy(const Eigen::VectorXd& probabilities, int true_class) {
  if (true_class < 0 || true_class >= probabilities.size())
    throw std::out_of_range("cross_entropy: class index out of range");
  return -std::log(std::max(probabilities(true_class), 1e-12));
}

std::string method_name(Method method) {
  return method == Method::kJoint ? "joint" : "baseline";
}

Method method_from_name(const std::string& name) {
  if (name == "joint") return Method::kJoint;
  if (name == "baseline") return Method::kBaseline;
  throw ConfigError("unknown method '" + name + "' (expected joint or baseline)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

std::string optimizer_config_to_json(const OptimizerConfig& config) {
  ordered_json j;
  j["learning_rate"] = config.learning_rate;
  j["batch_size"] = config.batch_size;
  j["max_epochs"] = config.max_epochs;
  j["patience"] = config.patience;
  return j.dump(2);
}

OptimizerConfig optimizer_config_from_json(const std::string& json_text) {
  auto j = nlohmann::json::parse(json_text);
  if (!j.is_object()) throw ConfigError("optimizer config must be a JSON object");
  OptimizerConfig config;
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate")
      config.learning_rate = value.get<double>();
    else if (key == "batch_size")
      config.batch_size = value.get<int>();
    else if (key == "max_epochs")
      config.max_epochs = value.get<int>();
    else if (key == "patience")
      config.patience = value.get<int>();
    else
      throw ConfigError("unknown optimizer config key '" + key + "'");
  }
  config.validate();
  return config;
}

int Model::label_of(const PoiSet& pois, const Visit& target) const {
  if (method == Method::kJoint) return vocabs.category.class_of(pois.poi(target.poi_id).category_id);
  return vocabs.poi.class_of(target.poi_id);
}

std::unique_ptr<Model> make_model(Method method, const EncoderConfig& config, Vocabularies vocabs,
                                  uint64_t seed) {
  config.validate();
  auto model = std::unique_ptr<Model>(new Model(method, config, std::move(vocabs)));
  std::mt19937_64 rng(mix_seed(seed, "weight-init"));
  model->encoder = std::make_unique<SequenceEncoder>(config, model->vocabs.poi.row_count(),
                                                     model->vocabs.category.row_count(),
                                                     model->store, rng);
  model->fusion = std::make_unique<SocialFusion>(config, model->store, rng);
  if (method == Method::kJoint) {
    model->category_head =
        CategoryHead(config.hidden_dim, model->vocabs.category.class_count(), model->store, rng);
  } else {
    model->baseline_head =
        BaselineHead(config.hidden_dim, model->vocabs.poi.class_count(), model->store, rng);
  }
  return model;
}

std::vector<Eigen::VectorXd> NeighborContext::vectors_for(int user) const {
  std::vector<Eigen::VectorXd> out;
  for (int n : neighbor_lists[user]) {
    if (has_vector[n]) out.push_back(user_vectors.row(n).transpose());
  }
  return out;
}

NeighborContext make_neighbor_context(const Dataset& dataset, const DatasetSplit& split,
                                      int neighbor_count) {
  auto train = train_histories(dataset, split);
  auto matrix = CoLocationMatrix::build(train, dataset.pois);
  NeighborContext ctx;
  ctx.neighbor_lists.resize(train.size());
  for (int u = 0; u < static_cast<int>(train.size()); ++u)
    ctx.neighbor_lists[u] = select_neighbors(matrix, u, neighbor_count);
  ctx.has_vector.assign(train.size(), false);
  return ctx;
}

void refresh_user_vectors(const Model& model, const Dataset& dataset, const DatasetSplit& split,
                          NeighborContext& ctx) {
  const int users = static_cast<int>(dataset.histories.size());
  if (ctx.user_vectors.rows() != users || ctx.user_vectors.cols() != model.config.hidden_dim)
    ctx.user_vectors = nn::Matrix::Zero(users, model.config.hidden_dim);
  SequenceEncoder::Cache cache;
  for (int u = 0; u < users; ++u) {
    int prefix = split.train_prefix_len[u];
    if (prefix < 1) {
      ctx.has_vector[u] = false;
      continue;
    }
    VisitWindow window =
        build_window(dataset.histories[u], prefix - 1, dataset.pois, model.vocabs, model.config);
    ctx.user_vectors.row(u) = model.encoder->forward(window, cache).transpose();
    ctx.has_vector[u] = true;
  }
}

Eigen::VectorXd model_probabilities(const Model& model, const Dataset& dataset,
                                    const TargetRef& target, const NeighborContext& ctx,
                                    ForwardCache& cache) {
  const UserHistory& history = dataset.histories[target.user_index];
  VisitWindow window = build_window(history, target.visit_index - 1, dataset.pois, model.vocabs,
                                    model.config);
  Eigen::VectorXd own = model.encoder->forward(window, cache.encoder);
  cache.neighbors = ctx.vectors_for(target.user_index);
  Eigen::VectorXd fused = model.fusion->forward(own, cache.neighbors, cache.fusion);
  if (model.method == Method::kJoint)
    return model.category_head.forward(fused, cache.category).probabilities;
  return model.baseline_head.forward(fused, cache.baseline);
}

double train_example(Model& model, const Dataset& dataset, const TargetRef& target,
                     const NeighborContext& ctx, int label, double grad_scale,
                     ForwardCache& cache) {
  Eigen::VectorXd probs = model_probabilities(model, dataset, target, ctx, cache);
  double loss = cross_entropy(probs, label);
  Eigen::VectorXd d_logits = probs;
  d_logits(label) -= 1.0;
  d_logits *= grad_scale;
  Eigen::VectorXd d_fused = model.method == Method::kJoint
                                ? model.category_head.backward(cache.category, d_logits)
                                : model.baseline_head.backward(cache.baseline, d_logits);
  Eigen::VectorXd d_own = model.fusion->backward(cache.fusion, d_fused);
  model.encoder->backward(cache.encoder, d_own);
  return loss;
}

TrainSession make_session(Method method, const EncoderConfig& config, Vocabularies vocabs,
                          const OptimizerConfig& optimizer, uint64_t seed) {
  optimizer.validate();
  TrainSession session;
  session.model = make_model(method, config, std::move(vocabs), seed);
  session.adam = nn::AdamOptimizer(optimizer.learning_rate);
  session.adam.reset(session.model->store);
  session.optimizer = optimizer;
  session.seed = seed;
  return session;
}

double validation_metric(const Model& model, const Dataset& dataset, const DatasetSplit& split,
                         const NeighborContext& ctx) {
  if (split.validation.empty()) return 0.0;
  ForwardCache cache;
  int64_t correct = 0;
  for (const TargetRef& target : split.validation) {
    const Visit& truth = dataset.histories[target.user_index].visits[target.visit_index];
    int label = model.label_of(dataset.pois, truth);
    if (label < 0) continue;  // e.g. unseen POI under the baseline: always a miss
    Eigen::VectorXd probs = model_probabilities(model, dataset, target, ctx, cache);
    Eigen::Index argmax = 0;
    probs.maxCoeff(&argmax);
    if (static_cast<int>(argmax) == label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.validation.size());
}

void train_loop(TrainSession& session, const Dataset& dataset, const DatasetSplit& split,
                const std::function<void(const TrainSession&, const EpochMetrics&)>& on_epoch) {
  Model& model = *session.model;
  const OptimizerConfig& opt = session.optimizer;
  opt.validate();

  std::vector<TargetRef> targets = train_targets(dataset, split);
  if (targets.empty()) throw TrainError("no training targets (every user has too short a prefix)");
  NeighborContext ctx = make_neighbor_context(dataset, split, model.config.neighbor_count);

  auto exhausted = [&] {
    return session.best_epoch >= 0 &&
           session.epochs_done - 1 - session.best_epoch >= opt.patience;
  };

  ForwardCache cache;
  while (session.epochs_done < opt.max_epochs && !exhausted()) {
    const int epoch = session.epochs_done;
    const auto t0 = std::chrono::steady_clock::now();

    refresh_user_vectors(model, dataset, split, ctx);
    std::vector<TargetRef> order = targets;
    std::mt19937_64 rng(mix_seed(session.seed, 0x10000ULL + static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    const size_t total = order.size();
    for (size_t start = 0; start < total; start += static_cast<size_t>(opt.batch_size)) {
      const size_t n = std::min<size_t>(opt.batch_size, total - start);
      model.store.zero_grad();
      double batch_loss = 0.0;
      for (size_t i = start; i < start + n; ++i) {
        const TargetRef& target = order[i];
        const Visit& truth = dataset.histories[target.user_index].visits[target.visit_index];
        int label = model.label_of(dataset.pois, truth);
        if (label < 0) throw TrainError("training target outside the model's label space");
        batch_loss += train_example(model, dataset, target, ctx, label,
                                    1.0 / static_cast<double>(n), cache);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch starting at example " << start;
        throw TrainError(msg.str());
      }
      loss_sum += batch_loss;
      session.adam.step(model.store);
    }

    const double train_loss = loss_sum / static_cast<double>(total);
    refresh_user_vectors(model, dataset, split, ctx);
    // With no validation targets fall back to the training loss so "best"
    // still means something.
    const double val_metric = split.validation.empty()
                                  ? -train_loss
                                  : validation_metric(model, dataset, split, ctx);

    session.epochs_done = epoch + 1;
    if (val_metric > session.best_val_metric) {
      session.best_val_metric = val_metric;
      session.best_epoch = epoch;
      session.best_params.resize(model.store.size());
      for (size_t i = 0; i < model.store.size(); ++i)
        session.best_params[i] = model.store.at(i).value;
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = train_loss;
    metrics.val_metric = val_metric;
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(session, metrics);
  }
}

void restore_best(TrainSession& session) {
  if (session.best_epoch < 0 || session.best_params.empty()) return;
  nn::ParamStore& store = session.model->store;
  if (session.best_params.size() != store.size())
    throw TrainError("best-parameter snapshot does not match the model");
  for (size_t i = 0; i < store.size(); ++i) store.at(i).value = session.best_params[i];
}

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'O', 'I', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_blob(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_blob(std::istream& in) {
  uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("checkpoint truncated");
  return s;
}

void write_matrix(std::ostream& out, const nn::Matrix& m) {
  write_u64(out, static_cast<uint64_t>(m.rows()));
  write_u64(out, static_cast<uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

nn::Matrix read_matrix(std::istream& in) {
  uint64_t rows = read_u64(in);
  uint64_t cols = read_u64(in);
  nn::Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw DataError("checkpoint truncated");
  return m;
}

ordered_json vocabularies_to_json(const Vocabularies& vocabs) {
  ordered_json j;
  j["poi"] = nlohmann::json::parse(vocabs.poi.to_json());
  j["category"] = nlohmann::json::parse(vocabs.category.to_json());
  j["category_in_train"] = nlohmann::json::array();
  for (bool b : vocabs.category_in_train) j["category_in_train"].push_back(b ? 1 : 0);
  return j;
}

Vocabularies vocabularies_from_json(const nlohmann::json& j) {
  Vocabularies vocabs;
  vocabs.poi = Vocabulary::from_json(j.at("poi").dump());
  vocabs.category = Vocabulary::from_json(j.at("category").dump());
  for (const auto& b : j.at("category_in_train"))
    vocabs.category_in_train.push_back(b.get<int>() != 0);
  if (static_cast<int>(vocabs.category_in_train.size()) != vocabs.category.class_count())
    throw DataError("category_in_train length does not match category vocabulary");
  return vocabs;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainSession& session) {
  ordered_json meta;
  meta["method"] = method_name(session.model->method);
  meta["seed"] = session.seed;
  meta["epochs_done"] = session.epochs_done;
  meta["best_epoch"] = session.best_epoch;
  meta["best_val_metric"] = session.best_val_metric;
  meta["encoder"] = nlohmann::json::parse(encoder_config_to_json(session.model->config));
  meta["optimizer"] = nlohmann::json::parse(optimizer_config_to_json(session.optimizer));
  meta["vocabularies"] = vocabularies_to_json(session.model->vocabs);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint to " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_blob(out, meta.dump());
    session.model->store.save(out);
    write_u64(out, session.best_params.size());
    for (const auto& m : session.best_params) write_matrix(out, m);
    session.adam.save(out);
    if (!out) throw DataError("short write while saving checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TrainSession load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError(path + " is not a checkpoint file");
  auto meta = nlohmann::json::parse(read_blob(in));

  Method method = method_from_name(meta.at("method").get<std::string>());
  EncoderConfig config = encoder_config_from_json(meta.at("encoder").dump());
  OptimizerConfig optimizer = optimizer_config_from_json(meta.at("optimizer").dump());
  Vocabularies vocabs = vocabularies_from_json(meta.at("vocabularies"));
  uint64_t seed = meta.at("seed").get<uint64_t>();

  TrainSession session;
  session.model = make_model(method, config, std::move(vocabs), seed);
  session.optimizer = optimizer;
  session.seed = seed;
  session.epochs_done = meta.at("epochs_done").get<int>();
  session.best_epoch = meta.at("best_epoch").get<int>();
  session.best_val_metric = meta.at("best_val_metric").get<double>();

  session.model->store.load(in);
  uint64_t best_count = read_u64(in);
  if (best_count != 0 && best_count != session.model->store.size())
    throw DataError("checkpoint best-parameter count mismatch");
  session.best_params.clear();
  for (uint64_t i = 0; i < best_count; ++i) {
    nn::Matrix m = read_matrix(in);
    const nn::Matrix& expect = session.model->store.at(i).value;
    if (m.rows() != expect.rows() || m.cols() != expect.cols())
      throw DataError("checkpoint best-parameter shape mismatch");
    session.best_params.push_back(std::move(m));
  }
  session.adam = nn::AdamOptimizer(optimizer.learning_rate);
  session.adam.load(in, session.model->store);
  return session;
}

}  // namespace poicast
