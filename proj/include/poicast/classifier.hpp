#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "poicast/encoder.hpp"
#include "poicast/ingest.hpp"
#include "poicast/nn.hpp"

namespace poicast {

struct CategoryDistribution {
  Eigen::VectorXd probabilities;  // over the category classes

  int argmax() const;
};

// Two-layer MLP with a GELU between, then softmax over category classes.
class CategoryHead {
 public:
  CategoryHead() = default;
  CategoryHead(int hidden_dim, int class_count, nn::ParamStore& store, std::mt19937_64& rng);

  struct Cache {
    nn::Matrix input;       // 1 x hidden
    nn::Matrix hidden_pre;  // 1 x hidden, pre-GELU
    Eigen::VectorXd probabilities;
  };

  CategoryDistribution forward(const Eigen::VectorXd& fused, Cache& cache) const;
  // Takes dL/d(logits), accumulates parameter grads, returns dL/d(fused).
  Eigen::VectorXd backward(const Cache& cache, const Eigen::VectorXd& d_logits) const;
  int class_count() const;

 private:
  nn::Linear fc1_, fc2_;
};

// Direct next-POI classifier over the training-visit vocabulary. A POI
// outside that vocabulary has no output unit, which is exactly why this
// baseline cannot rank unseen POIs.
class BaselineHead {
 public:
  BaselineHead() = default;
  BaselineHead(int hidden_dim, int class_count, nn::ParamStore& store, std::mt19937_64& rng);

  struct Cache {
    nn::Matrix input;
    Eigen::VectorXd probabilities;
  };

  Eigen::VectorXd forward(const Eigen::VectorXd& fused, Cache& cache) const;  // probabilities
  Eigen::VectorXd backward(const Cache& cache, const Eigen::VectorXd& d_logits) const;
  int class_count() const;

 private:
  nn::Linear out_;
};

// Cross-entropy against the true class, floored to avoid -inf on a
// zero-probability truth.
double cross_entropy(const Eigen::VectorXd& probabilities, int true_class);

inline double category_loss(const CategoryDistribution& dist, int true_class) {
  return cross_entropy(dist.probabilities, true_class);
}

enum class Method { kJoint, kBaseline };
std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;

  void validate() const;
};

std::string optimizer_config_to_json(const OptimizerConfig& config);
OptimizerConfig optimizer_config_from_json(const std::string& json_text);

// A complete trainable bundle: encoder, social fusion, and one head.
// Heap-only (the submodules hold pointers into the store).
struct Model {
  Method method;
  EncoderConfig config;
  Vocabularies vocabs;
  nn::ParamStore store;
  std::unique_ptr<SequenceEncoder> encoder;
  std::unique_ptr<SocialFusion> fusion;
  CategoryHead category_head;  // joint method
  BaselineHead baseline_head;  // baseline method

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  int label_of(const PoiSet& pois, const Visit& target) const;  // -1 when unscorable

 private:
  Model(Method m, EncoderConfig c, Vocabularies v) : method(m), config(std::move(c)), vocabs(std::move(v)) {}
  friend std::unique_ptr<Model> make_model(Method, const EncoderConfig&, Vocabularies, uint64_t);
};

std::unique_ptr<Model> make_model(Method method, const EncoderConfig& config, Vocabularies vocabs,
                                  uint64_t seed);

// Fixed neighbor lists (from training co-location) plus per-user sequence
// vectors refreshed from each user's last training window.
struct NeighborContext {
  std::vector<std::vector<int>> neighbor_lists;
  nn::Matrix user_vectors;       // num_users x hidden
  std::vector<bool> has_vector;  // false for users without training visits

  std::vector<Eigen::VectorXd> vectors_for(int user) const;
};

NeighborContext make_neighbor_context(const Dataset& dataset, const DatasetSplit& split,
                                      int neighbor_count);
// Re-encodes every user's last training window with the current parameters.
void refresh_user_vectors(const Model& model, const Dataset& dataset, const DatasetSplit& split,
                          NeighborContext& ctx);

struct ForwardCache {
  SequenceEncoder::Cache encoder;
  SocialFusion::Cache fusion;
  CategoryHead::Cache category;
  BaselineHead::Cache baseline;
  std::vector<Eigen::VectorXd> neighbors;
};

// Probabilities for one prediction target: category classes for the joint
// method, training-POI classes for the baseline. The window ends at the
// visit preceding the target.
Eigen::VectorXd model_probabilities(const Model& model, const Dataset& dataset,
                                    const TargetRef& target, const NeighborContext& ctx,
                                    ForwardCache& cache);

// Forward + backward for one example; gradients are scaled by grad_scale
// and accumulated into the store. Returns the loss.
double train_example(Model& model, const Dataset& dataset, const TargetRef& target,
                     const NeighborContext& ctx, int label, double grad_scale,
                     ForwardCache& cache);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;  // Acc@1 (category for joint, POI for baseline)
  double wall_seconds = 0.0;
};

// Mutable training state; everything needed to stop and resume exactly.
struct TrainSession {
  std::unique_ptr<Model> model;
  nn::AdamOptimizer adam;
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  int epochs_done = 0;
  int best_epoch = -1;
  double best_val_metric = -1.0;
  std::vector<nn::Matrix> best_params;
};

TrainSession make_session(Method method, const EncoderConfig& config, Vocabularies vocabs,
                          const OptimizerConfig& optimizer, uint64_t seed);

// Runs training epochs until max_epochs or patience exhausts, invoking
// on_epoch after each completed epoch (checkpointing hook). Safe to call
// on a resumed session: it continues from epochs_done.
void train_loop(TrainSession& session, const Dataset& dataset, const DatasetSplit& split,
                const std::function<void(const TrainSession&, const EpochMetrics&)>& on_epoch);

// Copies the best parameter snapshot back into the live model.
void restore_best(TrainSession& session);

// Validation-set Acc@1 for the session's method.
double validation_metric(const Model& model, const Dataset& dataset, const DatasetSplit& split,
                         const NeighborContext& ctx);

void save_checkpoint(const std::string& path, const TrainSession& session);
TrainSession load_checkpoint(const std::string& path);

}  // namespace poicast
