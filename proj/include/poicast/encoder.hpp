#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "poicast/ingest.hpp"
#include "poicast/nn.hpp"
#include "poicast/types.hpp"

namespace poicast {

struct EncoderConfig {
  int window_length = 20;
  int hidden_dim = 128;
  int poi_embed_dim = 80;
  int category_embed_dim = 24;
  int temporal_embed_dim = 24;
  int num_attention_heads = 4;
  int num_layers = 2;
  int neighbor_count = 8;
  int ffn_dim = 0;  // 0 means 4 * hidden_dim

  int effective_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }
  // Embedding dims must concatenate to hidden_dim; heads must divide it.
  void validate() const;
};

std::string encoder_config_to_json(const EncoderConfig& config);
// Accepts a JSON object; unknown keys are rejected, missing keys keep
// their defaults.
EncoderConfig encoder_config_from_json(const std::string& json_text);

// Embedding-row vocabulary. Row 0 is PAD, row 1 is UNK, entries start at
// row 2. Entries are sorted, so the mapping is deterministic.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> sorted_entries);

  int row_count() const { return static_cast<int>(entries_.size()) + 2; }
  int class_count() const { return static_cast<int>(entries_.size()); }
  // Embedding row for an id; UNK when absent.
  int row_of(const std::string& id) const;
  // Class index (0-based over entries) or -1 when absent.
  int class_of(const std::string& id) const;
  const std::string& entry(int class_index) const { return entries_[class_index]; }
  const std::vector<std::string>& entries() const { return entries_; }

  // Ordered JSON array whose index equals the embedding row
  // (["<PAD>", "<UNK>", ...entries]).
  std::string to_json() const;
  static Vocabulary from_json(const std::string& json_text);

 private:
  std::vector<std::string> entries_;
  std::map<std::string, int> index_;
};

struct Vocabularies {
  Vocabulary poi;       // POIs visited in training
  Vocabulary category;  // all categories of the PoiSet (the classifier's classes)
  std::vector<bool> category_in_train;  // per category class index

  // Input-side rows: POIs/categories outside the training data map to UNK.
  int poi_row(const std::string& poi_id) const { return poi.row_of(poi_id); }
  int category_row(const std::string& category_id) const;
};

Vocabularies build_vocabularies(const Dataset& dataset, const DatasetSplit& split);

// Hour-of-week in {0..167} of the visit's local time, Monday 00:00 = 0.
int hour_of_week(int64_t utc_seconds, int utc_offset_minutes);
inline constexpr int kHourOfWeekCount = 168;

struct VisitWindow {
  std::vector<int> poi_rows;
  std::vector<int> category_rows;
  std::vector<int> temporal_rows;  // 0..167, or kHourOfWeekCount for PAD
  std::vector<bool> mask;          // true marks a real visit

  int length() const { return static_cast<int>(mask.size()); }
  int real_count() const;
};

// The observation window ending at visit `end_index` (0-based, inclusive),
// left-padded to config.window_length. Categories are resolved through the
// POI registry.
VisitWindow build_window(const UserHistory& history, int end_index, const PoiSet& pois,
                         const Vocabularies& vocabs, const EncoderConfig& config);

// User-by-POI training visit counts (rows follow the given history order,
// columns the PoiSet order). Rows are stored sparse.
class CoLocationMatrix {
 public:
  static CoLocationMatrix build(const std::vector<UserHistory>& train, const PoiSet& pois);

  int user_count() const { return static_cast<int>(rows_.size()); }
  int poi_count() const { return poi_count_; }
  int64_t entry(int user, int poi) const;
  int64_t row_sum(int user) const;
  // Cosine similarity between two user rows; zero-norm rows score 0.
  double cosine(int a, int b) const;

 private:
  struct Row {
    std::vector<std::pair<int, int64_t>> items;  // (poi index, count), sorted
    double norm = 0.0;
    int64_t sum = 0;
  };
  std::vector<Row> rows_;
  int poi_count_ = 0;
};

// Top-k other users by cosine similarity, self excluded, zero-similarity
// users dropped, ties broken by ascending user index. Returns fewer than k
// when fewer qualify.
std::vector<int> select_neighbors(const CoLocationMatrix& matrix, int user, int k);

// Embeddings + positional encoding + masked self-attention encoder.
// Returns the representation at the last real position.
class SequenceEncoder {
 public:
  SequenceEncoder(const EncoderConfig& config, int poi_rows, int category_rows,
                  nn::ParamStore& store, std::mt19937_64& rng);

  struct LayerCache {
    nn::MultiHeadAttention::Cache mha;
    nn::LayerNorm::Cache ln1, ln2;
    nn::FeedForward::Cache ffn;
  };
  struct Cache {
    VisitWindow window;
    nn::Matrix embedded;  // T x hidden, after positional encoding
    std::vector<LayerCache> layers;
    int last_real = 0;
  };

  Eigen::VectorXd forward(const VisitWindow& window, Cache& cache) const;
  // Accumulates parameter gradients for d(output vector).
  void backward(const Cache& cache, const Eigen::VectorXd& d_out) const;

  const EncoderConfig& config() const { return config_; }

 private:
  struct Layer {
    nn::MultiHeadAttention mha;
    nn::LayerNorm ln1;
    nn::FeedForward ffn;
    nn::LayerNorm ln2;
  };

  EncoderConfig config_;
  nn::Tensor* poi_embed_ = nullptr;       // poi_rows x poi_embed_dim
  nn::Tensor* category_embed_ = nullptr;  // category_rows x category_embed_dim
  nn::Tensor* temporal_embed_ = nullptr;  // 169 x temporal_embed_dim
  nn::Matrix positional_;                 // window_length x hidden (constant)
  std::vector<Layer> layers_;
};

// Attention fusion of the user's own sequence vector with the vectors of
// behaviorally similar users. The own vector is the query; keys/values are
// the own vector followed by the neighbor vectors.
class SocialFusion {
 public:
  SocialFusion(const EncoderConfig& config, nn::ParamStore& store, std::mt19937_64& rng);

  struct Cache {
    nn::MultiHeadAttention::Cache mha;
  };

  // Neighbor vectors are treated as constants (they are refreshed from
  // training windows once per epoch); gradients flow into the own vector
  // and the fusion parameters only.
  Eigen::VectorXd forward(const Eigen::VectorXd& own,
                          const std::vector<Eigen::VectorXd>& neighbors, Cache& cache) const;
  Eigen::VectorXd backward(const Cache& cache, const Eigen::VectorXd& d_out) const;

 private:
  int dim_ = 0;
  nn::MultiHeadAttention mha_;
};

}  // namespace poicast
