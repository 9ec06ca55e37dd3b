#include "poicast/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "poicast/common.hpp"

namespace poicast {

void EncoderConfig::validate() const {
  if (window_length < 1) throw ConfigError("window_length must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (poi_embed_dim < 1 || category_embed_dim < 1 || temporal_embed_dim < 1)
    throw ConfigError("embedding dims must be >= 1");
  if (poi_embed_dim + category_embed_dim + temporal_embed_dim != hidden_dim) {
    std::ostringstream msg;
    msg << "embedding dims must sum to hidden_dim: " << poi_embed_dim << " + "
        << category_embed_dim << " + " << temporal_embed_dim << " != " << hidden_dim;
    throw ConfigError(msg.str());
  }
  if (num_attention_heads < 1 || hidden_dim % num_attention_heads != 0)
    throw ConfigError("num_attention_heads must divide hidden_dim");
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (neighbor_count < 0) throw ConfigError("neighbor_count must be >= 0");
  if (ffn_dim < 0) throw ConfigError("ffn_dim must be >= 0");
}

std::string encoder_config_to_json(const EncoderConfig& config) {
  nlohmann::ordered_json j;
  j["window_length"] = config.window_length;
  j["hidden_dim"] = config.hidden_dim;
  j["poi_embed_dim"] = config.poi_embed_dim;
  j["category_embed_dim"] = config.category_embed_dim;
  j["temporal_embed_dim"] = config.temporal_embed_dim;
  j["num_attention_heads"] = config.num_attention_heads;
  j["num_layers"] = config.num_layers;
  j["neighbor_count"] = config.neighbor_count;
  j["ffn_dim"] = config.ffn_dim;
  return j.dump(2);
}

EncoderConfig encoder_config_from_json(const std::string& json_text) {
  auto j = nlohmann::json::parse(json_text);
  if (!j.is_object()) throw ConfigError("encoder config must be a JSON object");
  EncoderConfig config;
  for (const auto& [key, value] : j.items()) {
    if (key == "window_length")
      config.window_length = value.get<int>();
    else if (key == "hidden_dim")
      config.hidden_dim = value.get<int>();
    else if (key == "poi_embed_dim")
      config.poi_embed_dim = value.get<int>();
    else if (key == "category_embed_dim")
      config.category_embed_dim = value.get<int>();
    else if (key == "temporal_embed_dim")
      config.temporal_embed_dim = value.get<int>();
    else if (key == "num_attention_heads")
      config.num_attention_heads = value.get<int>();
    else if (key == "num_layers")
      config.num_layers = value.get<int>();
    else if (key == "neighbor_count")
      config.neighbor_count = value.get<int>();
    else if (key == "ffn_dim")
      config.ffn_dim = value.get<int>();
    else
      throw ConfigError("unknown encoder config key '" + key + "'");
  }
  config.validate();
  return config;
}

Vocabulary::Vocabulary(std::vector<std::string> sorted_entries) : entries_(std::move(sorted_entries)) {
  for (int i = 0; i < static_cast<int>(entries_.size()); ++i) index_[entries_[i]] = i;
  if (index_.size() != entries_.size()) throw ConfigError("vocabulary entries must be distinct");
}

int Vocabulary::row_of(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? kUnk : it->second + 2;
}

int Vocabulary::class_of(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  arr.push_back("<PAD>");
  arr.push_back("<UNK>");
  for (const auto& e : entries_) arr.push_back(e);
  return arr.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& json_text) {
  auto arr = nlohmann::json::parse(json_text);
  if (!arr.is_array() || arr.size() < 2 || arr[0] != "<PAD>" || arr[1] != "<UNK>")
    throw DataError("vocabulary file must be an array starting with <PAD>, <UNK>");
  std::vector<std::string> entries;
  entries.reserve(arr.size() - 2);
  for (size_t i = 2; i < arr.size(); ++i) entries.push_back(arr[i].get<std::string>());
  if (!std::is_sorted(entries.begin(), entries.end()))
    throw DataError("vocabulary entries must be sorted");
  return Vocabulary(std::move(entries));
}

int Vocabularies::category_row(const std::string& category_id) const {
  int cls = category.class_of(category_id);
  if (cls < 0 || !category_in_train[cls]) return Vocabulary::kUnk;
  return cls + 2;
}

Vocabularies build_vocabularies(const Dataset& dataset, const DatasetSplit& split) {
  std::set<std::string> train_pois;
  std::set<std::string> train_categories;
  for (size_t u = 0; u < dataset.histories.size(); ++u) {
    const auto& h = dataset.histories[u];
    int64_t prefix = split.train_prefix_len[u];
    for (int64_t i = 0; i < prefix; ++i) {
      const auto& poi = dataset.pois.poi(h.visits[i].poi_id);
      train_pois.insert(poi.poi_id);
      train_categories.insert(poi.category_id);
    }
  }
  Vocabularies vocabs;
  vocabs.poi = Vocabulary(std::vector<std::string>(train_pois.begin(), train_pois.end()));
  vocabs.category = Vocabulary(dataset.pois.category_vocabulary);
  vocabs.category_in_train.resize(vocabs.category.class_count());
  for (int c = 0; c < vocabs.category.class_count(); ++c)
    vocabs.category_in_train[c] = train_categories.count(vocabs.category.entry(c)) > 0;
  return vocabs;
}

int hour_of_week(int64_t utc_seconds, int utc_offset_minutes) {
  int64_t local = utc_seconds + static_cast<int64_t>(utc_offset_minutes) * 60;
  int64_t day = local / 86400;
  int64_t sec = local % 86400;
  if (sec < 0) {
    sec += 86400;
    day -= 1;
  }
  // 1970-01-01 was a Thursday; Monday = 0.
  int dow = static_cast<int>(((day + 3) % 7 + 7) % 7);
  int hour = static_cast<int>(sec / 3600);
  return dow * 24 + hour;
}

int VisitWindow::real_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), true));
}

VisitWindow build_window(const UserHistory& history, int end_index, const PoiSet& pois,
                         const Vocabularies& vocabs, const EncoderConfig& config) {
  if (end_index < 0 || end_index >= static_cast<int>(history.visits.size()))
    throw std::out_of_range("build_window: end_index out of range for user " + history.user_id);
  const int w = config.window_length;
  VisitWindow window;
  window.poi_rows.assign(w, Vocabulary::kPad);
  window.category_rows.assign(w, Vocabulary::kPad);
  window.temporal_rows.assign(w, kHourOfWeekCount);
  window.mask.assign(w, false);
  int start = std::max(0, end_index - w + 1);
  for (int i = start; i <= end_index; ++i) {
    int slot = w - 1 - (end_index - i);
    const Visit& v = history.visits[i];
    window.poi_rows[slot] = vocabs.poi_row(v.poi_id);
    window.category_rows[slot] = vocabs.category_row(pois.poi(v.poi_id).category_id);
    window.temporal_rows[slot] = hour_of_week(v.timestamp, v.utc_offset_minutes);
    window.mask[slot] = true;
  }
  return window;
}

CoLocationMatrix CoLocationMatrix::build(const std::vector<UserHistory>& train, const PoiSet& pois) {
  CoLocationMatrix m;
  m.poi_count_ = pois.poi_count();
  m.rows_.resize(train.size());
  for (size_t u = 0; u < train.size(); ++u) {
    std::map<int, int64_t> counts;
    for (const auto& v : train[u].visits) {
      auto it = pois.poi_index.find(v.poi_id);
      if (it == pois.poi_index.end())
        throw DataError("visit references unknown POI " + v.poi_id);
      counts[it->second] += 1;
    }
    Row& row = m.rows_[u];
    row.items.assign(counts.begin(), counts.end());
    double sq = 0.0;
    for (const auto& [poi, c] : row.items) {
      sq += static_cast<double>(c) * static_cast<double>(c);
      row.sum += c;
    }
    row.norm = std::sqrt(sq);
  }
  return m;
}

int64_t CoLocationMatrix::entry(int user, int poi) const {
  const auto& items = rows_.at(user).items;
  auto it = std::lower_bound(items.begin(), items.end(), poi,
                             [](const auto& p, int key) { return p.first < key; });
  return (it != items.end() && it->first == poi) ? it->second : 0;
}

int64_t CoLocationMatrix::row_sum(int user) const { return rows_.at(user).sum; }

double CoLocationMatrix::cosine(int a, int b) const {
  const Row& ra = rows_.at(a);
  const Row& rb = rows_.at(b);
  if (ra.norm == 0.0 || rb.norm == 0.0) return 0.0;
  double dot = 0.0;
  auto ia = ra.items.begin();
  auto ib = rb.items.begin();
  while (ia != ra.items.end() && ib != rb.items.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += static_cast<double>(ia->second) * static_cast<double>(ib->second);
      ++ia;
      ++ib;
    }
  }
  return dot / (ra.norm * rb.norm);
}

std::vector<int> select_neighbors(const CoLocationMatrix& matrix, int user, int k) {
  std::vector<std::pair<double, int>> scored;
  for (int other = 0; other < matrix.user_count(); ++other) {
    if (other == user) continue;
    double sim = matrix.cosine(user, other);
    if (sim > 0.0) scored.emplace_back(sim, other);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(k);
  std::vector<int> out;
  out.reserve(scored.size());
  for (const auto& [sim, idx] : scored) out.push_back(idx);
  return out;
}

namespace {

nn::Matrix sinusoidal_positions(int length, int dim) {
  nn::Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace

SequenceEncoder::SequenceEncoder(const EncoderConfig& config, int poi_rows, int category_rows,
                                 nn::ParamStore& store, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  poi_embed_ = store.add("embed.poi", poi_rows, config.poi_embed_dim);
  category_embed_ = store.add("embed.category", category_rows, config.category_embed_dim);
  temporal_embed_ = store.add("embed.temporal", kHourOfWeekCount + 1, config.temporal_embed_dim);
  nn::init_normal(*poi_embed_, rng, 0.02);
  nn::init_normal(*category_embed_, rng, 0.02);
  nn::init_normal(*temporal_embed_, rng, 0.02);
  // PAD rows stay zero so padded positions carry no signal of their own.
  poi_embed_->value.row(Vocabulary::kPad).setZero();
  category_embed_->value.row(Vocabulary::kPad).setZero();
  temporal_embed_->value.row(kHourOfWeekCount).setZero();
  positional_ = sinusoidal_positions(config.window_length, config.hidden_dim);
  layers_.reserve(config.num_layers);
  for (int l = 0; l < config.num_layers; ++l) {
    std::string prefix = "encoder.layer" + std::to_string(l);
    layers_.push_back(Layer{
        nn::MultiHeadAttention::make(store, prefix + ".mha", config.hidden_dim,
                                     config.num_attention_heads, rng),
        nn::LayerNorm::make(store, prefix + ".ln1", config.hidden_dim),
        nn::FeedForward::make(store, prefix + ".ffn", config.hidden_dim,
                              config.effective_ffn_dim(), rng),
        nn::LayerNorm::make(store, prefix + ".ln2", config.hidden_dim),
    });
  }
}

Eigen::VectorXd SequenceEncoder::forward(const VisitWindow& window, Cache& cache) const {
  const int w = config_.window_length;
  if (window.length() != w) throw std::invalid_argument("window length does not match config");
  if (window.real_count() == 0)
    throw std::invalid_argument("cannot encode a window with no real visits");
  cache.window = window;
  cache.last_real = 0;
  for (int t = 0; t < w; ++t)
    if (window.mask[t]) cache.last_real = t;

  nn::Matrix x(w, config_.hidden_dim);
  for (int t = 0; t < w; ++t) {
    x.block(t, 0, 1, config_.poi_embed_dim) = poi_embed_->value.row(window.poi_rows[t]);
    x.block(t, config_.poi_embed_dim, 1, config_.category_embed_dim) =
        category_embed_->value.row(window.category_rows[t]);
    x.block(t, config_.poi_embed_dim + config_.category_embed_dim, 1, config_.temporal_embed_dim) =
        temporal_embed_->value.row(window.temporal_rows[t]);
  }
  x += positional_;
  cache.embedded = x;

  cache.layers.resize(layers_.size());
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    LayerCache& lc = cache.layers[l];
    nn::Matrix attn = layer.mha.forward(x, x, window.mask, lc.mha);
    nn::Matrix x1 = layer.ln1.forward(x + attn, lc.ln1);
    nn::Matrix ff = layer.ffn.forward(x1, lc.ffn);
    x = layer.ln2.forward(x1 + ff, lc.ln2);
  }
  return x.row(cache.last_real).transpose();
}

void SequenceEncoder::backward(const Cache& cache, const Eigen::VectorXd& d_out) const {
  const int w = config_.window_length;
  nn::Matrix dx = nn::Matrix::Zero(w, config_.hidden_dim);
  dx.row(cache.last_real) = d_out.transpose();

  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const Layer& layer = layers_[l];
    const LayerCache& lc = cache.layers[l];
    nn::Matrix d_sum2 = layer.ln2.backward(lc.ln2, dx);
    nn::Matrix d_x1 = d_sum2 + layer.ffn.backward(lc.ffn, d_sum2);
    nn::Matrix d_sum1 = layer.ln1.backward(lc.ln1, d_x1);
    auto [d_query, d_kv] = layer.mha.backward(lc.mha, d_sum1);
    dx = d_sum1 + d_query + d_kv;
  }

  // Scatter into the embedding tables. PAD rows receive gradient via the
  // positional encoding path; freezing them keeps padded slots contentless.
  for (int t = 0; t < w; ++t) {
    if (!cache.window.mask[t]) continue;
    poi_embed_->grad.row(cache.window.poi_rows[t]) += dx.block(t, 0, 1, config_.poi_embed_dim);
    category_embed_->grad.row(cache.window.category_rows[t]) +=
        dx.block(t, config_.poi_embed_dim, 1, config_.category_embed_dim);
    temporal_embed_->grad.row(cache.window.temporal_rows[t]) +=
        dx.block(t, config_.poi_embed_dim + config_.category_embed_dim, 1,
                 config_.temporal_embed_dim);
  }
}

SocialFusion::SocialFusion(const EncoderConfig& config, nn::ParamStore& store,
                           std::mt19937_64& rng)
    : dim_(config.hidden_dim),
      mha_(nn::MultiHeadAttention::make(store, "fusion.mha", config.hidden_dim,
                                        config.num_attention_heads, rng)) {}

Eigen::VectorXd SocialFusion::forward(const Eigen::VectorXd& own,
                                      const std::vector<Eigen::VectorXd>& neighbors,
                                      Cache& cache) const {
  if (own.size() != dim_) throw std::invalid_argument("fusion input has wrong dimension");
  nn::Matrix query(1, dim_);
  query.row(0) = own.transpose();
  nn::Matrix kv(1 + static_cast<int>(neighbors.size()), dim_);
  kv.row(0) = own.transpose();
  for (size_t i = 0; i < neighbors.size(); ++i) {
    if (neighbors[i].size() != dim_)
      throw std::invalid_argument("neighbor vector has wrong dimension");
    kv.row(1 + static_cast<int>(i)) = neighbors[i].transpose();
  }
  std::vector<bool> key_mask(kv.rows(), true);
  nn::Matrix out = mha_.forward(query, kv, key_mask, cache.mha);
  return out.row(0).transpose();
}

Eigen::VectorXd SocialFusion::backward(const Cache& cache, const Eigen::VectorXd& d_out) const {
  nn::Matrix d_mat(1, dim_);
  d_mat.row(0) = d_out.transpose();
  auto [d_query, d_kv] = mha_.backward(cache.mha, d_mat);
  // The own vector enters both as the query and as the first key/value row;
  // neighbor rows are constants refreshed outside the graph.
  return (d_query.row(0) + d_kv.row(0)).transpose();
}

}  // namespace poicast
