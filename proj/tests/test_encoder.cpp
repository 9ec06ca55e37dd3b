#include <doctest.h>

#include <random>
#include <set>

#include "poicast/common.hpp"
#include "poicast/encoder.hpp"
#include "support/fixtures.hpp"

using namespace poicast;
using namespace poicast::test;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.window_length = 4;
  c.hidden_dim = 16;
  c.poi_embed_dim = 8;
  c.category_embed_dim = 4;
  c.temporal_embed_dim = 4;
  c.num_attention_heads = 2;
  c.num_layers = 1;
  c.neighbor_count = 2;
  c.ffn_dim = 32;
  return c;
}

VisitWindow manual_window(const EncoderConfig& c, const std::vector<int>& poi_rows,
                          const std::vector<int>& cat_rows, const std::vector<int>& temp_rows) {
  VisitWindow w;
  const int pad = c.window_length - static_cast<int>(poi_rows.size());
  w.poi_rows.assign(c.window_length, Vocabulary::kPad);
  w.category_rows.assign(c.window_length, Vocabulary::kPad);
  w.temporal_rows.assign(c.window_length, kHourOfWeekCount);
  w.mask.assign(c.window_length, false);
  for (size_t i = 0; i < poi_rows.size(); ++i) {
    w.poi_rows[pad + i] = poi_rows[i];
    w.category_rows[pad + i] = cat_rows[i];
    w.temporal_rows[pad + i] = temp_rows[i];
    w.mask[pad + i] = true;
  }
  return w;
}

// dataset where POI "pnew" (category c2) first appears after t=100
Dataset unseen_fixture() {
  std::vector<Poi> pois = {make_poi("pa", 40.70, -74.00, "c1"), make_poi("pb", 40.71, -74.01, "c2"),
                           make_poi("pnew", 40.72, -74.02, "c2")};
  UserHistory u{"u",
                {make_visit("u", 10, "pa", -240), make_visit("u", 20, "pb", -240),
                 make_visit("u", 30, "pa", -240), make_visit("u", 110, "pnew", -240),
                 make_visit("u", 120, "pa", -240)}};
  return make_dataset(pois, {u});
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("encoder config arithmetic") {
  EncoderConfig c;  // paper defaults
  CHECK(c.window_length == 20);
  CHECK(c.hidden_dim == 128);
  CHECK(c.poi_embed_dim + c.category_embed_dim + c.temporal_embed_dim == c.hidden_dim);
  CHECK_NOTHROW(c.validate());
  CHECK(c.effective_ffn_dim() == 512);

  EncoderConfig bad = c;
  bad.poi_embed_dim = 81;  // sum no longer matches hidden_dim
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = c;
  bad.num_attention_heads = 3;  // does not divide 128
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("encoder config JSON round-trip rejects unknown keys") {
  EncoderConfig c = tiny_config();
  const EncoderConfig back = encoder_config_from_json(encoder_config_to_json(c));
  CHECK(encoder_config_to_json(back) == encoder_config_to_json(c));
  CHECK_THROWS_AS(encoder_config_from_json("{\"hidden_dims\": 64}"), ConfigError);
  // missing keys keep defaults
  const EncoderConfig partial = encoder_config_from_json("{\"window_length\": 7}");
  CHECK(partial.window_length == 7);
  CHECK(partial.hidden_dim == 128);
}

TEST_CASE("vocabulary maps entries to rows after the sentinels") {
  Vocabulary v({"alpha", "beta", "gamma"});
  CHECK(v.row_count() == 5);
  CHECK(v.class_count() == 3);
  CHECK(v.row_of("alpha") == 2);
  CHECK(v.row_of("gamma") == 4);
  CHECK(v.row_of("missing") == Vocabulary::kUnk);
  CHECK(v.class_of("beta") == 1);
  CHECK(v.class_of("missing") == -1);
  CHECK(v.entry(2) == "gamma");

  const Vocabulary back = Vocabulary::from_json(v.to_json());
  CHECK(back.entries() == v.entries());
  CHECK_THROWS(Vocabulary(std::vector<std::string>{"dup", "dup"}));
}

TEST_CASE("hour of week uses local time with Monday zero") {
  // Tue Apr 03 2012 18:00:09 UTC
  const int64_t t = 1333476009;
  CHECK(hour_of_week(t, 0) == 42);      // Tuesday 18:00 local = 1*24 + 18
  CHECK(hour_of_week(t, -240) == 38);   // UTC-4 shifts to Tuesday 14:00
  CHECK(hour_of_week(t, 360) == 48);    // UTC+6 crosses midnight to Wednesday 00:00
  // Mon Apr 02 2012 00:00:00 UTC
  CHECK(hour_of_week(1333324800, 0) == 0);
  CHECK(hour_of_week(1333324800 - 1, 0) == 167);  // Sunday 23:59
  for (int offset : {-720, -240, 0, 330, 720}) {
    const int h = hour_of_week(t, offset);
    CHECK(h >= 0);
    CHECK(h < kHourOfWeekCount);
  }
}

TEST_CASE("vocabularies split seen from unseen") {
  Dataset d = unseen_fixture();
  const DatasetSplit split = temporal_split(d.histories, 100, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);

  CHECK(vocabs.poi.class_count() == 2);  // pa, pb visited in training
  CHECK(vocabs.poi.row_of("pnew") == Vocabulary::kUnk);
  CHECK(vocabs.poi.row_of("pa") > Vocabulary::kUnk);
  // categories cover the whole PoiSet; both appear in training here
  CHECK(vocabs.category.class_count() == 2);
  CHECK(vocabs.category_in_train == std::vector<bool>{true, true});
}

TEST_CASE("build_window pads on the left and maps unseen POIs to UNK") {
  Dataset d = unseen_fixture();
  const DatasetSplit split = temporal_split(d.histories, 100, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);

  SUBCASE("single-visit prefix under the paper window") {
    EncoderConfig c;  // window 20
    const VisitWindow w = build_window(d.histories[0], 0, d.pois, vocabs, c);
    CHECK(w.length() == 20);
    CHECK(w.real_count() == 1);
    for (int i = 0; i < 19; ++i) {
      CHECK_FALSE(w.mask[i]);
      CHECK(w.poi_rows[i] == Vocabulary::kPad);
      CHECK(w.temporal_rows[i] == kHourOfWeekCount);
    }
    CHECK(w.mask[19]);
  }

  SUBCASE("an unseen POI keeps its true category") {
    EncoderConfig c = tiny_config();
    // window ending at the last visit covers pnew at position 2 of 4
    const VisitWindow w = build_window(d.histories[0], 4, d.pois, vocabs, c);
    CHECK(w.real_count() == 4);
    CHECK(w.poi_rows[2] == Vocabulary::kUnk);                       // pnew
    CHECK(w.category_rows[2] == vocabs.category.row_of("c2"));      // category survives
    CHECK(w.poi_rows[3] == vocabs.poi.row_of("pa"));
    // temporal features are hour-of-week of the local time
    CHECK(w.temporal_rows[3] == hour_of_week(120, -240));
  }

  SUBCASE("end_index out of range") {
    EncoderConfig c = tiny_config();
    CHECK_THROWS_AS(build_window(d.histories[0], 5, d.pois, vocabs, c), std::out_of_range);
    CHECK_THROWS_AS(build_window(d.histories[0], -1, d.pois, vocabs, c), std::out_of_range);
  }
}

TEST_CASE("sequence encoding: determinism, masking, position sensitivity") {
  const EncoderConfig c = tiny_config();
  nn::ParamStore store;
  std::mt19937_64 rng(42);
  SequenceEncoder enc(c, 8, 6, store, rng);

  const VisitWindow w = manual_window(c, {2, 3, 4}, {2, 3, 2}, {10, 40, 100});
  SequenceEncoder::Cache cache;
  const Eigen::VectorXd out = enc.forward(w, cache);
  CHECK(out.size() == c.hidden_dim);
  CHECK(out.allFinite());

  SUBCASE("identical windows produce identical vectors") {
    SequenceEncoder::Cache cache2;
    const Eigen::VectorXd out2 = enc.forward(w, cache2);
    CHECK((out - out2).norm() == 0.0);
  }

  SUBCASE("PAD content never leaks into the output") {
    VisitWindow poisoned = w;
    poisoned.poi_rows[0] = 5;  // still masked out
    poisoned.category_rows[0] = 4;
    poisoned.temporal_rows[0] = 7;
    SequenceEncoder::Cache cache2;
    const Eigen::VectorXd out2 = enc.forward(poisoned, cache2);
    CHECK((out - out2).norm() == 0.0);  // exact
  }

  SUBCASE("permuting two real positions changes the output") {
    VisitWindow swapped = w;
    std::swap(swapped.poi_rows[1], swapped.poi_rows[2]);
    std::swap(swapped.category_rows[1], swapped.category_rows[2]);
    std::swap(swapped.temporal_rows[1], swapped.temporal_rows[2]);
    SequenceEncoder::Cache cache2;
    const Eigen::VectorXd out2 = enc.forward(swapped, cache2);
    CHECK((out - out2).norm() > 1e-6);
  }

  SUBCASE("all-PAD windows are rejected") {
    VisitWindow empty;
    empty.poi_rows.assign(c.window_length, Vocabulary::kPad);
    empty.category_rows.assign(c.window_length, Vocabulary::kPad);
    empty.temporal_rows.assign(c.window_length, kHourOfWeekCount);
    empty.mask.assign(c.window_length, false);
    SequenceEncoder::Cache cache2;
    CHECK_THROWS(enc.forward(empty, cache2));
  }
}

TEST_CASE("default config encodes to a 128-dim vector") {
  EncoderConfig c;
  c.num_layers = 1;  // one layer is enough to pin the output dimension
  nn::ParamStore store;
  std::mt19937_64 rng(1);
  SequenceEncoder enc(c, 10, 8, store, rng);
  const VisitWindow w = manual_window(c, {2, 3}, {2, 3}, {0, 167});
  SequenceEncoder::Cache cache;
  CHECK(enc.forward(w, cache).size() == 128);
}

TEST_CASE("co-location matrix equals the hand count") {
  std::vector<Poi> pois = {make_poi("x", 0, 0, "c"), make_poi("y", 0, 0, "c"),
                           make_poi("z", 0, 0, "c")};
  // u0: x x y | u1: y | u2: (none)
  UserHistory u0{"u0", {make_visit("u0", 0, "x"), make_visit("u0", 1, "x"),
                        make_visit("u0", 2, "y")}};
  UserHistory u1{"u1", {make_visit("u1", 0, "y")}};
  UserHistory u2{"u2", {}};
  Dataset d = make_dataset(pois, {u0, u1, u2});

  const CoLocationMatrix m = CoLocationMatrix::build(d.histories, d.pois);
  const int x = d.pois.poi_index.at("x"), y = d.pois.poi_index.at("y"),
            z = d.pois.poi_index.at("z");
  CHECK(m.entry(0, x) == 2);
  CHECK(m.entry(0, y) == 1);
  CHECK(m.entry(0, z) == 0);
  CHECK(m.entry(1, y) == 1);
  CHECK(m.row_sum(0) == 3);
  CHECK(m.row_sum(1) == 1);
  CHECK(m.row_sum(2) == 0);
  CHECK(m.cosine(0, 2) == 0.0);  // zero-norm row
  CHECK(m.cosine(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("neighbor selection matches a brute-force cosine ranking") {
  std::vector<Poi> pois = {make_poi("a", 0, 0, "c"), make_poi("b", 0, 0, "c"),
                           make_poi("c", 0, 0, "c")};
  auto visits = [](const std::string& u, std::vector<std::pair<std::string, int>> spec) {
    UserHistory h;
    h.user_id = u;
    int64_t t = 0;
    for (auto& [poi, n] : spec)
      for (int i = 0; i < n; ++i) h.visits.push_back(make_visit(u, t++, poi));
    return h;
  };
  // rows: u0=(2,1,0), u1=(2,1,0) identical, u2=(0,0,3) orthogonal, u3=(1,2,0)
  Dataset d = make_dataset(pois, {visits("u0", {{"a", 2}, {"b", 1}}),
                                  visits("u1", {{"a", 2}, {"b", 1}}),
                                  visits("u2", {{"c", 3}}),
                                  visits("u3", {{"a", 1}, {"b", 2}})});
  const CoLocationMatrix m = CoLocationMatrix::build(d.histories, d.pois);

  CHECK(m.cosine(0, 1) == doctest::Approx(1.0));
  CHECK(m.cosine(0, 2) == doctest::Approx(0.0));
  CHECK(m.cosine(0, 3) == doctest::Approx(m.cosine(3, 0)));  // symmetry

  // brute-force oracle from the raw counts
  auto cosine = [](std::vector<double> p, std::vector<double> q) {
    double dot = 0, np = 0, nq = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      dot += p[i] * q[i];
      np += p[i] * p[i];
      nq += q[i] * q[i];
    }
    return dot / std::sqrt(np * nq);
  };
  const std::vector<std::vector<double>> rows = {{2, 1, 0}, {2, 1, 0}, {0, 0, 3}, {1, 2, 0}};
  std::vector<std::pair<double, int>> expected;
  for (int other : {1, 2, 3}) {
    const double sim = cosine(rows[0], rows[other]);
    if (sim > 0.0) expected.push_back({-sim, other});
  }
  std::stable_sort(expected.begin(), expected.end());
  std::vector<int> expected_order;
  for (auto& [neg, idx] : expected) expected_order.push_back(idx);

  CHECK(select_neighbors(m, 0, 3) == expected_order);   // u2 dropped (zero similarity)
  CHECK(select_neighbors(m, 0, 1) == std::vector<int>{1});
  CHECK(select_neighbors(m, 2, 3).empty());  // orthogonal to everyone
}

TEST_CASE("social fusion handles empty and duplicated neighbor sets") {
  const EncoderConfig c = tiny_config();
  nn::ParamStore store;
  std::mt19937_64 rng(7);
  SocialFusion fusion(c, store, rng);

  Eigen::VectorXd own(c.hidden_dim);
  for (int i = 0; i < own.size(); ++i) own[i] = std::sin(0.3 * i);

  SocialFusion::Cache cache;
  const Eigen::VectorXd alone = fusion.forward(own, {}, cache);
  CHECK(alone.size() == c.hidden_dim);
  CHECK(alone.allFinite());

  SUBCASE("zero neighbors is deterministic in the own vector") {
    SocialFusion::Cache cache2;
    CHECK((fusion.forward(own, {}, cache2) - alone).norm() == 0.0);
  }

  SUBCASE("duplicating the own vector as neighbor changes nothing") {
    // all keys identical: attention mass lands on the same value row
    SocialFusion::Cache c1, c2;
    const Eigen::VectorXd once = fusion.forward(own, {own}, c1);
    const Eigen::VectorXd twice = fusion.forward(own, {own, own}, c2);
    CHECK((once - twice).norm() < 1e-12);
    CHECK((once - alone).norm() < 1e-12);
  }

  SUBCASE("distinct neighbors do change the output") {
    Eigen::VectorXd other = own;
    other[0] += 1.0;
    SocialFusion::Cache c1;
    CHECK((fusion.forward(own, {other}, c1) - alone).norm() > 1e-8);
  }

  SUBCASE("dimension mismatches are rejected") {
    Eigen::VectorXd bad(c.hidden_dim + 1);
    bad.setZero();
    SocialFusion::Cache c1;
    CHECK_THROWS(fusion.forward(bad, {}, c1));
    SocialFusion::Cache c2;
    CHECK_THROWS(fusion.forward(own, {bad}, c2));
  }
}

}  // TEST_SUITE
