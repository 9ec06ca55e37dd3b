#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "poicast/classifier.hpp"
#include "poicast/common.hpp"
#include "support/fixtures.hpp"
#include "support/synthetic_world.hpp"

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

// one training example (u: p1 p2 -> p1), two post-threshold targets
Dataset memorization_dataset() {
  std::vector<Poi> pois = {make_poi("p1", 40.70, -74.00, "c1"), make_poi("p2", 40.71, -74.01, "c2")};
  UserHistory u{"u",
                {make_visit("u", 0, "p1"), make_visit("u", 1, "p2"), make_visit("u", 2, "p1"),
                 make_visit("u", 20, "p2"), make_visit("u", 21, "p1")}};
  Dataset d = make_dataset(pois, {u});
  project_dataset(d);
  return d;
}

std::vector<EpochMetrics> run_training(TrainSession& session, const Dataset& d,
                                       const DatasetSplit& split) {
  std::vector<EpochMetrics> metrics;
  train_loop(session, d, split,
             [&](const TrainSession&, const EpochMetrics& m) { metrics.push_back(m); });
  return metrics;
}

}  // namespace

TEST_SUITE("classifier") {

TEST_CASE("softmax values and shift invariance") {
  Eigen::VectorXd logits(3);
  logits << 1.0, 2.0, 3.0;
  const Eigen::VectorXd p = nn::softmax(logits);
  // direct evaluation: exp(z_i) / sum
  CHECK(p[0] == doctest::Approx(0.090031).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.244728).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(0.665241).epsilon(1e-4));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));

  const Eigen::VectorXd shifted = nn::softmax(logits.array() + 123.456);
  CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("a zeroed head predicts the uniform distribution") {
  nn::ParamStore store;
  std::mt19937_64 rng(3);
  CategoryHead head(16, 5, store, rng);
  for (size_t i = 0; i < store.size(); ++i) store.at(i).value.setZero();

  Eigen::VectorXd f(16);
  f.setRandom();
  CategoryHead::Cache cache;
  const CategoryDistribution dist = head.forward(f, cache);
  REQUIRE(dist.probabilities.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(dist.probabilities[i] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("cross entropy values") {
  Eigen::VectorXd one_hot(3);
  one_hot << 0.0, 1.0, 0.0;
  CHECK(cross_entropy(one_hot, 1) == doctest::Approx(0.0));

  Eigen::VectorXd uniform4 = Eigen::VectorXd::Constant(4, 0.25);
  CHECK(cross_entropy(uniform4, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Eigen::VectorXd p(3);
  p << 0.7, 0.2, 0.1;
  CHECK(cross_entropy(p, 1) == doctest::Approx(-std::log(0.2)).epsilon(1e-12));

  // zero-probability truth is floored, never -inf
  CHECK(cross_entropy(one_hot, 0) == doctest::Approx(-std::log(1e-12)));
  CHECK(std::isfinite(cross_entropy(one_hot, 0)));
}

TEST_CASE("softmax cross-entropy gradient equals softmax minus one-hot") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 2.0);
  for (int trial = 0; trial < 8; ++trial) {
    Eigen::VectorXd z(6);
    for (int i = 0; i < z.size(); ++i) z[i] = noise(rng);
    const int truth = trial % 6;

    const Eigen::VectorXd analytic = [&] {
      Eigen::VectorXd g = nn::softmax(z);
      g[truth] -= 1.0;
      return g;
    }();

    const double eps = 1e-6;
    for (int i = 0; i < z.size(); ++i) {
      Eigen::VectorXd zp = z, zm = z;
      zp[i] += eps;
      zm[i] -= eps;
      const double numeric =
          (cross_entropy(nn::softmax(zp), truth) - cross_entropy(nn::softmax(zm), truth)) /
          (2 * eps);
      CHECK(analytic[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
  }
}

TEST_CASE("non-finite logits are a training error with diagnostics") {
  nn::ParamStore store;
  std::mt19937_64 rng(5);
  CategoryHead head(8, 3, store, rng);
  nn::Tensor* w = store.find("head.category.fc2.weight");
  REQUIRE(w != nullptr);
  w->value(0, 0) = std::numeric_limits<double>::quiet_NaN();

  Eigen::VectorXd f = Eigen::VectorXd::Ones(8);
  CategoryHead::Cache cache;
  CHECK_THROWS_AS(head.forward(f, cache), TrainError);
}

TEST_CASE("method and optimizer config plumbing") {
  CHECK(method_name(Method::kJoint) == "joint");
  CHECK(method_name(Method::kBaseline) == "baseline");
  CHECK(method_from_name("joint") == Method::kJoint);
  CHECK(method_from_name("baseline") == Method::kBaseline);
  CHECK_THROWS_AS(method_from_name("ensemble"), ConfigError);

  OptimizerConfig oc;  // defaults: lr 1e-3, batch 64, epochs 50, patience 5
  CHECK_NOTHROW(oc.validate());
  const OptimizerConfig back = optimizer_config_from_json(optimizer_config_to_json(oc));
  CHECK(back.learning_rate == oc.learning_rate);
  CHECK(back.batch_size == oc.batch_size);
  OptimizerConfig bad = oc;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training memorizes a single example") {
  Dataset d = memorization_dataset();
  const DatasetSplit split = temporal_split(d.histories, 10, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);

  OptimizerConfig oc;
  oc.learning_rate = 0.05;
  oc.batch_size = 8;
  oc.max_epochs = 60;
  oc.patience = 60;

  TrainSession session = make_session(Method::kJoint, tiny_config(), vocabs, oc, 17);
  const auto metrics = run_training(session, d, split);
  REQUIRE(metrics.size() >= 10);
  CHECK(metrics[10].train_loss < metrics[0].train_loss);
  CHECK(metrics.back().train_loss < 0.01);

  // every emitted distribution is a distribution
  const NeighborContext ctx = make_neighbor_context(d, split, session.model->config.neighbor_count);
  NeighborContext live = ctx;
  refresh_user_vectors(*session.model, d, split, live);
  ForwardCache cache;
  const Eigen::VectorXd probs =
      model_probabilities(*session.model, d, split.test[0], live, cache);
  CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(probs.minCoeff() >= 0.0);
}

TEST_CASE("fixed seeds reproduce the epoch losses exactly") {
  Dataset d = memorization_dataset();
  const DatasetSplit split = temporal_split(d.histories, 10, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);
  OptimizerConfig oc;
  oc.max_epochs = 3;
  oc.batch_size = 4;

  TrainSession s1 = make_session(Method::kJoint, tiny_config(), vocabs, oc, 23);
  TrainSession s2 = make_session(Method::kJoint, tiny_config(), vocabs, oc, 23);
  const auto m1 = run_training(s1, d, split);
  const auto m2 = run_training(s2, d, split);
  REQUIRE(m1.size() == m2.size());
  for (size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].train_loss == m2[i].train_loss);  // bit-exact
    CHECK(m1[i].val_metric == m2[i].val_metric);
  }

  TrainSession s3 = make_session(Method::kJoint, tiny_config(), vocabs, oc, 24);
  const auto m3 = run_training(s3, d, split);
  CHECK(m3[0].train_loss != m1[0].train_loss);  // seed actually matters
}

TEST_CASE("checkpoints restore the exact model") {
  Dataset d = memorization_dataset();
  const DatasetSplit split = temporal_split(d.histories, 10, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);
  OptimizerConfig oc;
  oc.max_epochs = 4;
  oc.batch_size = 4;

  TrainSession session = make_session(Method::kJoint, tiny_config(), vocabs, oc, 29);
  run_training(session, d, split);

  const auto dir = temp_dir("ckpt");
  const std::string path = (dir / "model.bin").string();
  save_checkpoint(path, session);
  TrainSession loaded = load_checkpoint(path);

  CHECK(loaded.epochs_done == session.epochs_done);
  CHECK(loaded.best_epoch == session.best_epoch);
  CHECK(loaded.best_val_metric == session.best_val_metric);
  CHECK(loaded.seed == session.seed);

  // identical forward outputs in deterministic mode
  NeighborContext ctx = make_neighbor_context(d, split, session.model->config.neighbor_count);
  refresh_user_vectors(*session.model, d, split, ctx);
  NeighborContext ctx2 = make_neighbor_context(d, split, loaded.model->config.neighbor_count);
  refresh_user_vectors(*loaded.model, d, split, ctx2);
  ForwardCache c1, c2;
  const Eigen::VectorXd p1 = model_probabilities(*session.model, d, split.test[0], ctx, c1);
  const Eigen::VectorXd p2 = model_probabilities(*loaded.model, d, split.test[0], ctx2, c2);
  CHECK((p1 - p2).norm() == 0.0);

  // the stored best metric is reproducible from the snapshot
  restore_best(loaded);
  NeighborContext ctx3 = make_neighbor_context(d, split, loaded.model->config.neighbor_count);
  refresh_user_vectors(*loaded.model, d, split, ctx3);
  const double metric = validation_metric(*loaded.model, d, split, ctx3);
  CHECK(metric == doctest::Approx(loaded.best_val_metric).epsilon(1e-6));

  std::filesystem::remove_all(dir);
}

TEST_CASE("resumed training continues the epoch counter") {
  Dataset d = memorization_dataset();
  const DatasetSplit split = temporal_split(d.histories, 10, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);
  OptimizerConfig oc;
  oc.max_epochs = 2;
  oc.batch_size = 4;

  TrainSession session = make_session(Method::kJoint, tiny_config(), vocabs, oc, 31);
  run_training(session, d, split);
  CHECK(session.epochs_done == 2);

  session.optimizer.max_epochs = 5;
  const auto more = run_training(session, d, split);
  CHECK(session.epochs_done == 5);
  REQUIRE(more.size() == 3);
  CHECK(more.front().epoch == 2);
}

TEST_CASE("category accuracy approaches the generator's Bayes rate") {
  // chain-driven world: category prediction can do no better than the
  // transition row's peak
  synth::WorldConfig wc;
  wc.mode = synth::Mode::kStatic;
  wc.users = 12;
  wc.visits_per_user = 80;
  wc.categories = 4;
  wc.pois_per_category = 2;
  wc.seed = 5;
  const synth::World world = synth::generate_world(wc);

  std::istringstream stream(world.checkins_tsv);
  Dataset d = parse_checkins(stream);
  project_dataset(d);
  const DatasetSplit split = temporal_split(d.histories, world.threshold, 3);
  const Vocabularies vocabs = build_vocabularies(d, split);

  // oracle: predict the argmax category of the anchor's transition row,
  // scored on the same validation targets the model sees
  int hits = 0;
  for (const TargetRef& t : split.validation) {
    const auto& visits = d.histories[t.user_index].visits;
    const int prev_cat = world.poi(visits[t.visit_index - 1].poi_id).category;
    int best = 0;
    for (int c = 1; c < wc.categories; ++c)
      if (world.transition[prev_cat][c] > world.transition[prev_cat][best]) best = c;
    const int true_cat = world.poi(visits[t.visit_index].poi_id).category;
    if (best == true_cat) ++hits;
  }
  const double oracle = static_cast<double>(hits) / split.validation.size();

  EncoderConfig ec = tiny_config();
  ec.window_length = 6;
  OptimizerConfig oc;
  oc.learning_rate = 0.005;
  oc.batch_size = 32;
  oc.max_epochs = 12;
  oc.patience = 12;

  TrainSession session = make_session(Method::kJoint, ec, vocabs, oc, 41);
  run_training(session, d, split);
  restore_best(session);

  NeighborContext ctx = make_neighbor_context(d, split, ec.neighbor_count);
  refresh_user_vectors(*session.model, d, split, ctx);
  const double acc = validation_metric(*session.model, d, split, ctx);

  INFO("model " << acc << " vs oracle " << oracle);
  CHECK(acc >= oracle - 0.05);
  CHECK(acc <= oracle + 0.05);
}

TEST_CASE("labels distinguish scorable from unscorable targets") {
  Dataset d = memorization_dataset();
  // p2 only appears post-threshold when we cut at t=1.5
  UserHistory& u = d.histories[0];
  u.visits = {make_visit("u", 0, "p1"), make_visit("u", 1, "p1"), make_visit("u", 20, "p2"),
              make_visit("u", 21, "p1")};
  const DatasetSplit split = temporal_split(d.histories, 10, 1);
  const Vocabularies vocabs = build_vocabularies(d, split);

  auto joint = make_model(Method::kJoint, tiny_config(), vocabs, 1);
  auto baseline = make_model(Method::kBaseline, tiny_config(), vocabs, 1);
  const Visit unseen_target = u.visits[2];  // p2, never trained on
  const Visit seen_target = u.visits[3];    // p1

  CHECK(joint->label_of(d.pois, unseen_target) ==
        vocabs.category.class_of(d.pois.poi("p2").category_id));
  CHECK(baseline->label_of(d.pois, unseen_target) == -1);  // no output unit
  CHECK(baseline->label_of(d.pois, seen_target) == vocabs.poi.class_of("p1"));
}

}  // TEST_SUITE
