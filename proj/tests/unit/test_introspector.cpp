// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "introspect/errors.hpp"
#include "introspect/introspector.hpp"
#include "test_util.hpp"

using namespace introspect;

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.max_epochs = 40;
  c.patience = 10;
  return c;
}

ArchConfig small_mlp() {
  ArchConfig a;
  a.kind = ArchKind::kMlp;
  a.hidden = {16, 8};
  return a;
}

}  // namespace

TEST_CASE("focal loss values") {
  const std::vector<double> half{0.5, 0.5};
  CHECK(focal_loss(half, 0, 1.0, 0.0) == doctest::Approx(0.6931).epsilon(1e-4));
  const std::vector<double> q{0.1, 0.9};
  CHECK(std::abs(focal_loss(q, 1, 1.0, 2.0) - 0.0010536) < 1e-6);
  const std::vector<double> sure{0.0, 1.0};
  CHECK(focal_loss(sure, 1, 1.0, 0.0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::isfinite(focal_loss(sure, 0, 1.0, 2.0)));
  CHECK(focal_loss(q, 1, 3.0, 2.0) == doctest::Approx(3.0 * focal_loss(q, 1, 1.0, 2.0)));
}

TEST_CASE("focal loss decreases in the true-class probability") {
  for (double gamma : {0.0, 1.0, 2.0, 5.0}) {
    double prev = INFINITY;
    for (int i = 1; i < 100; ++i) {
      const double p = i / 100.0;
      const std::vector<double> probs{1.0 - p, p};
      const double l = focal_loss(probs, 1, 0.8, gamma);
      CHECK(l < prev);
      prev = l;
    }
  }
}

TEST_CASE("focal loss down-weights easy examples") {
  const double cut = 1.0 - std::exp(-1.0);
  for (int i = 1; i < 50; ++i) {
    const double p = cut + (1.0 - cut) * i / 50.0;
    const std::vector<double> probs{1.0 - p, p};
    CHECK(focal_loss(probs, 1, 1.0, 2.0) < focal_loss(probs, 1, 1.0, 0.0));
  }
}

TEST_CASE("focal loss from logits matches the probability form") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> z{normal(rng), normal(rng)};
    const auto p = softmax2(z);
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
    const int y = t % 2;
    const double gamma = (t % 5) * 1.25;
    const FocalLossResult r = focal_loss_from_logits(z, y, 1.3, gamma);
    CHECK(r.loss == doctest::Approx(focal_loss(std::vector<double>{p[0], p[1]}, y, 1.3, gamma)).epsilon(1e-9));
    // Logit gradient by central differences.
    for (std::size_t i = 0; i < 2; ++i) {
      auto f = [&](std::span<const double> zz) { return focal_loss_from_logits(zz, y, 1.3, gamma).loss; };
      const double num = oracle::central_difference(f, z, i, 1e-5);
      CHECK(r.grad_logits[i] == doctest::Approx(num).epsilon(1e-5).scale(1e-6));
    }
    CHECK(r.grad_logits[0] == doctest::Approx(-r.grad_logits[1]));
  }
}

TEST_CASE("architecture builders") {
  CHECK(default_arch(RepresentationKind::kSf) == ArchKind::kMlp);
  CHECK(default_arch(RepresentationKind::kHimf) == ArchKind::kMlp);
  CHECK(default_arch(RepresentationKind::kClf) == ArchKind::kCascade);
  CHECK(default_arch(RepresentationKind::kLfAsh) == ArchKind::kSmallConv);
  CHECK(parse_arch("smallconv") == ArchKind::kSmallConv);
  CHECK_THROWS_AS(parse_arch("resnet"), InputError);

  const auto v = parse_feature_signature("v96");
  REQUIRE(v.size() == 1);
  CHECK(v[0] == nn::Shape3{96, 1, 1});
  const auto m = parse_feature_signature("m1x16x16,m1x8x8");
  REQUIRE(m.size() == 2);
  CHECK(m[1] == nn::Shape3{1, 8, 8});
  CHECK_THROWS(parse_feature_signature("q7"));

  ArchConfig a;
  a.kind = ArchKind::kMlp;
  CHECK(build_network(a, v).output_size() == 2);
  CHECK_THROWS_AS(build_network(a, m), ShapeMismatch);
  a.kind = ArchKind::kSmallConv;
  CHECK_THROWS_AS(build_network(a, v), ShapeMismatch);
  CHECK(build_network(a, parse_feature_signature("m32x16x16")).output_size() == 2);
  a.kind = ArchKind::kCascade;
  CHECK(build_network(a, m).input_count() == 2);
}

TEST_CASE("zero-weight mlp outputs one half") {
  TrainedIntrospector model;
  model.arch = small_mlp();
  model.representation = RepresentationKind::kSf;
  model.feature_signature = "v6";
  const nn::Network net = build_network(model.arch, parse_feature_signature("v6"));
  model.weights.assign(net.param_count(), 0.0f);
  model.normalizer.shift.assign(6, 0.0f);
  model.normalizer.scale.assign(6, 1.0f);
  const Introspector intro(model);
  Feature f;
  f.kind = RepresentationKind::kSf;
  f.payload = FeatureVector{1, 2, 3, 4, 5, 6};
  const auto p = intro.forward(f);
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);

  Feature wrong = f;
  wrong.payload = FeatureVector{1, 2};
  CHECK_THROWS_AS(intro.forward(wrong), ShapeMismatch);
}

TEST_CASE("sgd step") {
  const nn::Network net = build_network(small_mlp(), parse_feature_signature("v4"));
  std::vector<double> params(net.param_count());
  net.init(params, 5);
  const std::vector<std::vector<double>> xs{{2, 2, 2, 2}, {-2, -2, -2, -2}, {1.5, 2.5, 2, 1}, {-1, -3, -2, -2}};
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({{xs[i]}, static_cast<int>(i % 2)});
  nn::Workspace ws = net.make_workspace();
  const std::array<double, 2> alpha{1.0, 1.0};

  TrainConfig frozen;
  frozen.learning_rate = 0.0;
  const auto before = params;
  std::vector<double> velocity;
  sgd_step(net, params, velocity, batch, alpha, frozen, ws);
  CHECK(params == before);

  TrainConfig c;
  c.learning_rate = 0.01;
  const double l0 = sgd_step(net, params, velocity, batch, alpha, c, ws).loss;
  const double l1 = sgd_step(net, params, velocity, batch, alpha, c, ws).loss;
  const double l2 = sgd_step(net, params, velocity, batch, alpha, c, ws).loss;
  CHECK(l1 < l0);
  CHECK(l2 < l1);

  std::vector<double> bad = params;
  bad.back() = NAN;
  CHECK_THROWS_AS(sgd_step(net, bad, velocity, batch, alpha, c, ws), NumericalError);
}

TEST_CASE("analytic gradients match finite differences") {
  for (ArchKind kind : {ArchKind::kMlp, ArchKind::kSmallConv, ArchKind::kCascade}) {
    for (double gamma : {0.0, 2.0, 5.0}) {
      const gradcheck::Result r = gradcheck::run(kind, gamma, 13);
      CHECK(r.coordinates == 20);
      CHECK(r.max_relative_error < 1e-3);
    }
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("training learns a separable set and is deterministic") {
  const ErrorDataset d = testutil::vector_dataset(200, 6, 3.0, 0.5, 1);
  const TrainedIntrospector a = train(small_mlp(), d, quick_config());
  CHECK(a.best_val_loss < a.initial_val_loss);
  const TrainedIntrospector b = train(small_mlp(), d, quick_config());
  CHECK(a.weights == b.weights);
  CHECK(a.history.size() == b.history.size());
  TrainConfig other = quick_config();
  other.shuffle_seed = 99;
  CHECK_FALSE(train(small_mlp(), d, other).weights == a.weights);

  TrainConfig with_momentum = quick_config();
  with_momentum.momentum = 0.9;
  with_momentum.learning_rate = 0.005;
  CHECK(train(small_mlp(), d, with_momentum).best_val_loss < a.initial_val_loss);
}

TEST_CASE("early stopping honours patience") {
  const ErrorDataset d = testutil::vector_dataset(100, 4, 1.0, 0.5, 2);
  TrainConfig c = quick_config();
  c.learning_rate = 0.0;
  c.max_epochs = 500;
  c.patience = 25;
  const TrainedIntrospector m = train(small_mlp(), d, c);
  CHECK(m.best_epoch == 0);
  CHECK(m.history.size() <= m.best_epoch + 26);
  CHECK(m.history.size() == 25);
  for (const auto& e : m.history) CHECK(e.val_loss == m.initial_val_loss);
}

TEST_CASE("class weights stop collapse to the majority class") {
  const ErrorDataset d = testutil::vector_dataset(300, 6, 0.0, 0.2, 3);
  TrainConfig c = quick_config();
  c.max_epochs = 60;
  const TrainedIntrospector m = train(small_mlp(), d, c);
  CHECK(m.alpha[1] > m.alpha[0]);
  const Introspector intro(m);
  std::size_t recalled = 0;
  for (std::size_t i : d.indices(Split::kTrain)) {
    if (d.items[i].label.is_error() && intro.error_score(d.features[i]) >= 0.5) ++recalled;
  }
  CHECK(recalled > 0);
}

TEST_CASE("training rejects unusable splits") {
  ErrorDataset d = testutil::vector_dataset(60, 4, 1.0, 0.5, 4);
  for (auto& item : d.items) {
    if (item.split == Split::kTrain) item.label = label_frame(0.9);
  }
  CHECK_THROWS_AS(train(small_mlp(), d, quick_config()), InputError);
  ErrorDataset no_val = testutil::vector_dataset(60, 4, 1.0, 0.5, 4);
  for (auto& item : no_val.items) {
    if (item.split == Split::kVal) item.split = Split::kTrain;
  }
  CHECK_THROWS_AS(train(small_mlp(), no_val, quick_config()), InputError);
}

TEST_CASE("model file round trip") {
  testutil::TempDir dir("model");
  const ErrorDataset d = testutil::vector_dataset(120, 5, 2.0, 0.4, 6);
  const TrainedIntrospector m = train(small_mlp(), d, quick_config());
  save_model(m, dir / "m.bin");
  save_history(m, dir / "h.jsonl");
  const TrainedIntrospector back = load_model(dir / "m.bin");
  CHECK(back.weights == m.weights);
  CHECK(back.alpha == m.alpha);
  CHECK(back.normalizer.shift == m.normalizer.shift);
  CHECK(back.normalizer.scale == m.normalizer.scale);
  CHECK(back.arch.canonical() == m.arch.canonical());
  CHECK(back.train.canonical() == m.train.canonical());
  CHECK(back.dataset_hash == m.dataset_hash);
  CHECK(back.best_epoch == m.best_epoch);
  const Introspector a(m);
  const Introspector b(back);
  for (std::size_t i = 0; i < 20; ++i) CHECK(a.forward(d.features[i]) == b.forward(d.features[i]));
  CHECK(a.forward(d.features[0]) == a.forward(d.features[0]));

  testutil::write_bytes(dir / "bad.bin", "not a model\n");
  CHECK_THROWS(load_model(dir / "bad.bin"));
  std::string bytes = testutil::read_bytes(dir / "m.bin");
  bytes.resize(bytes.size() - 3);
  testutil::write_bytes(dir / "short.bin", bytes);
  CHECK_THROWS(load_model(dir / "short.bin"));
}

TEST_CASE("grid search") {
  testutil::TempDir dir("grid");
  const ErrorDataset d = testutil::vector_dataset(150, 5, 2.0, 0.5, 8);
  GridSpec one;
  one.batch_sizes = {16};
  one.learning_rates = {0.05};
  one.gammas = {0};
  one.base = quick_config();
  const GridResult g1 = grid_search(small_mlp(), d, one);
  TrainConfig same = quick_config();
  CHECK(g1.best.weights == train(small_mlp(), d, same).weights);
  REQUIRE(g1.leaderboard.size() == 1);
  CHECK(g1.leaderboard[0].selected);

  GridSpec grid;
  grid.batch_sizes = {32, 16};
  grid.learning_rates = {0.05, 0.01};
  grid.gammas = {2, 0};
  grid.base = quick_config();
  grid.base.max_epochs = 10;
  GridOptions opt;
  opt.cache_dir = dir / "cache";
  const GridResult g = grid_search(small_mlp(), d, grid, opt);
  CHECK(g.leaderboard.size() == 8);
  std::size_t selected = 0;
  for (const auto& row : g.leaderboard) {
    selected += row.selected ? 1 : 0;
    CHECK_FALSE(row.reused);
  }
  CHECK(selected == 1);
  CHECK(g.leaderboard[0].config.batch_size == 16);
  CHECK(g.leaderboard[0].config.learning_rate == 0.01);
  CHECK(g.leaderboard[0].config.gamma == 0);

  opt.jobs = 2;
  const GridResult again = grid_search(small_mlp(), d, grid, opt);
  for (const auto& row : again.leaderboard) CHECK(row.reused);
  CHECK(again.best.weights == g.best.weights);

  write_leaderboard(g.leaderboard, dir / "lb.csv");
  const std::string csv = testutil::read_bytes(dir / "lb.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  testutil::write_bytes(dir / "g.conf", "batch_size = 8, 4\nlearning_rate=0.1\ngamma=[0,2]\nmax_epochs=5\n");
  const GridSpec parsed = GridSpec::from_file(dir / "g.conf");
  CHECK(parsed.batch_sizes == std::vector<std::size_t>{8, 4});
  CHECK(parsed.gammas == std::vector<double>{0, 2});
  CHECK(parsed.base.max_epochs == 5);
  CHECK(parsed.combinations().size() == 4);
  CHECK(parsed.combinations()[0].batch_size == 4);
}

TEST_CASE("selection rule on crafted ties") {
  auto row = [](std::size_t b, double lr, double g, double loss, std::optional<double> au) {
    LeaderboardRow r;
    r.config.batch_size = b;
    r.config.learning_rate = lr;
    r.config.gamma = g;
    r.selection_loss = loss;
    r.val_auroc = au;
    return r;
  };
  const std::vector<LeaderboardRow> by_loss{row(16, 0.01, 0, 0.5, 0.9), row(32, 0.01, 0, 0.4, 0.1)};
  CHECK(select_best(by_loss) == 1);
  const std::vector<LeaderboardRow> by_auroc{row(16, 0.01, 0, 0.4, 0.7), row(32, 0.01, 0, 0.4, 0.8)};
  CHECK(select_best(by_auroc) == 1);
  const std::vector<LeaderboardRow> by_order{row(32, 0.001, 0, 0.4, 0.8), row(16, 0.01, 4, 0.4, 0.8),
                                             row(16, 0.01, 2, 0.4, 0.8), row(16, 0.005, 5, 0.4, 0.8)};
  CHECK(select_best(by_order) == 3);
  const std::vector<LeaderboardRow> missing{row(16, 0.01, 0, 0.4, std::nullopt), row(32, 0.01, 0, 0.4, 0.2)};
  CHECK(select_best(missing) == 1);
  CHECK_THROWS_AS(select_best(std::vector<LeaderboardRow>{}), InputError);
}

TEST_CASE("combination hashes separate configs") {
  const ArchConfig a = small_mlp();
  TrainConfig c = quick_config();
  const std::string h = combination_hash(a, "d1", c);
  CHECK(h == combination_hash(a, "d1", c));
  CHECK_FALSE(h == combination_hash(a, "d2", c));
  c.gamma = 2;
  CHECK_FALSE(h == combination_hash(a, "d1", c));
}
