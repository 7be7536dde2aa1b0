// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "introspect/errors.hpp"
#include "introspect/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace introspect;
namespace fs = std::filesystem;

namespace {

ArchConfig small_mlp() {
  ArchConfig a;
  a.kind = ArchKind::kMlp;
  a.hidden = {16, 8};
  return a;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.max_epochs = 30;
  c.patience = 10;
  return c;
}

SyntheticConfig small_synthetic(std::uint64_t seed) {
  SyntheticConfig c;
  c.frame_count = 120;
  c.channels = 4;
  c.height = 4;
  c.width = 4;
  c.image_width = 16;
  c.image_height = 16;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("auroc hand cases") {
  const std::vector<int> labels{1, 0, 1, 0};
  CHECK(*auroc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, labels) == 0.75);
  CHECK(*auroc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, labels) == 1.0);
  CHECK(*auroc(std::vector<double>{0.1, 0.9, 0.2, 0.8}, labels) == 0.0);
  CHECK(*auroc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, labels) == 0.5);
  CHECK_FALSE(auroc(std::vector<double>{0.4, 0.5}, std::vector<int>{1, 1}).has_value());
  CHECK_THROWS(auroc(std::vector<double>{0.4}, std::vector<int>{1, 0}));
}

TEST_CASE("auroc equals pair counting") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse levels give many ties.
      scores[i] = static_cast<double>(rng() % (t % 2 ? 5 : 1000)) / 10.0;
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 1;
    labels[1] = 0;
    CHECK(*auroc(scores, labels) == oracle::pair_auroc(scores, labels));
  }
}

TEST_CASE("auroc is invariant under monotone transforms") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(50);
    std::vector<int> l(50);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(u(rng) * 20) / 20;
      l[i] = static_cast<int>(i % 3 == 0);
    }
    std::vector<double> g(s.size());
    std::transform(s.begin(), s.end(), g.begin(), [](double x) { return std::exp(3 * x) - 7; });
    CHECK(*auroc(s, l) == *auroc(g, l));
  }
}

TEST_CASE("confusion and derived metrics") {
  const ConfusionCounts c = confusion(std::vector<int>{1, 1, 0}, std::vector<double>{0.9, 0.1, 0.2});
  CHECK(c == ConfusionCounts{1, 0, 1, 1});
  CHECK(confusion(std::vector<int>{1}, std::vector<double>{0.5}).tp == 1);
  CHECK(confusion(std::vector<int>{0}, std::vector<double>{0.5}).fp == 1);
  const ConfusionCounts right = confusion(std::vector<int>{1, 0}, std::vector<double>{0.7, 0.2});
  CHECK(right.fp == 0);
  CHECK(right.fn == 0);
  CHECK(f1_macro(right) == 1.0);

  const ConfusionCounts e{8, 2, 8, 2};
  CHECK(f1_per_class(e)[0] == doctest::Approx(0.8));
  CHECK(f1_per_class(e)[1] == doctest::Approx(0.8));
  CHECK(f1_macro(e) == doctest::Approx(0.8));
  CHECK(*fnr(e) == doctest::Approx(0.2));
  CHECK(*fnr(ConfusionCounts{3, 1, 4, 0}) == 0.0);
  CHECK_FALSE(fnr(ConfusionCounts{0, 2, 5, 0}).has_value());

  // Constant majority predictor on 90/10 data.
  const ConfusionCounts majority{0, 0, 90, 10};
  CHECK(f1_per_class(majority)[1] == 0.0);
  CHECK(f1_macro(majority) < 0.5);
}

TEST_CASE("evaluate and cross_evaluate") {
  const ErrorDataset d = testutil::vector_dataset(200, 6, 3.0, 0.5, 21);
  TrainConfig c = quick_config();
  const TrainedIntrospector m = train(small_mlp(), d, c);
  const Introspector intro(m);
  const MetricsReport train_report = evaluate(intro, d, Split::kTrain);
  CHECK(*train_report.auroc > 0.95);
  const MetricsReport r = evaluate(intro, d, Split::kTest);
  CHECK(r.counts.total() == d.indices(Split::kTest).size());
  CHECK(r.n_per_label[0] + r.n_per_label[1] == r.counts.total());
  CHECK(r.f1_macro == f1_macro(r.counts));
  CHECK(r.fnr == fnr(r.counts));
  CHECK(r.f1_per_class == f1_per_class(r.counts));
  CHECK(r.split == "test");

  const MetricsReport same = cross_evaluate(intro, d, Split::kTest);
  CHECK(same.to_json_line() == r.to_json_line());
  CHECK(r.to_json_line().find('\n') == std::string::npos);
  CHECK(r.to_text().find("macro") != std::string::npos);

  const ErrorDataset other = testutil::vector_dataset(100, 6, 1.0, 0.3, 22);
  const MetricsReport shifted = cross_evaluate(intro, other, Split::kTest);
  CHECK(shifted.counts.total() == other.indices(Split::kTest).size());

  const ErrorDataset wrong = testutil::vector_dataset(60, 5, 1.0, 0.5, 23);
  CHECK_THROWS_AS(cross_evaluate(intro, wrong, Split::kTest), ShapeMismatch);
  ErrorDataset wrong_kind = other;
  wrong_kind.representation = {RepresentationKind::kHimf, {}};
  CHECK_THROWS_AS(cross_evaluate(intro, wrong_kind, Split::kTest), ShapeMismatch);

  const std::vector<MetricsReport> reports{r, shifted};
  const std::vector<std::string> names{"a", "b"};
  const std::string table = reports_table(reports, names);
  CHECK(std::count(table.begin(), table.end(), '\n') >= 3);
}

TEST_CASE("shuffled labels give chance-level auroc") {
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ErrorDataset d = testutil::vector_dataset(240, 6, 3.0, 0.5, 100 + seed);
    std::vector<ErrorLabel> labels;
    for (const auto& item : d.items) labels.push_back(item.label);
    std::mt19937_64 rng(seed);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < labels.size(); ++i) d.items[i].label = labels[i];
    const TrainedIntrospector m = train(small_mlp(), d, quick_config());
    sum += *evaluate(Introspector(m), d, Split::kTest).auroc;
  }
  CHECK(std::abs(sum / 10 - 0.5) <= 0.1);
}

TEST_CASE("threshold sweep") {
  testutil::TempDir dir("sweep");
  const SyntheticSummary s = generate_synthetic_corpus(small_synthetic(4), dir.path());
  const ErrorDataset d = build_error_dataset(s.manifest_path, {RepresentationKind::kSf, {}});
  const std::vector<double> taus{0.4, 0.5, 0.6, 0.7};
  const auto rows = threshold_sweep(d, taus, small_mlp(), quick_config());
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].tau == taus[i]);
    CHECK(rows[i].n_total == d.items.size());
    CHECK(rows[i].labels.size() == d.items.size());
    if (i > 0) CHECK(rows[i].prevalence >= rows[i - 1].prevalence);
    std::vector<ErrorLabelValue> train_labels;
    for (std::size_t k = 0; k < d.items.size(); ++k) {
      CHECK(rows[i].labels[k] == label_frame(d.items[k].label.map_value, taus[i]));
      if (d.items[k].split == Split::kTrain) train_labels.push_back(rows[i].labels[k].value);
    }
    const ClassWeights w = class_weights(train_labels);
    CHECK(rows[i].weights.weight == w.weight);
  }
  write_sweep_csv(rows, dir / "sweep.csv");
  const std::string csv = testutil::read_bytes(dir / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("profile sizes") {
  testutil::TempDir dir("profile");
  SyntheticConfig sc = small_synthetic(2);
  sc.frame_count = 10;
  sc.channels = 8;
  sc.height = 6;
  sc.width = 6;
  const SyntheticSummary s = generate_synthetic_corpus(sc, dir / "corpus");
  const CorpusFrames frames = load_corpus_frames(s.manifest_path);
  const auto inputs = frames.inputs();
  const ProfileResult sf = profile_representation({RepresentationKind::kSf, {}}, inputs, 5, dir / "cache");
  const ProfileResult ash =
      profile_representation({RepresentationKind::kLfAsh, {ShapingMode::kPrune, 0.75}}, inputs, 5, dir / "cache");
  const ProfileResult himf = profile_representation({RepresentationKind::kHimf, {}}, inputs, 5, dir / "cache");
  CHECK(sf.feature_bytes == 3 * 8 * 4 + kAmfHeaderBytes);
  CHECK(ash.feature_bytes == 8 * 6 * 6 * 4 + kAmfHeaderBytes);
  CHECK(himf.feature_bytes == kHimfLength * 4 + kAmfHeaderBytes);
  CHECK(himf.feature_bytes < sf.feature_bytes);
  CHECK(sf.feature_bytes < ash.feature_bytes);
  CHECK(sf.repetitions == 5);
  CHECK(sf.frames == 10);
  CHECK(sf.median_seconds > 0.0);
  const std::vector<ProfileResult> all{himf, sf, ash};
  CHECK(profile_table(all).find("lf-ash") != std::string::npos);
}
