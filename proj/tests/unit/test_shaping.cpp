// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "introspect/errors.hpp"
#include "introspect/shaping.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace introspect;
using testutil::flat_map;

namespace {

std::vector<float> values(const ActivationMap& m) { return {m.values().begin(), m.values().end()}; }

const std::vector<float> kRamp{0.5f, 1.0f, 1.5f, 2.0f, 2.5f, 3.0f, 3.5f, 4.0f};

}  // namespace

TEST_CASE("prune hand values") {
  CHECK(values(prune(flat_map({1, 2, 3, 4}), 0.5)) == std::vector<float>{0, 0, 3, 4});
  CHECK(values(prune(flat_map(kRamp), 0.75)) == std::vector<float>{0, 0, 0, 0, 0, 0, 3.5f, 4.0f});
  const auto m = flat_map({3, 1, 2});
  CHECK(prune(m, 0.0) == m);
}

TEST_CASE("prune breaks ties by flat index") {
  CHECK(values(prune(flat_map({2, 2, 2, 2}), 0.5)) == std::vector<float>{0, 0, 2, 2});
  CHECK(values(prune(flat_map({5, 1, 1, 1, 5}), 0.4)) == std::vector<float>{5, 0, 0, 1, 5});
}

TEST_CASE("prune equals the sort-and-zero oracle over all orderings of [1,2,3,4]") {
  std::vector<float> perm{1, 2, 3, 4};
  do {
    for (double p : {0.0, 0.25, 0.5, 0.75, 0.99}) {
      CHECK(values(prune(flat_map(perm), p)) == oracle::sort_and_zero(perm, p));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("binarize hand values") {
  const ShapeResult a = binarize(flat_map({1, 2, 3, 4}), 0.5);
  CHECK(values(a.map) == std::vector<float>{0, 0, 5, 5});
  CHECK(a.beta == doctest::Approx(5.0));
  CHECK_FALSE(a.degenerate);
  const ShapeResult b = binarize(flat_map(kRamp), 0.75);
  CHECK(values(b.map) == std::vector<float>{0, 0, 0, 0, 0, 0, 9, 9});

  const ShapeResult z = binarize(ActivationMap(2, 3, 3), 0.5);
  CHECK(z.degenerate);
  CHECK(z.map == ActivationMap(2, 3, 3));
}

TEST_CASE("scale hand values") {
  const ShapeResult a = scale(flat_map({1, 2, 3, 4}), 0.5);
  const double beta = std::exp(10.0 / 7.0);
  CHECK(beta == doctest::Approx(4.1727).epsilon(1e-4));
  CHECK(a.beta == doctest::Approx(beta));
  const auto va = values(a.map);
  CHECK(va[0] == 0.0f);
  CHECK(va[1] == 0.0f);
  CHECK(va[2] == doctest::Approx(3 * 4.1727).epsilon(1e-4));
  CHECK(va[3] == doctest::Approx(4 * 4.1727).epsilon(1e-4));

  const ShapeResult b = scale(flat_map(kRamp), 0.75);
  CHECK(b.beta == doctest::Approx(11.0232).epsilon(1e-4));
  const auto vb = values(b.map);
  CHECK(vb[6] == doctest::Approx(3.5 * 11.0232).epsilon(1e-4));
  CHECK(vb[7] == doctest::Approx(4.0 * 11.0232).epsilon(1e-4));
  for (int i = 0; i < 6; ++i) CHECK(vb[i] == 0.0f);

  const ShapeResult c = scale(flat_map({1, 0.5f, 2}), 0.0);
  CHECK(c.beta == doctest::Approx(std::exp(1.0)));

  const ShapeResult d = scale(flat_map({0, 0, 0, 9}), 0.75);
  CHECK_FALSE(d.degenerate);
  const ShapeResult e = scale(flat_map({0, 0, 0, 0}), 0.5);
  CHECK(e.degenerate);
}

TEST_CASE("ASH-S overflow is reported, not silently saturated") {
  // One survivor of 1000 equal values: beta = exp(1000).
  const std::vector<float> v(1000, 1.0f);
  CHECK_THROWS_AS(scale(flat_map(v), 0.999), NumericalError);
}

TEST_CASE("shape dispatches by mode") {
  const auto ramp = flat_map(kRamp);
  CHECK(shape(ramp, {ShapingMode::kNone, 0.75}).map == ramp);
  CHECK(shape(ramp, {ShapingMode::kPrune, 0.75}).map == prune(ramp, 0.75));
  CHECK(shape(ramp, {ShapingMode::kBinarize, 0.75}).map == binarize(ramp, 0.75).map);
  CHECK(shape(ramp, {ShapingMode::kScale, 0.75}).map == scale(ramp, 0.75).map);
  CHECK_THROWS_AS(shape(ramp, {ShapingMode::kPrune, 1.0}), InputError);
  CHECK_THROWS_AS(shape(ramp, {ShapingMode::kPrune, -0.1}), InputError);
  CHECK_NOTHROW(shape(ramp, {ShapingMode::kNone, 7.0}));
}

TEST_CASE("mode names") {
  CHECK(parse_shaping_mode("p") == ShapingMode::kPrune);
  CHECK(parse_shaping_mode("B") == ShapingMode::kBinarize);
  CHECK(parse_shaping_mode("S") == ShapingMode::kScale);
  CHECK(parse_shaping_mode("none") == ShapingMode::kNone);
  CHECK_THROWS_AS(parse_shaping_mode("Q"), InputError);
  CHECK(ShapingConfig{ShapingMode::kPrune, 0.75}.canonical() == "P:0.75");
  CHECK(pruned_count(0.75, 8) == 6);
  CHECK(pruned_count(0.7, 10) == 7);
}

TEST_CASE("properties over random maps") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pdist(0.0, 0.99);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = static_cast<std::uint32_t>(1 + rng() % 4);
    const auto h = static_cast<std::uint32_t>(1 + rng() % 6);
    const auto w = static_cast<std::uint32_t>(1 + rng() % 6);
    const ActivationMap m = testutil::random_map(rng, c, h, w, trial % 3 == 0 ? 0.3 : 0.0);
    const double p = pdist(rng);
    const auto in = m.values();
    const std::size_t n = in.size();
    const std::size_t pruned = pruned_count(p, n);

    const ActivationMap pm = prune(m, p);
    const ShapeResult bm = binarize(m, p);
    std::optional<ShapeResult> scaled;
    try {
      scaled = scale(m, p);
    } catch (const NumericalError&) {
      continue;
    }
    const ShapeResult& sm = *scaled;

    CHECK(values(pm) == oracle::sort_and_zero(in, p));
    std::size_t nonzero_out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      // Support monotonicity and dominance.
      for (const ActivationMap* out : std::initializer_list<const ActivationMap*>{&pm, &bm.map, &sm.map}) {
        if (in[i] == 0.0f) CHECK(out->values()[i] == 0.0f);
      }
      CHECK(pm.values()[i] <= in[i]);
      if (pm.values()[i] != 0.0f) ++nonzero_out;
    }
    std::size_t zero_inputs = static_cast<std::size_t>(std::count(in.begin(), in.end(), 0.0f));
    const std::size_t input_zero_survivors = zero_inputs > pruned ? zero_inputs - pruned : 0;
    CHECK(nonzero_out == n - pruned - input_zero_survivors);

    const double sum_in = std::accumulate(in.begin(), in.end(), 0.0);
    if (!bm.degenerate) {
      const double sum_b = std::accumulate(bm.map.values().begin(), bm.map.values().end(), 0.0);
      CHECK(std::abs(sum_b - sum_in) <= 1e-5 * std::max(1.0, sum_in));
    }
  }
}

TEST_CASE("permutation equivariance with distinct values") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> v(12);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i + 1) * 0.5f;
    std::shuffle(v.begin(), v.end(), rng);
    std::vector<std::size_t> perm(v.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<float> permuted(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) permuted[i] = v[perm[i]];
    for (double p : {0.25, 0.5, 0.8}) {
      for (ShapingMode mode : {ShapingMode::kPrune, ShapingMode::kBinarize, ShapingMode::kScale}) {
        const auto a = values(shape(flat_map(v), {mode, p}).map);
        const auto b = values(shape(flat_map(permuted), {mode, p}).map);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(b[i] == a[perm[i]]);
      }
    }
  }
}
