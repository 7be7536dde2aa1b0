// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// Finite-difference check of the analytic batch gradient, shared by the unit
// and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "introspect/introspector.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Result {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

inline std::vector<introspect::nn::Shape3> test_shapes(introspect::ArchKind kind) {
  switch (kind) {
    case introspect::ArchKind::kMlp:
      return {{12, 1, 1}};
    case introspect::ArchKind::kSmallConv:
      return {{3, 6, 6}};
    case introspect::ArchKind::kCascade:
      return {{1, 8, 8}, {1, 4, 4}};
  }
  return {};
}

// Random inputs and labels, seeded init; compares `coords` distinct random
// parameter coordinates against central differences at step h.
inline Result run(introspect::ArchKind kind, double gamma, std::uint64_t seed, std::size_t coords = 20,
                  double h = 1e-4) {
  using namespace introspect;
  ArchConfig arch;
  arch.kind = kind;
  arch.init_seed = seed;
  const auto shapes = test_shapes(kind);
  const nn::Network net = build_network(arch, shapes);
  std::vector<double> params(net.param_count());
  net.init(params, seed);

  std::mt19937_64 rng(seed * 7919 + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<std::vector<double>>> buffers(4);
  std::vector<Sample> batch(4);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (const auto& shape : shapes) {
      std::vector<double> x(shape.size());
      for (auto& v : x) v = normal(rng);
      buffers[s].push_back(std::move(x));
    }
    for (const auto& x : buffers[s]) batch[s].inputs.emplace_back(x);
    batch[s].label = static_cast<int>(s % 2);
  }
  const std::array<double, 2> alpha{0.7, 1.6};
  nn::Workspace ws = net.make_workspace();

  std::vector<double> analytic(params.size(), 0.0);
  batch_loss_and_gradient(net, params, batch, alpha, gamma, analytic, ws);

  std::vector<double> scratch(params.size());
  auto loss = [&](std::span<const double> p) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    return batch_loss_and_gradient(net, p, batch, alpha, gamma, scratch, ws);
  };

  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(coords, idx.size()));

  Result r;
  for (std::size_t i : idx) {
    const double numeric = oracle::central_difference(loss, params, i, h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(a - numeric) / denom);
    ++r.coordinates;
  }
  return r;
}

}  // namespace gradcheck
