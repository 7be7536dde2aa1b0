// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/shaping.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "introspect/errors.hpp"

namespace introspect {
namespace {

void check_percentile(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw InputError("shaping percentile must lie in [0, 1)");
}

// Mask of the positions that survive pruning.
std::vector<bool> survivor_mask(std::span<const float> values, double percentile) {
  check_percentile(percentile);
  const std::size_t n = values.size();
  const std::size_t m = pruned_count(percentile, n);
  std::vector<bool> keep(n, true);
  if (m == 0) return keep;
  std::vector<std::uint32_t> index(n);
  std::iota(index.begin(), index.end(), 0u);
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  };
  std::nth_element(index.begin(), index.begin() + static_cast<std::ptrdiff_t>(m - 1),
                   index.end(), less);
  for (std::size_t i = 0; i < m; ++i) keep[index[i]] = false;
  return keep;
}

}  // namespace

std::string_view to_string(ShapingMode mode) {
  switch (mode) {
    case ShapingMode::kPrune: return "P";
    case ShapingMode::kBinarize: return "B";
    case ShapingMode::kScale: return "S";
    case ShapingMode::kNone: break;
  }
  return "none";
}

ShapingMode parse_shaping_mode(std::string_view text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (t == "NONE") return ShapingMode::kNone;
  if (t == "P") return ShapingMode::kPrune;
  if (t == "B") return ShapingMode::kBinarize;
  if (t == "S") return ShapingMode::kScale;
  throw InputError("unknown shaping mode '" + std::string(text) + "' (expected none, P, B or S)");
}

void ShapingConfig::validate() const {
  if (mode != ShapingMode::kNone) check_percentile(percentile);
}

std::string ShapingConfig::canonical() const {
  if (mode == ShapingMode::kNone) return "none";
  std::ostringstream out;
  out.precision(17);
  out << to_string(mode) << ':' << percentile;
  return out.str();
}

std::size_t pruned_count(double percentile, std::size_t n) {
  return static_cast<std::size_t>(std::floor(percentile * static_cast<double>(n)));
}

ActivationMap prune(const ActivationMap& map, double percentile) {
  const auto keep = survivor_mask(map.values(), percentile);
  ActivationMap out = map;
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!keep[i]) v[i] = 0.0f;
  }
  return out;
}

ShapeResult binarize(const ActivationMap& map, double percentile) {
  const auto in = map.values();
  const auto keep = survivor_mask(in, percentile);
  double total = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    total += in[i];
    if (keep[i] && in[i] > 0.0f) ++k;
  }
  ShapeResult result{ActivationMap(map.channels(), map.height(), map.width()), false, 1.0};
  if (total <= 0.0 || k == 0) {
    result.degenerate = true;
    return result;
  }
  result.beta = total / static_cast<double>(k);
  const float beta = static_cast<float>(result.beta);
  auto out = result.map.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (keep[i] && in[i] > 0.0f) out[i] = beta;
  }
  return result;
}

ShapeResult scale(const ActivationMap& map, double percentile) {
  const auto in = map.values();
  const auto keep = survivor_mask(in, percentile);
  double total = 0.0;
  double kept = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    total += in[i];
    if (keep[i]) kept += in[i];
  }
  ShapeResult result{ActivationMap(map.channels(), map.height(), map.width()), false, 1.0};
  if (kept <= 0.0) {
    result.degenerate = true;
    return result;
  }
  result.beta = std::exp(total / kept);
  auto out = result.map.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!keep[i]) continue;
    const double scaled = result.beta * static_cast<double>(in[i]);
    if (scaled > std::numeric_limits<float>::max()) {
      throw NumericalError("ASH-S scaling overflows float32 (beta = " +
                           std::to_string(result.beta) + ")");
    }
    out[i] = static_cast<float>(scaled);
  }
  return result;
}

ShapeResult shape(const ActivationMap& map, const ShapingConfig& config) {
  config.validate();
  switch (config.mode) {
    case ShapingMode::kPrune: return {prune(map, config.percentile), false, 1.0};
    case ShapingMode::kBinarize: return binarize(map, config.percentile);
    case ShapingMode::kScale: return scale(map, config.percentile);
    case ShapingMode::kNone: break;
  }
  return {map, false, 1.0};
}

}  // namespace introspect
