// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// Activation shaping: prune the lowest fraction of a map, then optionally
// binarise or rescale the survivors.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "introspect/tensor_io.hpp"

namespace introspect {

enum class ShapingMode { kNone, kPrune, kBinarize, kScale };

std::string_view to_string(ShapingMode mode);
// Accepts "none", "P", "B", "S" (any case).
ShapingMode parse_shaping_mode(std::string_view text);

struct ShapingConfig {
  ShapingMode mode = ShapingMode::kNone;
  // Fraction of elements to zero, in [0, 1). Ignored for kNone.
  double percentile = 0.0;

  void validate() const;
  // Canonical text used in config hashes, e.g. "P:0.75".
  std::string canonical() const;
};

struct ShapeResult {
  ActivationMap map;
  // Set when the input gives nothing to redistribute (all-zero map or zero
  // survivor mass); the map is then all zeros.
  bool degenerate = false;
  // Survivor value (binarize) or multiplier (scale); 1.0 otherwise.
  double beta = 1.0;
};

// floor(p * n): how many elements pruning removes.
std::size_t pruned_count(double percentile, std::size_t n);

// Zeroes the floor(p*n) smallest elements, ties broken by ascending flat
// index, over the whole [C,H,W] map jointly. Survivors keep their values.
ActivationMap prune(const ActivationMap& map, double percentile);

// Pruned survivors that are nonzero all become sum(x) / k, where the sum is
// over the whole input and k counts them, so the total mass is preserved.
ShapeResult binarize(const ActivationMap& map, double percentile);

// Survivors are multiplied by exp(sum(x) / sum(survivors)).
ShapeResult scale(const ActivationMap& map, double percentile);

ShapeResult shape(const ActivationMap& map, const ShapingConfig& config);

}  // namespace introspect
