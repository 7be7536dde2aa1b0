// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "introspect/frame.hpp"
#include "introspect/shaping.hpp"
#include "introspect/tensor_io.hpp"

namespace introspect {

enum class RepresentationKind { kLfr, kLfAsh, kSf, kClf, kHimf };

std::string_view to_string(RepresentationKind kind);
// Accepts lfr, lf-ash (lf_ash), sf, clf, himf in any case.
RepresentationKind parse_representation(std::string_view text);

struct RepresentationConfig {
  RepresentationKind kind = RepresentationKind::kLfr;
  // Only consulted for kLfAsh.
  ShapingConfig shaping;

  void validate() const;
  std::string canonical() const;
  // Content address of the extraction config.
  std::string hash() const;
};

using FeatureVector = std::vector<float>;
using MapStack = std::vector<ActivationMap>;

struct Feature {
  RepresentationKind kind = RepresentationKind::kLfr;
  std::variant<FeatureVector, MapStack> payload;
  std::string frame_id;
  std::string config_hash;

  bool is_vector() const { return std::holds_alternative<FeatureVector>(payload); }
  const FeatureVector& vector() const { return std::get<FeatureVector>(payload); }
  const MapStack& maps() const { return std::get<MapStack>(payload); }

  // Shape signature, e.g. "v96" or "m32x16x16" / "m1x16x16,m1x8x8".
  std::string shape_signature() const;
};

// Per-channel global pooling: [mean_1..mean_C | max_1..max_C | std_1..std_C],
// std with the population divisor H*W.
FeatureVector sf_features(const ActivationMap& map);

// One 1xHxW map per layer holding the mean over channels.
MapStack clf_pool(std::span<const ActivationMap> layers);

inline constexpr std::size_t kHimfImageLength = 4;
inline constexpr std::size_t kHimfModelLength = 17;
inline constexpr std::size_t kHimfLength = kHimfImageLength + kHimfModelLength;

struct HarrisParams {
  double k = 0.04;
  double sigma = 1.0;
  double relative_threshold = 0.01;
};

// Harris corners on the channel-mean intensity: Sobel gradients, 3x3
// Gaussian window, response R = det - k*trace^2 kept where R exceeds
// relative_threshold * max(R) and is a 3x3 local maximum.
std::size_t harris_corner_count(const ImageMeta& image, const HarrisParams& params = {});

// Mean over channels of the base-2 entropy of each 256-bin histogram.
double histogram_entropy(const ImageMeta& image);

// [entropy_bits, width_px, height_px, corner_count].
std::array<float, kHimfImageLength> himf_image_features(const ImageMeta& image);

// [score_vehicle, score_people | min_conf, max_conf, mean_conf |
//  box_count, min_area, mean_area | 3x3 centre grid, row-major].
// A class score is the mean confidence of that class; a grid cell is the
// mean confidence of detections whose centre falls in it.
std::array<float, kHimfModelLength> himf_model_features(std::span<const Detection> detections,
                                                        double image_width,
                                                        double image_height);

// What a frame offers for extraction. Activation layers are ordered
// shallowest first; single-map kinds use the last (final backbone) layer.
struct FrameInputs {
  std::string frame_id;
  std::span<const ActivationMap> layers;
  const FrameRecord* record = nullptr;
};

// Throws MissingInput when the frame lacks what the kind consumes.
Feature extract(const RepresentationConfig& config, const FrameInputs& inputs);

// Serialised size of the feature in its cache encoding (AMF1 per map;
// vectors as 1x1xL maps).
std::size_t serialized_feature_bytes(const Feature& feature);

}  // namespace introspect
