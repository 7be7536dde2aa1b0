// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace introspect {

// Merged two-class scheme: every vehicle type maps to kVehicle, every person
// class to kPeople.
enum class ObjectClass : std::uint8_t { kVehicle = 0, kPeople = 1 };

inline constexpr int kObjectClassCount = 2;

std::string_view to_string(ObjectClass cls);

// Axis-aligned box in pixels, (x1, y1) top-left and (x2, y2) bottom-right.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;

  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  ObjectClass cls = ObjectClass::kVehicle;
  Box box;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruth {
  ObjectClass cls = ObjectClass::kVehicle;
  Box box;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

// Raw 8-bit pixel grid, interleaved row-major: pixels[(y * width + x) * channels + c].
struct ImageMeta {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

struct FrameRecord {
  std::string frame_id;
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
  std::optional<ImageMeta> image;

  // Throws InvariantError naming the frame on bad geometry or confidence.
  void validate() const;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

}  // namespace introspect
