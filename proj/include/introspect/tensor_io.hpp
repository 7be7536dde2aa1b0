// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// On-disk formats shared by detector exporters, the synthetic generator and
// the dataset builder.
//
// AMF1 activation map (all integers and floats little-endian):
//   bytes 0..3    magic "AMF1"
//   bytes 4..15   uint32 C, H, W
//   bytes 16..    C*H*W float32 values, [c][h][w] order
//
// Frame records and manifests are line-delimited JSON objects, one per line.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "introspect/frame.hpp"

namespace introspect {

class ClassMap;

inline constexpr std::string_view kAmfMagic = "AMF1";
inline constexpr std::size_t kAmfHeaderBytes = 16;

// Dense non-negative [C, H, W] tensor of backbone activations.
class ActivationMap {
 public:
  // Zero-filled map. Dimensions must be positive.
  ActivationMap(std::uint32_t channels, std::uint32_t height, std::uint32_t width);
  // Takes ownership of `data`; throws InvariantError if it breaks an invariant.
  ActivationMap(std::uint32_t channels, std::uint32_t height, std::uint32_t width,
                std::vector<float> data);

  std::uint32_t channels() const { return channels_; }
  std::uint32_t height() const { return height_; }
  std::uint32_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

  std::span<const float> values() const { return data_; }
  // Mutable access does not re-check invariants; writers call validate().
  std::span<float> values() { return data_; }

  float at(std::uint32_t c, std::uint32_t h, std::uint32_t w) const {
    return data_[(c * static_cast<std::size_t>(height_) + h) * width_ + w];
  }
  std::span<const float> channel(std::uint32_t c) const {
    return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
  }

  bool same_shape(const ActivationMap& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }

  // Throws InvariantError on NaN, Inf or negative elements.
  void validate() const;

  // Bit-exact equality of shape and payload.
  friend bool operator==(const ActivationMap& a, const ActivationMap& b);

 private:
  std::uint32_t channels_;
  std::uint32_t height_;
  std::uint32_t width_;
  std::vector<float> data_;
};

std::string encode_activation_map(const ActivationMap& map);
ActivationMap decode_activation_map(std::string_view bytes);

// Validates before opening the file, so a rejected map leaves nothing behind.
void write_activation_map(const ActivationMap& map, const std::filesystem::path& destination);
ActivationMap read_activation_map(const std::filesystem::path& source);

// --- Frame records ---------------------------------------------------------

std::string frame_record_to_json_line(const FrameRecord& record);

// Parses one line. `base_dir` resolves a relative image pixels_path.
// Unknown class names are rejected when `strict`, otherwise skipped with a
// warning; `skipped` (optional) counts the dropped boxes.
FrameRecord parse_frame_record(std::string_view line, const ClassMap& classes, bool strict,
                               const std::filesystem::path& base_dir = {},
                               std::size_t* skipped = nullptr);

std::vector<FrameRecord> read_frame_records(const std::filesystem::path& path,
                                            const ClassMap& classes, bool strict = true);
std::vector<FrameRecord> read_frame_records(const std::filesystem::path& path);

void write_frame_records(std::span<const FrameRecord> records,
                         const std::filesystem::path& path);

// --- Corpus manifest -------------------------------------------------------

enum class Split : std::uint8_t { kTrain, kVal, kTest, kUnassigned };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string frame_id;
  // One AMF1 file per tapped backbone layer, shallowest first; the last entry
  // is the final backbone layer.
  std::vector<std::string> activations;
  std::string records;
  Split split = Split::kUnassigned;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr int kManifestFormatVersion = 1;

struct CorpusManifest {
  int format_version = kManifestFormatVersion;
  std::vector<ManifestEntry> entries;
  // Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const {
    const std::filesystem::path p(relative);
    return p.is_absolute() ? p : base_dir / p;
  }
};

// First line is a header object {"format_version": N}; every following line is
// an entry with keys frame_id, activations, records, split.
CorpusManifest read_manifest(const std::filesystem::path& path, bool check_paths = true);
void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

}  // namespace introspect
