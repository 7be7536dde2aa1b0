// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "introspect/detection_eval.hpp"
#include "introspect/representations.hpp"
#include "introspect/tensor_io.hpp"

namespace introspect {

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

// Seeded shuffle, then val and test get floor(ratio * n) frames and train
// takes the remainder. Result is indexed like `frame_ids`.
std::vector<Split> split_frames(std::span<const std::string> frame_ids,
                                const SplitRatios& ratios, std::uint64_t seed);

// Index 0 is no_error, index 1 is error.
struct ClassWeights {
  std::array<double, 2> weight{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  // A class had no samples; its weight is 0.
  bool missing_class = false;

  double operator[](std::size_t c) const { return weight[c]; }
};

// W(c) = n_samples / (n_classes * n_c), n_classes = 2.
ClassWeights class_weights(std::span<const ErrorLabelValue> labels);

struct DatasetItem {
  std::string frame_id;
  ErrorLabel label;
  Split split = Split::kUnassigned;
  // Relative to the dataset directory; filled when saved.
  std::vector<std::string> feature_paths;
};

struct SplitLabelCounts {
  std::array<std::array<std::size_t, 2>, 3> by_split{};  // [train, val, test][no_error, error]

  std::size_t at(Split split, ErrorLabelValue label) const {
    return by_split[static_cast<std::size_t>(split)][static_cast<std::size_t>(label)];
  }
};

struct ErrorDataset {
  RepresentationConfig representation;
  double tau = kDefaultMapThreshold;
  double iou_threshold = kDefaultIouThreshold;
  std::string manifest_id;
  std::uint64_t split_seed = 0;
  std::string feature_signature;
  std::vector<DatasetItem> items;
  // Parallel to items.
  std::vector<Feature> features;

  SplitLabelCounts counts() const;
  std::vector<std::size_t> indices(Split split) const;
  std::vector<ErrorLabelValue> labels(Split split) const;
  // Hash of the serialised item table; changes whenever labels, splits or
  // features change.
  std::string content_hash() const;
};

struct BuildOptions {
  double tau = kDefaultMapThreshold;
  double iou_threshold = kDefaultIouThreshold;
  std::uint64_t split_seed = 0;
  SplitRatios ratios;
  // Abort on the first frame missing an input; otherwise skip it with a warning.
  bool strict = true;
  const ClassMap* classes = nullptr;
};

// Hash of the manifest and of every activation and record file it names, so
// corpora that share a manifest layout still get distinct ids.
std::string corpus_id(const std::filesystem::path& manifest_path);

ErrorDataset build_error_dataset(const std::filesystem::path& manifest_path,
                                 const RepresentationConfig& representation,
                                 const BuildOptions& options = {});

// Re-derives every label from its stored mAP at a new threshold.
// Activation layers and detection records of a corpus, in manifest order.
struct CorpusFrames {
  std::vector<std::string> frame_ids;
  std::vector<std::vector<ActivationMap>> layers;
  std::vector<FrameRecord> records;

  // Views into this object; valid while it is alive and unmodified.
  std::vector<FrameInputs> inputs() const;
};

// Loads at most `limit` frames (0 = all).
CorpusFrames load_corpus_frames(const std::filesystem::path& manifest_path, std::size_t limit = 0,
                                const ClassMap* classes = nullptr);

ErrorDataset relabel(const ErrorDataset& dataset, double tau);

// Layout: dataset.jsonl (header + one item per line), labels.jsonl and
// features/<config hash>/<n>.amf (one file per map; vectors stored 1x1xL).
void save_error_dataset(const ErrorDataset& dataset, const std::filesystem::path& directory);
ErrorDataset load_error_dataset(const std::filesystem::path& directory);

// Aligned-text summary of counts per split and label.
std::string dataset_summary(const ErrorDataset& dataset);

// --- Synthetic corpora ---------------------------------------------------------

struct SyntheticConfig {
  std::size_t frame_count = 500;
  // Final backbone layer shape.
  std::uint32_t channels = 32;
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  // Total tapped layers; each shallower layer has half the channels and twice
  // the spatial size of the next.
  std::uint32_t layers = 2;
  double error_prevalence = 0.5;
  // Mean activation offset of error frames.
  double separation = 1.0;
  double base_mean = 1.0;
  double noise_std = 1.0;
  // Error regime corruption.
  double drop_rate = 0.6;
  double jitter_rate = 0.5;
  double false_positive_rate = 0.5;
  // Clean regime imperfection.
  double clean_miss_rate = 0.05;
  // Threshold the regimes are forced to straddle.
  double target_tau = kDefaultMapThreshold;
  bool images = true;
  std::uint32_t image_width = 64;
  std::uint32_t image_height = 48;
  std::uint64_t seed = 0;

  // Throws InputError on an infeasible configuration.
  void validate() const;
};

struct SyntheticSummary {
  std::filesystem::path manifest_path;
  std::size_t frame_count = 0;
  std::size_t error_frames = 0;
  double realized_prevalence = 0.0;
};

// Writes manifest.jsonl, records.jsonl and activations/ under `directory`.
// Stored detections determine the labels; error frames always score below
// target_tau and clean frames at or above it.
SyntheticSummary generate_synthetic_corpus(const SyntheticConfig& config,
                                           const std::filesystem::path& directory);

}  // namespace introspect
