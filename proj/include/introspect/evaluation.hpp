// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "introspect/dataset.hpp"
#include "introspect/introspector.hpp"

namespace introspect {

inline constexpr double kDecisionThreshold = 0.5;

// P(score_error > score_no_error) + 0.5 * P(tie) over all error x no-error
// pairs, via average ranks. Labels: 1 = error. nullopt if a class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels);

// Positive class is error (label 1); a score >= threshold predicts error.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const int> labels, std::span<const double> scores,
                          double threshold = kDecisionThreshold);

// [F1 no_error, F1 error]; a class whose precision + recall is 0 scores 0.
std::array<double, 2> f1_per_class(const ConfusionCounts& counts);
double f1_macro(const ConfusionCounts& counts);
// FN / (FN + TP); nullopt without error samples.
std::optional<double> fnr(const ConfusionCounts& counts);

struct MetricsReport {
  std::optional<double> auroc;
  double f1_macro = 0.0;
  std::array<double, 2> f1_per_class{0.0, 0.0};
  std::optional<double> fnr;
  ConfusionCounts counts;
  std::array<std::size_t, 2> n_per_label{0, 0};
  std::string split;
  std::string representation;
  std::string model_dataset;  // dataset hash the model was trained on
  std::string model_manifest;
  std::string eval_dataset;   // dataset hash evaluated on
  std::string eval_manifest;

  std::string to_json_line() const;
  std::string to_text() const;
};

MetricsReport evaluate(const Introspector& model, const ErrorDataset& dataset, Split split = Split::kTest);

// As evaluate, for a dataset from another corpus. Representation and feature
// shape must match the model's (ShapeMismatch otherwise).
MetricsReport cross_evaluate(const Introspector& model, const ErrorDataset& dataset,
                             Split split = Split::kTest);

// Aligned-text table of several reports, one row each.
std::string reports_table(std::span<const MetricsReport> reports, std::span<const std::string> names);

struct SweepRow {
  double tau = 0.0;
  std::size_t n_total = 0;
  std::size_t n_error = 0;
  double prevalence = 0.0;
  ClassWeights weights;  // from the train split at this tau
  MetricsReport report;
  std::vector<ErrorLabel> labels;  // per item, in dataset order
};

// For each tau: relabel from the stored mAP, retrain with the same config and
// seed, evaluate on test.
std::vector<SweepRow> threshold_sweep(const ErrorDataset& dataset, std::span<const double> taus,
                                      const ArchConfig& arch, const TrainConfig& config);

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

struct ProfileResult {
  RepresentationKind kind = RepresentationKind::kLfr;
  std::string config;
  std::size_t frames = 0;
  std::size_t repetitions = 0;
  // Median over repetitions of the per-frame extraction time.
  double median_seconds = 0.0;
  // File size of the cached feature of the first frame.
  std::size_t feature_bytes = 0;
};

inline constexpr std::size_t kProfileWarmups = 3;

// Times extract() with a monotonic clock after kProfileWarmups untimed
// passes, and writes the first frame's feature under cache_dir to size it.
ProfileResult profile_representation(const RepresentationConfig& config,
                                     std::span<const FrameInputs> frames, std::size_t repetitions,
                                     const std::filesystem::path& cache_dir);

std::string profile_table(std::span<const ProfileResult> results);

}  // namespace introspect
