// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// Per-frame detection quality: IoU, greedy matching, all-point interpolated
// AP, frame mAP and the error label derived from it.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "introspect/frame.hpp"

namespace introspect {

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr double kDefaultMapThreshold = 0.5;

double iou(const Box& a, const Box& b);

struct MatchResult {
  // Indexed like the input detections.
  std::vector<bool> true_positive;
  // Detection indices in the order they were considered (confidence desc).
  std::vector<std::size_t> order;
  std::size_t unmatched_ground_truth = 0;
};

// Greedy matching of same-class detections to ground truth. Detections are
// visited by descending confidence (stable on ties); each takes the unmatched
// box with the highest IoU >= iou_threshold (lowest index on IoU ties).
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> ground_truth,
                             double iou_threshold = kDefaultIouThreshold);

struct ScoredMatch {
  double confidence = 0.0;
  bool true_positive = false;
};

// All-point interpolated AP: sum over ranks k of (R_k - R_{k-1}) * max_{j>=k} P_j.
// Returns nullopt when there is neither ground truth nor a detection, 0.0 when
// there are detections but no ground truth.
std::optional<double> average_precision(std::span<const ScoredMatch> matches,
                                        std::size_t ground_truth_count);

// Mean AP over the classes present in ground truth or detections. A frame
// with nothing in either scores 1.0.
double frame_map(const FrameRecord& record, double iou_threshold = kDefaultIouThreshold);

enum class ErrorLabelValue : int { kNoError = 0, kError = 1 };

struct ErrorLabel {
  ErrorLabelValue value = ErrorLabelValue::kNoError;
  double map_value = 1.0;
  double threshold = kDefaultMapThreshold;

  bool is_error() const { return value == ErrorLabelValue::kError; }
  friend bool operator==(const ErrorLabel&, const ErrorLabel&) = default;
};

// Error iff map_value < threshold; the boundary counts as no error.
ErrorLabel label_frame(double map_value, double threshold = kDefaultMapThreshold);

// Raw dataset class names to the merged two-class scheme. Lookup is
// case-insensitive and treats '-', ' ' and '_' alike.
class ClassMap {
 public:
  // KITTI and BDD100K names plus the merged names themselves.
  static const ClassMap& defaults();

  ClassMap() = default;
  explicit ClassMap(std::map<std::string, ObjectClass> table);

  // Key=value lines, e.g. "car=vehicle"; '#' starts a comment.
  static ClassMap from_file(const std::filesystem::path& path);

  void add(std::string_view raw_name, ObjectClass cls);
  std::optional<ObjectClass> lookup(std::string_view raw_name) const;

 private:
  std::map<std::string, ObjectClass> table_;
};

// Throws InputError for names the map does not know.
ObjectClass merge_class(std::string_view raw_name, const ClassMap& classes = ClassMap::defaults());

// One line of the per-frame label file.
std::string label_to_json_line(std::string_view frame_id, const ErrorLabel& label);

}  // namespace introspect
