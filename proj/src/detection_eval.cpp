// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/detection_eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "introspect/errors.hpp"

namespace introspect {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> ground_truth, double iou_threshold) {
  MatchResult result;
  result.true_positive.assign(detections.size(), false);
  result.order.resize(detections.size());
  std::iota(result.order.begin(), result.order.end(), std::size_t{0});
  std::stable_sort(result.order.begin(), result.order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence > detections[b].confidence;
  });

  std::vector<bool> taken(ground_truth.size(), false);
  for (std::size_t d : result.order) {
    double best = -1.0;
    std::size_t best_gt = ground_truth.size();
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const double overlap = iou(detections[d].box, ground_truth[g].box);
      if (overlap >= iou_threshold && overlap > best) {
        best = overlap;
        best_gt = g;
      }
    }
    if (best_gt < ground_truth.size()) {
      taken[best_gt] = true;
      result.true_positive[d] = true;
    }
  }
  result.unmatched_ground_truth =
      static_cast<std::size_t>(std::count(taken.begin(), taken.end(), false));
  return result;
}

std::optional<double> average_precision(std::span<const ScoredMatch> matches,
                                        std::size_t ground_truth_count) {
  if (ground_truth_count == 0) {
    if (matches.empty()) return std::nullopt;
    return 0.0;
  }
  std::vector<std::size_t> order(matches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return matches[a].confidence > matches[b].confidence;
  });

  const std::size_t n = order.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (matches[order[k]].true_positive) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Precision envelope from the right.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  // Recall moves by exactly 1/G at each true positive and is flat elsewhere.
  double ap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (matches[order[k]].true_positive) ap += precision[k];
  }
  ap /= static_cast<double>(ground_truth_count);
  return ap;
}

double frame_map(const FrameRecord& record, double iou_threshold) {
  double sum = 0.0;
  int classes_present = 0;
  for (int c = 0; c < kObjectClassCount; ++c) {
    const auto cls = static_cast<ObjectClass>(c);
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
    for (const auto& d : record.detections) {
      if (d.cls == cls) dets.push_back(d);
    }
    for (const auto& g : record.ground_truth) {
      if (g.cls == cls) gts.push_back(g);
    }
    const MatchResult match = match_detections(dets, gts, iou_threshold);
    std::vector<ScoredMatch> scored(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      scored[i] = {dets[i].confidence, match.true_positive[i]};
    }
    const auto ap = average_precision(scored, gts.size());
    if (!ap) continue;
    sum += *ap;
    ++classes_present;
  }
  if (classes_present == 0) return 1.0;
  return sum / classes_present;
}

ErrorLabel label_frame(double map_value, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InputError("mAP threshold must lie in (0, 1)");
  }
  ErrorLabel label;
  label.map_value = map_value;
  label.threshold = threshold;
  label.value = map_value < threshold ? ErrorLabelValue::kError : ErrorLabelValue::kNoError;
  return label;
}

// --- ClassMap ----------------------------------------------------------------

namespace {

std::string normalize_name(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    if (ch == '-' || ch == ' ') ch = '_';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

std::optional<ObjectClass> parse_merged(std::string_view name) {
  const std::string n = normalize_name(name);
  if (n == "vehicle") return ObjectClass::kVehicle;
  if (n == "people") return ObjectClass::kPeople;
  return std::nullopt;
}

}  // namespace

ClassMap::ClassMap(std::map<std::string, ObjectClass> table) {
  for (const auto& [name, cls] : table) add(name, cls);
}

const ClassMap& ClassMap::defaults() {
  static const ClassMap kDefaults({
      {"vehicle", ObjectClass::kVehicle},
      {"car", ObjectClass::kVehicle},
      {"van", ObjectClass::kVehicle},
      {"truck", ObjectClass::kVehicle},
      {"bus", ObjectClass::kVehicle},
      {"tram", ObjectClass::kVehicle},
      {"train", ObjectClass::kVehicle},
      {"motor", ObjectClass::kVehicle},
      {"motorcycle", ObjectClass::kVehicle},
      {"bike", ObjectClass::kVehicle},
      {"bicycle", ObjectClass::kVehicle},
      {"people", ObjectClass::kPeople},
      {"person", ObjectClass::kPeople},
      {"pedestrian", ObjectClass::kPeople},
      {"person_sitting", ObjectClass::kPeople},
      {"cyclist", ObjectClass::kPeople},
      {"rider", ObjectClass::kPeople},
  });
  return kDefaults;
}

ClassMap ClassMap::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class map " + path.string());
  ClassMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const auto cls = eq == std::string::npos ? std::nullopt : parse_merged(trim(line.substr(eq + 1)));
    if (!cls) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'name=vehicle' or 'name=people'");
    }
    map.add(trim(line.substr(0, eq)), *cls);
  }
  return map;
}

void ClassMap::add(std::string_view raw_name, ObjectClass cls) {
  table_[normalize_name(raw_name)] = cls;
}

std::optional<ObjectClass> ClassMap::lookup(std::string_view raw_name) const {
  const auto it = table_.find(normalize_name(raw_name));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

ObjectClass merge_class(std::string_view raw_name, const ClassMap& classes) {
  if (auto cls = classes.lookup(raw_name)) return *cls;
  throw InputError("unmapped class '" + std::string(raw_name) + "'");
}

std::string label_to_json_line(std::string_view frame_id, const ErrorLabel& label) {
  return nlohmann::json{{"frame_id", frame_id},
                        {"map_value", label.map_value},
                        {"label", static_cast<int>(label.value)},
                        {"tau", label.threshold}}
      .dump();
}

}  // namespace introspect
