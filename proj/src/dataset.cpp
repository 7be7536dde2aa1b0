// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/dataset.hpp"

#include <spdlog/spdlog.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "introspect/errors.hpp"
#include "introspect/hashing.hpp"

namespace introspect {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<Split> split_frames(std::span<const std::string> frame_ids,
                                const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw InputError("split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = frame_ids.size();
  if (n < 3) throw InputError("need at least 3 frames to split");

  // The 1e-9 nudge keeps e.g. 0.2 * 15 from flooring to 2.
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Split> out(n, Split::kTrain);
  for (std::size_t i = 0; i < n_val; ++i) out[order[i]] = Split::kVal;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) out[order[i]] = Split::kTest;
  return out;
}

ClassWeights class_weights(std::span<const ErrorLabelValue> labels) {
  ClassWeights w;
  for (auto l : labels) ++w.count[static_cast<std::size_t>(l)];
  const double n_samples = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < 2; ++c) {
    if (w.count[c] == 0) {
      w.missing_class = true;
      w.weight[c] = 0.0;
      continue;
    }
    w.weight[c] = n_samples / (2.0 * static_cast<double>(w.count[c]));
  }
  if (w.missing_class) spdlog::warn("class weights: one label class has no samples");
  return w;
}

SplitLabelCounts ErrorDataset::counts() const {
  SplitLabelCounts c;
  for (const auto& item : items) {
    if (item.split == Split::kUnassigned) continue;
    ++c.by_split[static_cast<std::size_t>(item.split)][static_cast<std::size_t>(item.label.value)];
  }
  return c;
}

std::vector<std::size_t> ErrorDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<ErrorLabelValue> ErrorDataset::labels(Split split) const {
  std::vector<ErrorLabelValue> out;
  for (const auto& item : items) {
    if (item.split == split) out.push_back(item.label.value);
  }
  return out;
}

namespace {

constexpr int kDatasetFormatVersion = 1;
constexpr const char* kMapConvention =
    "all-point interpolated AP; class with detections but no ground truth scores 0; "
    "frame without ground truth or detections scores 1; label error iff mAP < tau";

json header_json(const ErrorDataset& d) {
  const auto counts = d.counts();
  json c;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    c[std::string(to_string(s))] = {{"no_error", counts.at(s, ErrorLabelValue::kNoError)},
                                    {"error", counts.at(s, ErrorLabelValue::kError)}};
  }
  return {{"kind", "error_dataset"},
          {"format_version", kDatasetFormatVersion},
          {"representation", to_string(d.representation.kind)},
          {"shaping_mode", to_string(d.representation.shaping.mode)},
          {"percentile", d.representation.shaping.percentile},
          {"config_hash", d.representation.hash()},
          {"tau", d.tau},
          {"iou_threshold", d.iou_threshold},
          {"manifest_id", d.manifest_id},
          {"split_seed", d.split_seed},
          {"feature_shape", d.feature_signature},
          {"map_convention", kMapConvention},
          {"counts", c}};
}

json item_json(const DatasetItem& item) {
  return {{"frame_id", item.frame_id},
          {"features", item.feature_paths},
          {"map_value", item.label.map_value},
          {"label", static_cast<int>(item.label.value)},
          {"tau", item.label.threshold},
          {"split", to_string(item.split)}};
}

std::vector<ActivationMap> feature_as_maps(const Feature& f) {
  if (!f.is_vector()) return f.maps();
  const auto& v = f.vector();
  return {ActivationMap(1, 1, static_cast<std::uint32_t>(v.size()), v)};
}

Feature feature_from_maps(RepresentationKind kind, std::vector<ActivationMap> maps) {
  Feature f;
  f.kind = kind;
  const bool vector_kind = kind == RepresentationKind::kSf || kind == RepresentationKind::kHimf;
  if (vector_kind) {
    if (maps.size() != 1) throw FormatError("vector feature must be stored as one map");
    const auto v = maps[0].values();
    f.payload = FeatureVector(v.begin(), v.end());
  } else {
    f.payload = std::move(maps);
  }
  return f;
}

}  // namespace

std::string ErrorDataset::content_hash() const {
  std::string text = header_json(*this).dump() + "\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    json j = item_json(items[i]);
    j.erase("features");
    text += j.dump() + "\n";
    if (i < features.size()) {
      for (const auto& m : feature_as_maps(features[i])) text += sha256_hex(encode_activation_map(m));
    }
  }
  return sha256_hex(text);
}

std::string corpus_id(const fs::path& manifest_path) {
  const CorpusManifest manifest = read_manifest(manifest_path);
  std::string text = sha256_file(manifest_path);
  std::set<std::string> seen;
  auto add = [&](const std::string& rel) {
    if (!seen.insert(rel).second) return;
    text += "\n" + rel + " " + sha256_file(manifest.resolve(rel));
  };
  for (const auto& entry : manifest.entries) {
    for (const auto& a : entry.activations) add(a);
    add(entry.records);
  }
  return sha256_hex(text);
}

ErrorDataset build_error_dataset(const fs::path& manifest_path,
                                 const RepresentationConfig& representation,
                                 const BuildOptions& options) {
  representation.validate();
  if (!fs::exists(manifest_path)) throw IoError("manifest " + manifest_path.string() + " not found");
  const CorpusManifest manifest = read_manifest(manifest_path);
  const ClassMap& classes = options.classes ? *options.classes : ClassMap::defaults();

  ErrorDataset dataset;
  dataset.representation = representation;
  dataset.tau = options.tau;
  dataset.iou_threshold = options.iou_threshold;
  dataset.manifest_id = corpus_id(manifest_path);
  dataset.split_seed = options.split_seed;

  std::map<std::string, std::map<std::string, FrameRecord>> record_files;
  auto record_for = [&](const ManifestEntry& entry) -> const FrameRecord& {
    auto it = record_files.find(entry.records);
    if (it == record_files.end()) {
      std::map<std::string, FrameRecord> by_id;
      for (auto& r : read_frame_records(manifest.resolve(entry.records), classes, true)) {
        by_id.emplace(r.frame_id, std::move(r));
      }
      it = record_files.emplace(entry.records, std::move(by_id)).first;
    }
    const auto rec = it->second.find(entry.frame_id);
    if (rec == it->second.end()) {
      throw MissingInput("frame " + entry.frame_id + " has no record in " + entry.records);
    }
    return rec->second;
  };

  const bool needs_maps = representation.kind != RepresentationKind::kHimf;
  std::vector<Split> declared;
  for (const auto& entry : manifest.entries) {
    try {
      const FrameRecord& record = record_for(entry);
      std::vector<ActivationMap> layers;
      if (needs_maps) {
        for (const auto& a : entry.activations) layers.push_back(read_activation_map(manifest.resolve(a)));
      }
      Feature feature = extract(representation, {entry.frame_id, layers, &record});
      const std::string signature = feature.shape_signature();
      if (dataset.features.empty()) {
        dataset.feature_signature = signature;
      } else if (signature != dataset.feature_signature) {
        throw ShapeMismatch("frame " + entry.frame_id + ": feature shape " + signature +
                            " differs from " + dataset.feature_signature);
      }
      DatasetItem item;
      item.frame_id = entry.frame_id;
      item.label = label_frame(frame_map(record, options.iou_threshold), options.tau);
      dataset.items.push_back(std::move(item));
      dataset.features.push_back(std::move(feature));
      declared.push_back(entry.split);
    } catch (const MissingInput& e) {
      if (options.strict) throw;
      spdlog::warn("skipping frame: {}", e.what());
    }
  }

  const auto unassigned = std::count(declared.begin(), declared.end(), Split::kUnassigned);
  if (unassigned == static_cast<std::ptrdiff_t>(declared.size())) {
    std::vector<std::string> ids;
    for (const auto& item : dataset.items) ids.push_back(item.frame_id);
    const auto splits = split_frames(ids, options.ratios, options.split_seed);
    for (std::size_t i = 0; i < splits.size(); ++i) dataset.items[i].split = splits[i];
  } else if (unassigned == 0) {
    for (std::size_t i = 0; i < declared.size(); ++i) dataset.items[i].split = declared[i];
  } else {
    throw InputError("manifest mixes assigned and unassigned splits");
  }
  return dataset;
}

std::vector<FrameInputs> CorpusFrames::inputs() const {
  std::vector<FrameInputs> out;
  for (std::size_t i = 0; i < frame_ids.size(); ++i) out.push_back({frame_ids[i], layers[i], &records[i]});
  return out;
}

CorpusFrames load_corpus_frames(const fs::path& manifest_path, std::size_t limit, const ClassMap* classes) {
  if (!fs::exists(manifest_path)) throw IoError("manifest " + manifest_path.string() + " not found");
  const CorpusManifest manifest = read_manifest(manifest_path);
  const ClassMap& cmap = classes ? *classes : ClassMap::defaults();
  std::map<std::string, std::map<std::string, FrameRecord>> record_files;
  CorpusFrames out;
  for (const auto& entry : manifest.entries) {
    if (limit && out.frame_ids.size() >= limit) break;
    auto it = record_files.find(entry.records);
    if (it == record_files.end()) {
      std::map<std::string, FrameRecord> by_id;
      for (auto& r : read_frame_records(manifest.resolve(entry.records), cmap, true)) {
        by_id.emplace(r.frame_id, std::move(r));
      }
      it = record_files.emplace(entry.records, std::move(by_id)).first;
    }
    const auto rec = it->second.find(entry.frame_id);
    if (rec == it->second.end()) throw MissingInput("frame " + entry.frame_id + " has no record in " + entry.records);
    std::vector<ActivationMap> layers;
    for (const auto& a : entry.activations) layers.push_back(read_activation_map(manifest.resolve(a)));
    out.frame_ids.push_back(entry.frame_id);
    out.layers.push_back(std::move(layers));
    out.records.push_back(rec->second);
  }
  return out;
}

ErrorDataset relabel(const ErrorDataset& dataset, double tau) {
  ErrorDataset out = dataset;
  out.tau = tau;
  for (auto& item : out.items) item.label = label_frame(item.label.map_value, tau);
  return out;
}

void save_error_dataset(const ErrorDataset& dataset, const fs::path& directory) {
  const std::string hash = dataset.representation.hash();
  const fs::path feature_dir = directory / "features" / hash;
  fs::create_directories(feature_dir);

  ErrorDataset copy = dataset;
  for (std::size_t i = 0; i < copy.items.size(); ++i) {
    auto& item = copy.items[i];
    item.feature_paths.clear();
    const auto maps = feature_as_maps(dataset.features.at(i));
    for (std::size_t l = 0; l < maps.size(); ++l) {
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << i;
      if (maps.size() > 1) name << "_l" << l;
      name << ".amf";
      const std::string rel = "features/" + hash + "/" + name.str();
      write_activation_map(maps[l], directory / rel);
      item.feature_paths.push_back(rel);
    }
  }

  std::ofstream out(directory / "dataset.jsonl", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (directory / "dataset.jsonl").string());
  out << header_json(copy).dump() << '\n';
  for (const auto& item : copy.items) out << item_json(item).dump() << '\n';

  std::ofstream labels(directory / "labels.jsonl", std::ios::trunc);
  for (const auto& item : copy.items) labels << label_to_json_line(item.frame_id, item.label) << '\n';
  if (!out || !labels) throw IoError("write failed under " + directory.string());
}

ErrorDataset load_error_dataset(const fs::path& directory) {
  const fs::path path = directory / "dataset.jsonl";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ErrorDataset d;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty");
  try {
    const json h = json::parse(line);
    if (h.value("kind", "") != "error_dataset") throw FormatError("not an error dataset header");
    d.representation.kind = parse_representation(h.at("representation").get<std::string>());
    d.representation.shaping.mode = parse_shaping_mode(h.at("shaping_mode").get<std::string>());
    d.representation.shaping.percentile = h.at("percentile").get<double>();
    d.tau = h.at("tau").get<double>();
    d.iou_threshold = h.at("iou_threshold").get<double>();
    d.manifest_id = h.at("manifest_id").get<std::string>();
    d.split_seed = h.at("split_seed").get<std::uint64_t>();
    d.feature_signature = h.at("feature_shape").get<std::string>();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      DatasetItem item;
      item.frame_id = j.at("frame_id").get<std::string>();
      item.feature_paths = j.at("features").get<std::vector<std::string>>();
      item.label.map_value = j.at("map_value").get<double>();
      item.label.threshold = j.at("tau").get<double>();
      item.label.value = static_cast<ErrorLabelValue>(j.at("label").get<int>());
      item.split = parse_split(j.at("split").get<std::string>());
      std::vector<ActivationMap> maps;
      for (const auto& p : item.feature_paths) maps.push_back(read_activation_map(directory / p));
      Feature f = feature_from_maps(d.representation.kind, std::move(maps));
      f.frame_id = item.frame_id;
      f.config_hash = d.representation.hash();
      d.features.push_back(std::move(f));
      d.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return d;
}

std::string dataset_summary(const ErrorDataset& dataset) {
  const auto c = dataset.counts();
  std::ostringstream out;
  out << "representation: " << dataset.representation.canonical() << "  tau: " << dataset.tau
      << "  feature shape: " << dataset.feature_signature << '\n';
  out << std::left << std::setw(8) << "split" << std::right << std::setw(10) << "no_error"
      << std::setw(10) << "error" << std::setw(10) << "total" << '\n';
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto ne = c.at(s, ErrorLabelValue::kNoError);
    const auto e = c.at(s, ErrorLabelValue::kError);
    out << std::left << std::setw(8) << to_string(s) << std::right << std::setw(10) << ne
        << std::setw(10) << e << std::setw(10) << ne + e << '\n';
  }
  return out.str();
}

}  // namespace introspect
