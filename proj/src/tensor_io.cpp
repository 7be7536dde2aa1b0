// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/tensor_io.hpp"

#include <spdlog/spdlog.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "introspect/detection_eval.hpp"
#include "introspect/errors.hpp"
#include "introspect/hashing.hpp"

namespace introspect {

using nlohmann::json;

// --- frame.hpp -------------------------------------------------------------

std::string_view to_string(ObjectClass cls) {
  return cls == ObjectClass::kVehicle ? "vehicle" : "people";
}

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 > x1 && y2 > y1;
}

void FrameRecord::validate() const {
  for (const auto& d : detections) {
    if (!d.box.valid()) throw InvariantError("frame " + frame_id + ": detection box has no area");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw InvariantError("frame " + frame_id + ": confidence outside [0,1]");
    }
  }
  for (const auto& g : ground_truth) {
    if (!g.box.valid()) {
      throw InvariantError("frame " + frame_id + ": ground-truth box has no area");
    }
  }
  if (image) {
    if (image->width == 0 || image->height == 0 || image->channels == 0) {
      throw InvariantError("frame " + frame_id + ": empty image");
    }
    const std::size_t expected =
        static_cast<std::size_t>(image->width) * image->height * image->channels;
    if (image->pixels.size() != expected) {
      throw InvariantError("frame " + frame_id + ": pixel count does not match image size");
    }
  }
}

// --- ActivationMap ---------------------------------------------------------

namespace {

std::size_t checked_element_count(std::uint32_t c, std::uint32_t h, std::uint32_t w) {
  if (c == 0 || h == 0 || w == 0) {
    throw InvariantError("activation map dimensions must be positive");
  }
  return static_cast<std::size_t>(c) * h * w;
}

std::uint32_t load_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void store_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

ActivationMap::ActivationMap(std::uint32_t channels, std::uint32_t height, std::uint32_t width)
    : channels_(channels),
      height_(height),
      width_(width),
      data_(checked_element_count(channels, height, width), 0.0f) {}

ActivationMap::ActivationMap(std::uint32_t channels, std::uint32_t height, std::uint32_t width,
                             std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != checked_element_count(channels, height, width)) {
    throw InvariantError("activation map payload length " + std::to_string(data_.size()) +
                         " does not match C*H*W");
  }
  validate();
}

void ActivationMap::validate() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const float v = data_[i];
    if (!std::isfinite(v)) {
      throw InvariantError("activation map element " + std::to_string(i) + " is not finite");
    }
    if (v < 0.0f) {
      throw InvariantError("activation map element " + std::to_string(i) + " is negative");
    }
  }
}

bool operator==(const ActivationMap& a, const ActivationMap& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

std::string encode_activation_map(const ActivationMap& map) {
  map.validate();
  std::string out;
  out.reserve(kAmfHeaderBytes + map.size() * 4);
  out.append(kAmfMagic);
  store_u32_le(out, map.channels());
  store_u32_le(out, map.height());
  store_u32_le(out, map.width());
  for (float v : map.values()) store_u32_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

ActivationMap decode_activation_map(std::string_view bytes) {
  if (bytes.size() < kAmfHeaderBytes || bytes.substr(0, 4) != kAmfMagic) {
    throw FormatError("not an AMF1 payload (bad magic)");
  }
  const std::uint32_t c = load_u32_le(bytes.data() + 4);
  const std::uint32_t h = load_u32_le(bytes.data() + 8);
  const std::uint32_t w = load_u32_le(bytes.data() + 12);
  if (c == 0 || h == 0 || w == 0) throw FormatError("AMF1 header has a zero dimension");
  const std::size_t n = static_cast<std::size_t>(c) * h * w;
  const std::size_t payload = bytes.size() - kAmfHeaderBytes;
  if (payload != n * 4) {
    throw FormatError("AMF1 payload holds " + std::to_string(payload / 4) + " values, header says " +
                      std::to_string(n));
  }
  std::vector<float> data(n);
  const char* p = bytes.data() + kAmfHeaderBytes;
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(load_u32_le(p + 4 * i));
  return ActivationMap(c, h, w, std::move(data));
}

void write_activation_map(const ActivationMap& map, const std::filesystem::path& destination) {
  const std::string bytes = encode_activation_map(map);
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + destination.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + destination.string());
}

ActivationMap read_activation_map(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw IoError("cannot open " + source.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_activation_map(buffer.str());
}

// --- Frame records ---------------------------------------------------------

namespace {

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j, const std::string& frame_id) {
  if (!j.is_array() || j.size() != 4) {
    throw FormatError("frame " + frame_id + ": box must be [x1, y1, x2, y2]");
  }
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) {
    throw InvariantError("frame " + frame_id + ": box with x2 <= x1 or y2 <= y1");
  }
  return b;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(line, line_no);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::string frame_record_to_json_line(const FrameRecord& record) {
  json j;
  j["frame_id"] = record.frame_id;
  j["detections"] = json::array();
  for (const auto& d : record.detections) {
    j["detections"].push_back(
        {{"class", to_string(d.cls)}, {"box", box_to_json(d.box)}, {"confidence", d.confidence}});
  }
  j["ground_truth"] = json::array();
  for (const auto& g : record.ground_truth) {
    j["ground_truth"].push_back({{"class", to_string(g.cls)}, {"box", box_to_json(g.box)}});
  }
  if (record.image) {
    j["image"] = {{"width", record.image->width},
                  {"height", record.image->height},
                  {"channels", record.image->channels},
                  {"pixels_b64", base64_encode(record.image->pixels)}};
  }
  return j.dump();
}

FrameRecord parse_frame_record(std::string_view line, const ClassMap& classes, bool strict,
                               const std::filesystem::path& base_dir, std::size_t* skipped) {
  const json j = json::parse(line);
  FrameRecord record;
  record.frame_id = j.at("frame_id").get<std::string>();

  auto resolve_class = [&](const json& obj) -> std::optional<ObjectClass> {
    const auto name = obj.at("class").get<std::string>();
    if (auto cls = classes.lookup(name)) return cls;
    if (strict) {
      throw InputError("frame " + record.frame_id + ": unmapped class '" + name + "'");
    }
    spdlog::warn("frame {}: skipping box with unmapped class '{}'", record.frame_id, name);
    if (skipped) ++*skipped;
    return std::nullopt;
  };

  for (const auto& d : j.value("detections", json::array())) {
    const auto cls = resolve_class(d);
    if (!cls) continue;
    Detection det{*cls, box_from_json(d.at("box"), record.frame_id),
                  d.at("confidence").get<double>()};
    record.detections.push_back(det);
  }
  for (const auto& g : j.value("ground_truth", json::array())) {
    const auto cls = resolve_class(g);
    if (!cls) continue;
    record.ground_truth.push_back({*cls, box_from_json(g.at("box"), record.frame_id)});
  }
  if (j.contains("image") && !j["image"].is_null()) {
    const json& im = j["image"];
    ImageMeta meta;
    meta.width = im.at("width").get<std::uint32_t>();
    meta.height = im.at("height").get<std::uint32_t>();
    meta.channels = im.value("channels", 1u);
    if (im.contains("pixels_b64")) {
      meta.pixels = base64_decode(im["pixels_b64"].get<std::string>());
    } else if (im.contains("pixels_path")) {
      std::filesystem::path p(im["pixels_path"].get<std::string>());
      if (p.is_relative()) p = base_dir / p;
      const std::string raw = read_text_file(p);
      meta.pixels.assign(raw.begin(), raw.end());
    } else {
      throw FormatError("frame " + record.frame_id + ": image needs pixels_b64 or pixels_path");
    }
    record.image = std::move(meta);
  }
  record.validate();
  return record;
}

std::vector<FrameRecord> read_frame_records(const std::filesystem::path& path,
                                            const ClassMap& classes, bool strict) {
  std::vector<FrameRecord> records;
  const auto base_dir = path.parent_path();
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    try {
      records.push_back(parse_frame_record(line, classes, strict, base_dir));
    } catch (const InvariantError& e) {
      throw InvariantError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return records;
}

std::vector<FrameRecord> read_frame_records(const std::filesystem::path& path) {
  return read_frame_records(path, ClassMap::defaults(), true);
}

void write_frame_records(std::span<const FrameRecord> records,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    r.validate();
    out << frame_record_to_json_line(r) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// --- Manifest ----------------------------------------------------------------

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnassigned: break;
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  if (text == "unassigned" || text.empty()) return Split::kUnassigned;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

CorpusManifest read_manifest(const std::filesystem::path& path, bool check_paths) {
  CorpusManifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> seen;
  bool header_seen = false;
  for_each_line(path, [&](const std::string& line, std::size_t) {
    const json j = json::parse(line);
    if (!j.contains("frame_id")) {
      if (header_seen || !manifest.entries.empty()) {
        throw FormatError("manifest header must be the first line");
      }
      manifest.format_version = j.at("format_version").get<int>();
      if (manifest.format_version != kManifestFormatVersion) {
        throw FormatError("unsupported manifest format_version " +
                          std::to_string(manifest.format_version));
      }
      header_seen = true;
      return;
    }
    ManifestEntry entry;
    entry.frame_id = j.at("frame_id").get<std::string>();
    entry.activations = j.value("activations", std::vector<std::string>{});
    entry.records = j.at("records").get<std::string>();
    entry.split = parse_split(j.value("split", std::string("unassigned")));
    if (!seen.insert(entry.frame_id).second) {
      throw FormatError("duplicate frame_id " + entry.frame_id);
    }
    manifest.entries.push_back(std::move(entry));
  });
  if (check_paths) {
    for (const auto& e : manifest.entries) {
      if (!std::filesystem::exists(manifest.resolve(e.records))) {
        throw IoError("frame " + e.frame_id + ": records file " + e.records + " not found");
      }
      for (const auto& a : e.activations) {
        if (!std::filesystem::exists(manifest.resolve(a))) {
          throw IoError("frame " + e.frame_id + ": activation file " + a + " not found");
        }
      }
    }
  }
  return manifest;
}

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json{{"format_version", manifest.format_version}}.dump() << '\n';
  for (const auto& e : manifest.entries) {
    out << json{{"frame_id", e.frame_id},
                {"activations", e.activations},
                {"records", e.records},
                {"split", to_string(e.split)}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace introspect
