// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "introspect/dataset.hpp"
#include "introspect/errors.hpp"

namespace introspect {

namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw InputError("infeasible synthetic config: " + what); };
  if (frame_count < 3) fail("frame_count must be at least 3");
  if (channels == 0 || height == 0 || width == 0) fail("map shape must be positive");
  if (layers == 0) fail("at least one tapped layer is required");
  if (!(error_prevalence > 0.0 && error_prevalence < 1.0)) fail("error prevalence must lie in (0, 1)");
  if (!(separation >= 0.0)) fail("separation must be non-negative");
  if (!(base_mean >= 0.0) || !(noise_std > 0.0)) fail("activation noise must be positive");
  for (double r : {drop_rate, jitter_rate, false_positive_rate, clean_miss_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) fail("corruption rates must lie in [0, 1]");
  }
  if (!(target_tau > 0.0 && target_tau < 1.0)) fail("target tau must lie in (0, 1)");
  if (image_width < 16 || image_height < 16) fail("image must be at least 16x16");
}

namespace {

class FrameSynth {
 public:
  FrameSynth(const SyntheticConfig& config, std::uint64_t seed) : config_(config), rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  std::vector<GroundTruth> ground_truth() {
    std::vector<GroundTruth> gts;
    const int vehicles = integer(1, 3);
    const int people = integer(0, 2);
    for (int i = 0; i < vehicles + people; ++i) {
      const auto cls = i < vehicles ? ObjectClass::kVehicle : ObjectClass::kPeople;
      const double iw = config_.image_width;
      const double ih = config_.image_height;
      const double w = std::round(uniform(0.12, 0.35) * iw);
      const double h = std::round(uniform(0.12, 0.35) * ih);
      const double x = std::round(uniform(0.0, iw - w));
      const double y = std::round(uniform(0.0, ih - h));
      gts.push_back({cls, {x, y, x + w, y + h}});
    }
    return gts;
  }

  Box jitter(const Box& b, double fraction) {
    const double dx = uniform(-fraction, fraction) * b.width();
    const double dy = uniform(-fraction, fraction) * b.height();
    return {b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
  }

  // Moved far enough that IoU with the source drops below 0.5.
  Box displace(const Box& b) {
    const double sx = chance(0.5) ? 1.0 : -1.0;
    const double dx = sx * uniform(0.55, 0.9) * b.width();
    return {b.x1 + dx, b.y1, b.x2 + dx, b.y2};
  }

  Box random_box() {
    const double iw = config_.image_width;
    const double ih = config_.image_height;
    const double w = uniform(0.1, 0.3) * iw;
    const double h = uniform(0.1, 0.3) * ih;
    const double x = uniform(0.0, iw - w);
    const double y = uniform(0.0, ih - h);
    return {x, y, x + w, y + h};
  }

  std::vector<Detection> clean_detections(const std::vector<GroundTruth>& gts) {
    std::vector<Detection> dets;
    for (const auto& g : gts) {
      if (chance(config_.clean_miss_rate)) continue;
      dets.push_back({g.cls, jitter(g.box, 0.05), uniform(0.6, 0.99)});
    }
    if (chance(0.3)) {
      dets.push_back({chance(0.5) ? ObjectClass::kVehicle : ObjectClass::kPeople, random_box(),
                      uniform(0.05, 0.3)});
    }
    return dets;
  }

  std::vector<Detection> error_detections(const std::vector<GroundTruth>& gts) {
    std::vector<Detection> dets;
    for (const auto& g : gts) {
      if (chance(config_.drop_rate)) continue;
      const bool displaced = chance(config_.jitter_rate);
      dets.push_back({g.cls, displaced ? displace(g.box) : jitter(g.box, 0.05), uniform(0.3, 0.95)});
    }
    if (chance(config_.false_positive_rate)) {
      dets.push_back({chance(0.5) ? ObjectClass::kVehicle : ObjectClass::kPeople, random_box(),
                      uniform(0.7, 0.99)});
    }
    return dets;
  }

  ImageMeta image(const std::vector<GroundTruth>& gts) {
    ImageMeta im;
    im.width = config_.image_width;
    im.height = config_.image_height;
    im.channels = 1;
    im.pixels.assign(static_cast<std::size_t>(im.width) * im.height, 0);
    const double base = uniform(40.0, 120.0);
    const double slope = uniform(-0.5, 0.5);
    for (std::uint32_t y = 0; y < im.height; ++y) {
      for (std::uint32_t x = 0; x < im.width; ++x) {
        const double v = base + slope * x + uniform(-2.0, 2.0);
        im.pixels[static_cast<std::size_t>(y) * im.width + x] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
    for (const auto& g : gts) {
      const auto value = static_cast<std::uint8_t>(integer(150, 250));
      const auto x1 = static_cast<std::uint32_t>(std::max(0.0, g.box.x1));
      const auto y1 = static_cast<std::uint32_t>(std::max(0.0, g.box.y1));
      const auto x2 = std::min<std::uint32_t>(im.width, static_cast<std::uint32_t>(g.box.x2));
      const auto y2 = std::min<std::uint32_t>(im.height, static_cast<std::uint32_t>(g.box.y2));
      for (std::uint32_t y = y1; y < y2; ++y) {
        for (std::uint32_t x = x1; x < x2; ++x) im.pixels[static_cast<std::size_t>(y) * im.width + x] = value;
      }
    }
    return im;
  }

  // Non-negative noise; error frames are shifted by `shift`.
  ActivationMap activations(std::uint32_t c, std::uint32_t h, std::uint32_t w,
                            std::span<const double> channel_gain, double shift) {
    std::normal_distribution<double> noise(0.0, config_.noise_std);
    std::vector<float> data(static_cast<std::size_t>(c) * h * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::uint32_t ch = 0; ch < c; ++ch) {
      const double mean = config_.base_mean * channel_gain[ch] + shift;
      for (std::size_t i = 0; i < plane; ++i) {
        data[ch * plane + i] = static_cast<float>(std::max(0.0, mean + noise(rng_)));
      }
    }
    return ActivationMap(c, h, w, std::move(data));
  }

 private:
  const SyntheticConfig& config_;
  std::mt19937_64 rng_;
};

struct LayerShape {
  std::uint32_t c, h, w;
};

std::vector<LayerShape> layer_shapes(const SyntheticConfig& config) {
  std::vector<LayerShape> shapes;
  LayerShape s{config.channels, config.height, config.width};
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    shapes.push_back(s);
    s = {std::max<std::uint32_t>(1, s.c / 2), s.h * 2, s.w * 2};
  }
  std::reverse(shapes.begin(), shapes.end());
  return shapes;
}

}  // namespace

SyntheticSummary generate_synthetic_corpus(const SyntheticConfig& config, const fs::path& directory) {
  config.validate();
  fs::create_directories(directory / "activations");

  std::mt19937_64 master(config.seed);
  const auto shapes = layer_shapes(config);
  std::vector<std::vector<double>> channel_gain;
  for (const auto& s : shapes) {
    std::vector<double> g(s.c);
    for (auto& v : g) v = std::uniform_real_distribution<double>(0.5, 1.5)(master);
    channel_gain.push_back(std::move(g));
  }

  // Exact error count, then shuffled, so prevalence tracks the target closely.
  const auto n = config.frame_count;
  const auto n_error = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.error_prevalence * static_cast<double>(n))), 1, n - 1);
  std::vector<bool> regime_error(n, false);
  std::fill(regime_error.begin(), regime_error.begin() + static_cast<std::ptrdiff_t>(n_error), true);
  std::shuffle(regime_error.begin(), regime_error.end(), master);

  CorpusManifest manifest;
  std::vector<FrameRecord> records;
  records.reserve(n);
  std::size_t error_frames = 0;
  for (std::size_t f = 0; f < n; ++f) {
    FrameSynth synth(config, master());
    std::ostringstream id;
    id << "frame_" << std::setw(6) << std::setfill('0') << f;

    FrameRecord record;
    record.frame_id = id.str();
    record.ground_truth = synth.ground_truth();
    record.detections = regime_error[f] ? synth.error_detections(record.ground_truth)
                                        : synth.clean_detections(record.ground_truth);
    if (regime_error[f]) {
      // Drop true positives until the frame falls below the target.
      while (frame_map(record) >= config.target_tau && !record.detections.empty()) {
        auto best = std::max_element(record.detections.begin(), record.detections.end(),
                                     [](const Detection& a, const Detection& b) {
                                       return a.confidence < b.confidence;
                                     });
        record.detections.erase(best);
      }
    } else if (frame_map(record) < config.target_tau) {
      record.detections.clear();
      for (const auto& g : record.ground_truth) record.detections.push_back({g.cls, g.box, 0.9});
    }
    if (config.images) record.image = synth.image(record.ground_truth);

    // The label comes from the stored detections, not the drawn regime.
    const bool is_error = label_frame(frame_map(record), config.target_tau).is_error();
    if (is_error) ++error_frames;
    const double shift = is_error ? config.separation : 0.0;

    ManifestEntry entry;
    entry.frame_id = record.frame_id;
    entry.records = "records.jsonl";
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      const auto& s = shapes[l];
      const ActivationMap map = synth.activations(s.c, s.h, s.w, channel_gain[l], shift);
      const std::string rel = "activations/" + record.frame_id + "_l" + std::to_string(l) + ".amf";
      write_activation_map(map, directory / rel);
      entry.activations.push_back(rel);
    }
    manifest.entries.push_back(std::move(entry));
    records.push_back(std::move(record));
  }

  write_frame_records(records, directory / "records.jsonl");
  write_manifest(manifest, directory / "manifest.jsonl");

  SyntheticSummary summary;
  summary.manifest_path = directory / "manifest.jsonl";
  summary.frame_count = n;
  summary.error_frames = error_frames;
  summary.realized_prevalence = static_cast<double>(error_frames) / static_cast<double>(n);
  return summary;
}

}  // namespace introspect
