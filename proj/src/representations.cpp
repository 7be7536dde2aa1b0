// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/representations.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "introspect/errors.hpp"
#include "introspect/hashing.hpp"

namespace introspect {

std::string_view to_string(RepresentationKind kind) {
  switch (kind) {
    case RepresentationKind::kLfr: return "lfr";
    case RepresentationKind::kLfAsh: return "lf-ash";
    case RepresentationKind::kSf: return "sf";
    case RepresentationKind::kClf: return "clf";
    case RepresentationKind::kHimf: return "himf";
  }
  return "?";
}

RepresentationKind parse_representation(std::string_view text) {
  std::string t;
  for (char c : text) {
    t.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (t == "lfr") return RepresentationKind::kLfr;
  if (t == "lf-ash" || t == "lfash") return RepresentationKind::kLfAsh;
  if (t == "sf") return RepresentationKind::kSf;
  if (t == "clf") return RepresentationKind::kClf;
  if (t == "himf") return RepresentationKind::kHimf;
  throw InputError("unknown representation '" + std::string(text) + "'");
}

void RepresentationConfig::validate() const {
  if (kind == RepresentationKind::kLfAsh) {
    if (shaping.mode == ShapingMode::kNone) {
      throw InputError("lf-ash needs a shaping mode (P, B or S); use lfr for raw maps");
    }
    shaping.validate();
  }
}

std::string RepresentationConfig::canonical() const {
  std::string out(to_string(kind));
  if (kind == RepresentationKind::kLfAsh) out += "/" + shaping.canonical();
  return out;
}

std::string RepresentationConfig::hash() const { return short_hash(canonical()); }

std::string Feature::shape_signature() const {
  if (is_vector()) return "v" + std::to_string(vector().size());
  std::string out;
  for (const auto& m : maps()) {
    if (!out.empty()) out += ',';
    out += "m" + std::to_string(m.channels()) + "x" + std::to_string(m.height()) + "x" +
           std::to_string(m.width());
  }
  return out;
}

FeatureVector sf_features(const ActivationMap& map) {
  const std::uint32_t c_count = map.channels();
  const double area = static_cast<double>(map.plane_size());
  FeatureVector out(3 * static_cast<std::size_t>(c_count));
  for (std::uint32_t c = 0; c < c_count; ++c) {
    const auto plane = map.channel(c);
    double sum = 0.0;
    float max = plane[0];
    for (float v : plane) {
      sum += v;
      max = std::max(max, v);
    }
    const double mean = sum / area;
    double sq = 0.0;
    for (float v : plane) sq += (v - mean) * (v - mean);
    out[c] = static_cast<float>(mean);
    out[c_count + c] = max;
    out[2 * c_count + c] = static_cast<float>(std::sqrt(sq / area));
  }
  return out;
}

MapStack clf_pool(std::span<const ActivationMap> layers) {
  MapStack out;
  out.reserve(layers.size());
  for (const auto& layer : layers) {
    const std::size_t plane = layer.plane_size();
    std::vector<double> acc(plane, 0.0);
    for (std::uint32_t c = 0; c < layer.channels(); ++c) {
      const auto ch = layer.channel(c);
      for (std::size_t i = 0; i < plane; ++i) acc[i] += ch[i];
    }
    std::vector<float> pooled(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      pooled[i] = static_cast<float>(acc[i] / layer.channels());
    }
    out.emplace_back(1, layer.height(), layer.width(), std::move(pooled));
  }
  return out;
}

namespace {

void check_image(const ImageMeta& image) {
  if (image.width == 0 || image.height == 0 || image.channels == 0 || image.pixels.empty()) {
    throw InputError("empty image");
  }
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw InvariantError("pixel count does not match image size");
  }
}

}  // namespace

double histogram_entropy(const ImageMeta& image) {
  check_image(image);
  const std::size_t pixel_count = static_cast<std::size_t>(image.width) * image.height;
  double total = 0.0;
  for (std::uint32_t c = 0; c < image.channels; ++c) {
    std::array<std::size_t, 256> bins{};
    for (std::size_t i = 0; i < pixel_count; ++i) ++bins[image.pixels[i * image.channels + c]];
    double h = 0.0;
    for (std::size_t count : bins) {
      if (count == 0) continue;
      const double p = static_cast<double>(count) / static_cast<double>(pixel_count);
      h -= p * std::log2(p);
    }
    total += h;
  }
  return total / image.channels;
}

std::size_t harris_corner_count(const ImageMeta& image, const HarrisParams& params) {
  check_image(image);
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  std::vector<double> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::uint32_t c = 0; c < image.channels; ++c) s += image.at(x, y, c);
      gray[static_cast<std::size_t>(y) * w + x] = s / image.channels;
    }
  }
  auto at = [&](const std::vector<double>& img, int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return img[static_cast<std::size_t>(y) * w + x];
  };

  std::vector<double> ixx(gray.size()), iyy(gray.size()), ixy(gray.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (at(gray, x + 1, y - 1) + 2.0 * at(gray, x + 1, y) + at(gray, x + 1, y + 1)) -
                        (at(gray, x - 1, y - 1) + 2.0 * at(gray, x - 1, y) + at(gray, x - 1, y + 1));
      const double gy = (at(gray, x - 1, y + 1) + 2.0 * at(gray, x, y + 1) + at(gray, x + 1, y + 1)) -
                        (at(gray, x - 1, y - 1) + 2.0 * at(gray, x, y - 1) + at(gray, x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }

  const double edge = std::exp(-1.0 / (2.0 * params.sigma * params.sigma));
  const std::array<double, 3> g1{edge / (1.0 + 2.0 * edge), 1.0 / (1.0 + 2.0 * edge),
                                 edge / (1.0 + 2.0 * edge)};
  auto window = [&](const std::vector<double>& img, int x, int y) {
    double s = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) s += g1[dy + 1] * g1[dx + 1] * at(img, x + dx, y + dy);
    }
    return s;
  };

  std::vector<double> response(gray.size());
  double max_response = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sxx = window(ixx, x, y);
      const double syy = window(iyy, x, y);
      const double sxy = window(ixy, x, y);
      const double trace = sxx + syy;
      const double r = sxx * syy - sxy * sxy - params.k * trace * trace;
      response[static_cast<std::size_t>(y) * w + x] = r;
      max_response = std::max(max_response, r);
    }
  }
  if (max_response <= 0.0) return 0;

  const double threshold = params.relative_threshold * max_response;
  std::size_t corners = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = response[static_cast<std::size_t>(y) * w + x];
      if (r <= threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const double n = response[static_cast<std::size_t>(ny) * w + nx];
          // Plateaus count once: earlier raster neighbours must be strictly lower.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > r || (earlier && n == r)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) ++corners;
    }
  }
  return corners;
}

std::array<float, kHimfImageLength> himf_image_features(const ImageMeta& image) {
  return {static_cast<float>(histogram_entropy(image)), static_cast<float>(image.width),
          static_cast<float>(image.height), static_cast<float>(harris_corner_count(image))};
}

std::array<float, kHimfModelLength> himf_model_features(std::span<const Detection> detections,
                                                        double image_width,
                                                        double image_height) {
  std::array<float, kHimfModelLength> out{};
  if (detections.empty()) return out;
  if (!(image_width > 0.0 && image_height > 0.0)) {
    throw InputError("image size must be positive for location scores");
  }

  std::array<double, kObjectClassCount> class_sum{};
  std::array<int, kObjectClassCount> class_n{};
  std::array<double, 9> cell_sum{};
  std::array<int, 9> cell_n{};
  double min_conf = std::numeric_limits<double>::infinity();
  double max_conf = -std::numeric_limits<double>::infinity();
  double conf_sum = 0.0;
  double min_area = std::numeric_limits<double>::infinity();
  double area_sum = 0.0;

  for (const auto& d : detections) {
    const int c = static_cast<int>(d.cls);
    class_sum[c] += d.confidence;
    ++class_n[c];
    min_conf = std::min(min_conf, d.confidence);
    max_conf = std::max(max_conf, d.confidence);
    conf_sum += d.confidence;
    min_area = std::min(min_area, d.box.area());
    area_sum += d.box.area();
    const double cx = 0.5 * (d.box.x1 + d.box.x2);
    const double cy = 0.5 * (d.box.y1 + d.box.y2);
    const int col = std::clamp(static_cast<int>(std::floor(3.0 * cx / image_width)), 0, 2);
    const int row = std::clamp(static_cast<int>(std::floor(3.0 * cy / image_height)), 0, 2);
    cell_sum[row * 3 + col] += d.confidence;
    ++cell_n[row * 3 + col];
  }

  const double n = static_cast<double>(detections.size());
  for (int c = 0; c < kObjectClassCount; ++c) {
    out[c] = class_n[c] ? static_cast<float>(class_sum[c] / class_n[c]) : 0.0f;
  }
  out[2] = static_cast<float>(min_conf);
  out[3] = static_cast<float>(max_conf);
  out[4] = static_cast<float>(conf_sum / n);
  out[5] = static_cast<float>(n);
  out[6] = static_cast<float>(min_area);
  out[7] = static_cast<float>(area_sum / n);
  for (int i = 0; i < 9; ++i) {
    out[8 + i] = cell_n[i] ? static_cast<float>(cell_sum[i] / cell_n[i]) : 0.0f;
  }
  return out;
}

Feature extract(const RepresentationConfig& config, const FrameInputs& inputs) {
  config.validate();
  Feature feature;
  feature.kind = config.kind;
  feature.frame_id = inputs.frame_id;
  feature.config_hash = config.hash();

  const bool needs_maps = config.kind != RepresentationKind::kHimf;
  if (needs_maps && inputs.layers.empty()) {
    throw MissingInput("frame " + inputs.frame_id + ": " + std::string(to_string(config.kind)) +
                       " needs activation maps");
  }

  switch (config.kind) {
    case RepresentationKind::kLfr:
      feature.payload = MapStack{inputs.layers.back()};
      break;
    case RepresentationKind::kLfAsh: {
      ShapeResult shaped = shape(inputs.layers.back(), config.shaping);
      if (shaped.degenerate) {
        spdlog::warn("frame {}: degenerate activation map, shaped to zeros", inputs.frame_id);
      }
      feature.payload = MapStack{std::move(shaped.map)};
      break;
    }
    case RepresentationKind::kSf:
      feature.payload = sf_features(inputs.layers.back());
      break;
    case RepresentationKind::kClf:
      feature.payload = clf_pool(inputs.layers);
      break;
    case RepresentationKind::kHimf: {
      if (inputs.record == nullptr || !inputs.record->image) {
        throw MissingInput("frame " + inputs.frame_id + ": himf needs the image in the frame record");
      }
      const ImageMeta& image = *inputs.record->image;
      const auto img = himf_image_features(image);
      const auto model = himf_model_features(inputs.record->detections, image.width, image.height);
      FeatureVector v(img.begin(), img.end());
      v.insert(v.end(), model.begin(), model.end());
      feature.payload = std::move(v);
      break;
    }
  }
  return feature;
}

std::size_t serialized_feature_bytes(const Feature& feature) {
  if (feature.is_vector()) return kAmfHeaderBytes + 4 * feature.vector().size();
  std::size_t bytes = 0;
  for (const auto& m : feature.maps()) bytes += kAmfHeaderBytes + 4 * m.size();
  return bytes;
}

}  // namespace introspect
