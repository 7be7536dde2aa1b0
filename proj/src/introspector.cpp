// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/introspector.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <locale>
#include <mutex>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "introspect/errors.hpp"
#include "introspect/evaluation.hpp"
#include "introspect/hashing.hpp"

namespace introspect {

namespace fs = std::filesystem;

// --- Focal loss ----------------------------------------------------------------

std::array<double, 2> softmax2(std::span<const double> logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double focal_loss(std::span<const double> probs, int true_class, double alpha, double gamma) {
  const double q = std::clamp(probs[static_cast<std::size_t>(true_class)], kProbabilityEpsilon,
                              1.0 - kProbabilityEpsilon);
  return -alpha * std::pow(1.0 - q, gamma) * std::log(q);
}

FocalLossResult focal_loss_from_logits(std::span<const double> logits, int true_class, double alpha,
                                       double gamma) {
  const auto y = static_cast<std::size_t>(true_class);
  const auto q = softmax2(logits);
  FocalLossResult result;
  result.loss = focal_loss(q, true_class, alpha, gamma);

  // d/dz_y of -alpha r^gamma ln p with p = q_y, r = 1 - p, written without a
  // division by p so it stays finite for saturated logits.
  const double m = std::max(logits[0], logits[1]);
  const double log_p = logits[y] - m - std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  const double p = q[y];
  const double r = q[1 - y];
  const double g_true = alpha * gamma * std::pow(r, gamma) * p * log_p - alpha * std::pow(r, gamma + 1.0);
  result.grad_logits[y] = g_true;
  result.grad_logits[1 - y] = -g_true;
  return result;
}

// --- Architectures ---------------------------------------------------------------

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::kMlp: return "mlp";
    case ArchKind::kSmallConv: return "smallconv";
    case ArchKind::kCascade: return "cascade";
  }
  return "?";
}

ArchKind parse_arch(std::string_view text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "mlp") return ArchKind::kMlp;
  if (t == "smallconv") return ArchKind::kSmallConv;
  if (t == "cascade") return ArchKind::kCascade;
  throw InputError("unknown architecture '" + std::string(text) + "'");
}

ArchKind default_arch(RepresentationKind kind) {
  switch (kind) {
    case RepresentationKind::kSf:
    case RepresentationKind::kHimf: return ArchKind::kMlp;
    case RepresentationKind::kClf: return ArchKind::kCascade;
    case RepresentationKind::kLfr:
    case RepresentationKind::kLfAsh: break;
  }
  return ArchKind::kSmallConv;
}

std::string ArchConfig::canonical() const {
  std::ostringstream out;
  out << to_string(kind);
  switch (kind) {
    case ArchKind::kMlp:
      out << " hidden=";
      for (std::size_t i = 0; i < hidden.size(); ++i) out << (i ? "," : "") << hidden[i];
      break;
    case ArchKind::kSmallConv:
      out << " conv=" << conv_widths[0] << "," << conv_widths[1] << " dense=" << dense;
      break;
    case ArchKind::kCascade:
      out << " branch=" << cascade_branch_width << " trunk=" << cascade_trunk_width << " dense=" << dense;
      break;
  }
  out << " init_seed=" << init_seed;
  return out.str();
}

std::vector<nn::Shape3> feature_input_shapes(const Feature& feature) {
  if (feature.is_vector()) return {{static_cast<std::uint32_t>(feature.vector().size()), 1, 1}};
  std::vector<nn::Shape3> out;
  for (const auto& m : feature.maps()) out.push_back({m.channels(), m.height(), m.width()});
  return out;
}

std::vector<nn::Shape3> parse_feature_signature(std::string_view signature) {
  std::vector<nn::Shape3> out;
  std::string s(signature);
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.size() < 2) throw FormatError("bad feature signature '" + s + "'");
    if (part[0] == 'v') {
      out.push_back({static_cast<std::uint32_t>(std::stoul(part.substr(1))), 1, 1});
    } else if (part[0] == 'm') {
      unsigned c = 0, h = 0, w = 0;
      if (std::sscanf(part.c_str(), "m%ux%ux%u", &c, &h, &w) != 3) {
        throw FormatError("bad feature signature '" + s + "'");
      }
      out.push_back({c, h, w});
    } else {
      throw FormatError("bad feature signature '" + s + "'");
    }
  }
  if (out.empty()) throw FormatError("empty feature signature");
  return out;
}

nn::Network build_network(const ArchConfig& arch, std::span<const nn::Shape3> inputs) {
  using namespace nn;
  if (inputs.empty()) throw ShapeMismatch("network needs at least one input");
  std::vector<LayerStack> branches;
  LayerStack trunk;

  switch (arch.kind) {
    case ArchKind::kMlp: {
      if (inputs.size() != 1 || inputs[0].h != 1 || inputs[0].w != 1) {
        throw ShapeMismatch("mlp consumes a single feature vector");
      }
      LayerStack layers;
      std::size_t width = inputs[0].size();
      for (std::uint32_t h : arch.hidden) {
        layers.push_back(std::make_unique<Dense>(width, h));
        layers.push_back(std::make_unique<Relu>(Shape3{h, 1, 1}));
        width = h;
      }
      layers.push_back(std::make_unique<Dense>(width, 2));
      branches.push_back(std::move(layers));
      break;
    }
    case ArchKind::kSmallConv: {
      if (inputs.size() != 1 || inputs[0].h < 2 || inputs[0].w < 2) {
        throw ShapeMismatch("smallconv consumes a single map of at least 2x2");
      }
      LayerStack layers;
      auto conv1 = std::make_unique<Conv3x3>(inputs[0], arch.conv_widths[0]);
      const Shape3 s1 = conv1->output_shape();
      layers.push_back(std::move(conv1));
      layers.push_back(std::make_unique<Relu>(s1));
      auto pool = std::make_unique<MaxPool2>(s1);
      const Shape3 s2 = pool->output_shape();
      layers.push_back(std::move(pool));
      auto conv2 = std::make_unique<Conv3x3>(s2, arch.conv_widths[1]);
      const Shape3 s3 = conv2->output_shape();
      layers.push_back(std::move(conv2));
      layers.push_back(std::make_unique<Relu>(s3));
      layers.push_back(std::make_unique<GlobalAvgPool>(s3));
      layers.push_back(std::make_unique<Dense>(s3.c, arch.dense));
      layers.push_back(std::make_unique<Relu>(Shape3{arch.dense, 1, 1}));
      layers.push_back(std::make_unique<Dense>(arch.dense, 2));
      branches.push_back(std::move(layers));
      break;
    }
    case ArchKind::kCascade: {
      std::uint32_t hmin = inputs[0].h, wmin = inputs[0].w;
      for (const auto& s : inputs) {
        hmin = std::min(hmin, s.h);
        wmin = std::min(wmin, s.w);
      }
      for (const auto& s : inputs) {
        const std::uint32_t stride = s.h / hmin;
        if (s.h != stride * hmin || s.w != stride * wmin) {
          throw ShapeMismatch("cascade inputs must be integer multiples of the smallest map");
        }
        LayerStack branch;
        branch.push_back(std::make_unique<Conv3x3>(s, arch.cascade_branch_width, stride));
        branch.push_back(std::make_unique<Relu>(branch.back()->output_shape()));
        branches.push_back(std::move(branch));
      }
      const Shape3 concat{arch.cascade_branch_width * static_cast<std::uint32_t>(inputs.size()), hmin, wmin};
      auto conv = std::make_unique<Conv3x3>(concat, arch.cascade_trunk_width);
      const Shape3 s = conv->output_shape();
      trunk.push_back(std::move(conv));
      trunk.push_back(std::make_unique<Relu>(s));
      trunk.push_back(std::make_unique<Dense>(s.size(), arch.dense));
      trunk.push_back(std::make_unique<Relu>(Shape3{arch.dense, 1, 1}));
      trunk.push_back(std::make_unique<Dense>(arch.dense, 2));
      break;
    }
  }
  return Network(std::move(branches), std::move(trunk));
}

namespace {

void check_compatible(ArchKind arch, bool vector_feature) {
  if (vector_feature != (arch == ArchKind::kMlp)) {
    throw ShapeMismatch(std::string("architecture ") + std::string(to_string(arch)) +
                        (vector_feature ? " cannot consume a feature vector" : " cannot consume activation maps"));
  }
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

// --- TrainConfig -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0) throw InputError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InputError("learning rate must be >= 0");
  if (!(gamma >= 0.0)) throw InputError("gamma must be >= 0");
  if (max_epochs == 0) throw InputError("max_epochs must be positive");
  if (patience == 0) throw InputError("patience must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
}

std::string TrainConfig::canonical() const {
  return "batch_size=" + std::to_string(batch_size) + " learning_rate=" + fmt_double(learning_rate) +
         " gamma=" + fmt_double(gamma) + " max_epochs=" + std::to_string(max_epochs) +
         " patience=" + std::to_string(patience) + " momentum=" + fmt_double(momentum) +
         " shuffle_seed=" + std::to_string(shuffle_seed);
}

// --- Normalizer ------------------------------------------------------------------

InputNormalizer InputNormalizer::fit(std::span<const Feature* const> features) {
  InputNormalizer norm;
  if (features.empty()) throw InputError("cannot fit a normaliser on no samples");
  const Feature& first = *features[0];
  if (first.is_vector()) {
    const std::size_t d = first.vector().size();
    std::vector<double> mean(d, 0.0), sq(d, 0.0);
    for (const Feature* f : features) {
      const auto& v = f->vector();
      for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
    }
    for (auto& m : mean) m /= static_cast<double>(features.size());
    for (const Feature* f : features) {
      const auto& v = f->vector();
      for (std::size_t i = 0; i < d; ++i) sq[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double sd = std::sqrt(sq[i] / static_cast<double>(features.size()));
      norm.shift.push_back(static_cast<float>(mean[i]));
      norm.scale.push_back(sd > 1e-8 ? static_cast<float>(sd) : 1.0f);
    }
  } else {
    const std::size_t layers = first.maps().size();
    for (std::size_t l = 0; l < layers; ++l) {
      double sq = 0.0;
      std::size_t n = 0;
      for (const Feature* f : features) {
        for (float v : f->maps()[l].values()) sq += static_cast<double>(v) * v;
        n += f->maps()[l].size();
      }
      const double rms = std::sqrt(sq / static_cast<double>(n));
      norm.shift.push_back(0.0f);
      norm.scale.push_back(rms > 1e-12 ? static_cast<float>(rms) : 1.0f);
    }
  }
  return norm;
}

std::vector<std::vector<double>> InputNormalizer::apply(const Feature& feature) const {
  std::vector<std::vector<double>> out;
  if (feature.is_vector()) {
    const auto& v = feature.vector();
    if (v.size() != shift.size()) throw ShapeMismatch("feature vector length does not match the model");
    std::vector<double> x(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) x[i] = (v[i] - static_cast<double>(shift[i])) / scale[i];
    out.push_back(std::move(x));
    return out;
  }
  const auto& maps = feature.maps();
  if (maps.size() != scale.size()) throw ShapeMismatch("map count does not match the model");
  for (std::size_t l = 0; l < maps.size(); ++l) {
    const auto vals = maps[l].values();
    std::vector<double> x(vals.size());
    const double s = scale[l];
    for (std::size_t i = 0; i < vals.size(); ++i) x[i] = (vals[i] - static_cast<double>(shift[l])) / s;
    out.push_back(std::move(x));
  }
  return out;
}

// --- Training --------------------------------------------------------------------

double batch_loss_and_gradient(const nn::Network& network, std::span<const double> params,
                               std::span<const Sample> batch, const std::array<double, 2>& alpha,
                               double gamma, std::span<double> grad, nn::Workspace& ws) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Sample& s : batch) {
    const auto logits = network.forward(params, s.inputs, ws);
    const auto y = static_cast<std::size_t>(s.label);
    FocalLossResult fl = focal_loss_from_logits(logits, s.label, alpha[y], gamma);
    loss += fl.loss * inv;
    const std::array<double, 2> g{fl.grad_logits[0] * inv, fl.grad_logits[1] * inv};
    network.backward(params, s.inputs, g, grad, ws);
  }
  return loss;
}

StepResult sgd_step(const nn::Network& network, std::span<double> params, std::span<double> velocity,
                    std::span<const Sample> batch, const std::array<double, 2>& alpha,
                    const TrainConfig& config, nn::Workspace& ws) {
  if (batch.empty()) throw InputError("empty batch");
  std::vector<double> grad(params.size());
  StepResult result;
  result.loss = batch_loss_and_gradient(network, params, batch, alpha, config.gamma, grad, ws);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("non-finite gradient at parameter " + std::to_string(i) + " (batch loss " +
                           fmt_double(result.loss) + ", lr " + fmt_double(config.learning_rate) + ")");
    }
  }
  if (config.momentum > 0.0 && velocity.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = config.momentum * velocity[i] + grad[i];
      params[i] -= config.learning_rate * velocity[i];
    }
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
  }
  return result;
}

namespace {

struct PreparedSplit {
  std::vector<std::vector<std::vector<double>>> storage;
  std::vector<Sample> samples;
};

PreparedSplit prepare(const ErrorDataset& dataset, std::span<const std::size_t> idx,
                      const InputNormalizer& norm) {
  PreparedSplit out;
  out.storage.reserve(idx.size());
  for (std::size_t i : idx) out.storage.push_back(norm.apply(dataset.features[i]));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Sample s;
    for (const auto& v : out.storage[k]) s.inputs.emplace_back(v);
    s.label = static_cast<int>(dataset.items[idx[k]].label.value);
    out.samples.push_back(std::move(s));
  }
  return out;
}

double mean_loss(const nn::Network& network, std::span<const double> params, std::span<const Sample> samples,
                 const std::array<double, 2>& alpha, double gamma, nn::Workspace& ws) {
  double total = 0.0;
  for (const Sample& s : samples) {
    const auto logits = network.forward(params, s.inputs, ws);
    const auto q = softmax2(logits);
    total += focal_loss(q, s.label, alpha[static_cast<std::size_t>(s.label)], gamma);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

TrainedIntrospector train(const ArchConfig& arch, const ErrorDataset& dataset, const TrainConfig& config) {
  config.validate();
  const auto train_idx = dataset.indices(Split::kTrain);
  const auto val_idx = dataset.indices(Split::kVal);
  if (train_idx.empty() || val_idx.empty()) throw InputError("dataset needs non-empty train and val splits");
  const auto train_labels = dataset.labels(Split::kTrain);
  const ClassWeights weights = class_weights(train_labels);
  if (weights.missing_class) throw InputError("degenerate dataset: the train split holds a single label");

  const Feature& sample_feature = dataset.features.at(train_idx[0]);
  check_compatible(arch.kind, sample_feature.is_vector());
  const auto shapes = feature_input_shapes(sample_feature);
  const nn::Network network = build_network(arch, shapes);

  TrainedIntrospector model;
  model.arch = arch;
  model.train = config;
  model.representation = dataset.representation.kind;
  model.feature_signature = sample_feature.shape_signature();
  model.alpha = weights.weight;
  model.dataset_hash = dataset.content_hash();
  model.manifest_id = dataset.manifest_id;

  std::vector<const Feature*> train_features;
  for (std::size_t i : train_idx) train_features.push_back(&dataset.features[i]);
  model.normalizer = InputNormalizer::fit(train_features);

  const PreparedSplit train_set = prepare(dataset, train_idx, model.normalizer);
  const PreparedSplit val_set = prepare(dataset, val_idx, model.normalizer);

  std::vector<double> params(network.param_count());
  network.init(params, arch.init_seed);
  std::vector<double> velocity(config.momentum > 0.0 ? params.size() : 0, 0.0);
  nn::Workspace ws = network.make_workspace();

  model.initial_val_loss = mean_loss(network, params, val_set.samples, model.alpha, config.gamma, ws);
  double best = model.initial_val_loss;
  std::size_t best_epoch = 0;
  std::vector<double> best_params = params;

  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(train_set.samples[order[k]]);
      const StepResult step = sgd_step(network, params, velocity, batch, model.alpha, config, ws);
      train_loss += step.loss * static_cast<double>(end - start);
    }
    train_loss /= static_cast<double>(order.size());
    const double val_loss = mean_loss(network, params, val_set.samples, model.alpha, config.gamma, ws);
    model.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < best) {
      best = val_loss;
      best_epoch = epoch;
      best_params = params;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }

  model.best_val_loss = best;
  model.best_epoch = best_epoch;
  model.weights.assign(best_params.begin(), best_params.end());
  return model;
}

// --- Model files -----------------------------------------------------------------

namespace {

constexpr const char* kModelMagic = "introspector-model 1";

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt_double(static_cast<double>(values[i]));
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

}  // namespace

void save_model(const TrainedIntrospector& m, const fs::path& path) {
  std::ostringstream h;
  h.imbue(std::locale::classic());
  h << kModelMagic << '\n';
  h << "arch " << to_string(m.arch.kind) << '\n';
  h << "hidden " << join(m.arch.hidden) << '\n';
  h << "conv_widths " << m.arch.conv_widths[0] << ' ' << m.arch.conv_widths[1] << '\n';
  h << "cascade_widths " << m.arch.cascade_branch_width << ' ' << m.arch.cascade_trunk_width << '\n';
  h << "dense " << m.arch.dense << '\n';
  h << "init_seed " << m.arch.init_seed << '\n';
  h << "representation " << to_string(m.representation) << '\n';
  h << "feature_shape " << m.feature_signature << '\n';
  h << "batch_size " << m.train.batch_size << '\n';
  h << "learning_rate " << fmt_double(m.train.learning_rate) << '\n';
  h << "gamma " << fmt_double(m.train.gamma) << '\n';
  h << "max_epochs " << m.train.max_epochs << '\n';
  h << "patience " << m.train.patience << '\n';
  h << "momentum " << fmt_double(m.train.momentum) << '\n';
  h << "shuffle_seed " << m.train.shuffle_seed << '\n';
  h << "alpha " << fmt_double(m.alpha[0]) << ' ' << fmt_double(m.alpha[1]) << '\n';
  h << "initial_val_loss " << fmt_double(m.initial_val_loss) << '\n';
  h << "best_val_loss " << fmt_double(m.best_val_loss) << '\n';
  h << "best_epoch " << m.best_epoch << '\n';
  h << "epochs_run " << m.history.size() << '\n';
  h << "dataset_hash " << m.dataset_hash << '\n';
  h << "manifest_id " << m.manifest_id << '\n';
  h << "norm_shift " << join(m.normalizer.shift) << '\n';
  h << "norm_scale " << join(m.normalizer.scale) << '\n';
  h << "weights " << m.weights.size() << '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string header = h.str();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (float w : m.weights) {
    if (!std::isfinite(w)) throw NumericalError("refusing to save non-finite weights");
    const auto bits = std::bit_cast<std::uint32_t>(w);
    const char le[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                        static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(le, 4);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

TrainedIntrospector load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) throw FormatError(path.string() + ": not a model file");
  TrainedIntrospector m;
  std::size_t weight_count = 0;
  bool have_weights = false;
  std::size_t epochs_run = 0;
  while (!have_weights && std::getline(in, line)) {
    std::istringstream fields(line);
    fields.imbue(std::locale::classic());
    std::string key;
    fields >> key;
    auto read_floats = [&](std::vector<float>& out) {
      double v;
      while (fields >> v) out.push_back(static_cast<float>(v));
    };
    if (key == "arch") {
      std::string v;
      fields >> v;
      m.arch.kind = parse_arch(v);
    } else if (key == "hidden") {
      m.arch.hidden.clear();
      std::uint32_t v;
      while (fields >> v) m.arch.hidden.push_back(v);
    } else if (key == "conv_widths") {
      fields >> m.arch.conv_widths[0] >> m.arch.conv_widths[1];
    } else if (key == "cascade_widths") {
      fields >> m.arch.cascade_branch_width >> m.arch.cascade_trunk_width;
    } else if (key == "dense") {
      fields >> m.arch.dense;
    } else if (key == "init_seed") {
      fields >> m.arch.init_seed;
    } else if (key == "representation") {
      std::string v;
      fields >> v;
      m.representation = parse_representation(v);
    } else if (key == "feature_shape") {
      fields >> m.feature_signature;
    } else if (key == "batch_size") {
      fields >> m.train.batch_size;
    } else if (key == "learning_rate") {
      fields >> m.train.learning_rate;
    } else if (key == "gamma") {
      fields >> m.train.gamma;
    } else if (key == "max_epochs") {
      fields >> m.train.max_epochs;
    } else if (key == "patience") {
      fields >> m.train.patience;
    } else if (key == "momentum") {
      fields >> m.train.momentum;
    } else if (key == "shuffle_seed") {
      fields >> m.train.shuffle_seed;
    } else if (key == "alpha") {
      fields >> m.alpha[0] >> m.alpha[1];
    } else if (key == "initial_val_loss") {
      fields >> m.initial_val_loss;
    } else if (key == "best_val_loss") {
      fields >> m.best_val_loss;
    } else if (key == "best_epoch") {
      fields >> m.best_epoch;
    } else if (key == "epochs_run") {
      fields >> epochs_run;
    } else if (key == "dataset_hash") {
      fields >> m.dataset_hash;
    } else if (key == "manifest_id") {
      fields >> m.manifest_id;
    } else if (key == "norm_shift") {
      read_floats(m.normalizer.shift);
    } else if (key == "norm_scale") {
      read_floats(m.normalizer.scale);
    } else if (key == "weights") {
      fields >> weight_count;
      have_weights = true;
    } else {
      throw FormatError(path.string() + ": unknown header key '" + key + "'");
    }
  }
  if (!have_weights) throw FormatError(path.string() + ": missing weight block");
  std::string block(weight_count * 4, '\0');
  in.read(block.data(), static_cast<std::streamsize>(block.size()));
  if (static_cast<std::size_t>(in.gcount()) != block.size()) {
    throw FormatError(path.string() + ": truncated weight block");
  }
  m.weights.resize(weight_count);
  for (std::size_t i = 0; i < weight_count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(block[4 * i + b]);
    m.weights[i] = std::bit_cast<float>(bits);
  }
  // Epoch history lives in its own file; keep only the count here.
  m.history.resize(epochs_run);
  for (std::size_t e = 0; e < epochs_run; ++e) m.history[e].epoch = e + 1;
  return m;
}

void save_history(const TrainedIntrospector& model, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : model.history) {
    out << nlohmann::json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}}.dump()
        << '\n';
  }
}

// --- Inference -------------------------------------------------------------------

Introspector::Introspector(const TrainedIntrospector& model) : model_(model) {
  const auto shapes = parse_feature_signature(model_.feature_signature);
  network_ = std::make_unique<nn::Network>(build_network(model_.arch, shapes));
  if (network_->param_count() != model_.weights.size()) {
    throw ShapeMismatch("model holds " + std::to_string(model_.weights.size()) + " weights, architecture needs " +
                        std::to_string(network_->param_count()));
  }
  params_.assign(model_.weights.begin(), model_.weights.end());
  ws_ = network_->make_workspace();
}

std::array<double, 2> Introspector::forward(const Feature& feature) const {
  if (feature.shape_signature() != model_.feature_signature) {
    throw ShapeMismatch("feature shape " + feature.shape_signature() + " does not match model input " +
                        model_.feature_signature);
  }
  const auto inputs = model_.normalizer.apply(feature);
  std::vector<std::span<const double>> spans(inputs.begin(), inputs.end());
  const auto logits = network_->forward(params_, spans, ws_);
  return softmax2(logits);
}

// --- Grid search -----------------------------------------------------------------

GridSpec GridSpec::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file " + path.string());
  GridSpec g;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  auto split_list = [&](std::string v) {
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<std::string> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) out.push_back(trim(item));
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "batch_size") {
        g.batch_sizes.clear();
        for (const auto& v : split_list(value)) g.batch_sizes.push_back(std::stoul(v));
      } else if (key == "learning_rate") {
        g.learning_rates.clear();
        for (const auto& v : split_list(value)) g.learning_rates.push_back(std::stod(v));
      } else if (key == "gamma") {
        g.gammas.clear();
        for (const auto& v : split_list(value)) g.gammas.push_back(std::stod(v));
      } else if (key == "max_epochs") {
        g.base.max_epochs = std::stoul(value);
      } else if (key == "patience") {
        g.base.patience = std::stoul(value);
      } else if (key == "momentum") {
        g.base.momentum = std::stod(value);
      } else if (key == "seed") {
        g.base.shuffle_seed = std::stoull(value);
      } else {
        throw FormatError("unknown key '" + key + "'");
      }
    } catch (const std::logic_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  return g;
}

std::vector<TrainConfig> GridSpec::combinations() const {
  std::vector<TrainConfig> out;
  for (std::size_t b : batch_sizes) {
    for (double lr : learning_rates) {
      for (double gamma : gammas) {
        TrainConfig c = base;
        c.batch_size = b;
        c.learning_rate = lr;
        c.gamma = gamma;
        out.push_back(c);
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const TrainConfig& a, const TrainConfig& b) {
    return std::tie(a.batch_size, a.learning_rate, a.gamma) < std::tie(b.batch_size, b.learning_rate, b.gamma);
  });
  return out;
}

std::string combination_hash(const ArchConfig& arch, std::string_view dataset_hash, const TrainConfig& config) {
  return short_hash(arch.canonical() + "|" + std::string(dataset_hash) + "|" + config.canonical());
}

std::size_t select_best(std::span<const LeaderboardRow> rows) {
  if (rows.empty()) throw InputError("empty leaderboard");
  auto better = [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.selection_loss != b.selection_loss) return a.selection_loss < b.selection_loss;
    const double aa = a.val_auroc.value_or(-1.0);
    const double ba = b.val_auroc.value_or(-1.0);
    if (aa != ba) return aa > ba;
    return std::tie(a.config.batch_size, a.config.learning_rate, a.config.gamma) <
           std::tie(b.config.batch_size, b.config.learning_rate, b.config.gamma);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (better(rows[i], rows[best])) best = i;
  }
  return best;
}

GridResult grid_search(const ArchConfig& arch, const ErrorDataset& dataset, const GridSpec& grid,
                       const GridOptions& options) {
  const auto combos = grid.combinations();
  if (combos.empty()) throw InputError("empty hyperparameter grid");
  const std::string dataset_hash = dataset.content_hash();
  const auto val_idx = dataset.indices(Split::kVal);
  if (!options.cache_dir.empty()) fs::create_directories(options.cache_dir);

  std::vector<LeaderboardRow> rows(combos.size());
  std::vector<std::optional<TrainedIntrospector>> models(combos.size());

  auto run = [&](std::size_t i) {
    LeaderboardRow& row = rows[i];
    row.config = combos[i];
    row.hash = combination_hash(arch, dataset_hash, combos[i]);
    const fs::path cached = options.cache_dir.empty() ? fs::path() : options.cache_dir / (row.hash + ".model");
    TrainedIntrospector model;
    if (!cached.empty() && fs::exists(cached)) {
      model = load_model(cached);
      row.reused = true;
    } else {
      model = train(arch, dataset, combos[i]);
      if (!cached.empty()) {
        save_model(model, cached);
        save_history(model, options.cache_dir / (row.hash + ".history.jsonl"));
      }
    }
    row.best_val_loss = model.best_val_loss;
    row.best_epoch = model.best_epoch;
    row.epochs_run = model.history.size();

    const Introspector predictor(model);
    std::vector<double> scores;
    std::vector<int> labels;
    double ce = 0.0;
    for (std::size_t idx : val_idx) {
      const auto q = predictor.forward(dataset.features[idx]);
      const int y = static_cast<int>(dataset.items[idx].label.value);
      scores.push_back(q[1]);
      labels.push_back(y);
      ce += focal_loss(q, y, model.alpha[static_cast<std::size_t>(y)], 0.0);
    }
    row.selection_loss = val_idx.empty() ? 0.0 : ce / static_cast<double>(val_idx.size());
    row.val_auroc = auroc(scores, labels);
    models[i] = std::move(model);
  };

  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(combos.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < combos.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (unsigned t = 0; t < jobs; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < combos.size(); i = next++) {
          try {
            run(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }

  const std::size_t best = select_best(rows);
  rows[best].selected = true;
  return {std::move(*models[best]), std::move(rows)};
}

void write_leaderboard(std::span<const LeaderboardRow> rows, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "batch_size,learning_rate,gamma,best_val_loss,selection_loss,val_auroc,best_epoch,epochs_run,hash,selected\n";
  for (const auto& r : rows) {
    out << r.config.batch_size << ',' << fmt_double(r.config.learning_rate) << ',' << fmt_double(r.config.gamma)
        << ',' << fmt_double(r.best_val_loss) << ',' << fmt_double(r.selection_loss) << ','
        << (r.val_auroc ? fmt_double(*r.val_auroc) : std::string("undefined")) << ',' << r.best_epoch << ','
        << r.epochs_run << ',' << r.hash << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace introspect
