// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <locale>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "introspect/errors.hpp"

namespace introspect {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l == 1 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1 .. j+1 share their mean.
    const double avg = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += avg;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

ConfusionCounts confusion(std::span<const int> labels, std::span<const double> scores, double threshold) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn) += 1;
    } else {
      (predicted ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

std::array<double, 2> f1_per_class(const ConfusionCounts& c) {
  auto f1 = [](double tp, double fp, double fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0.0 ? 2.0 * tp / denom : 0.0;
  };
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  // For the no-error class the roles of the cells swap.
  return {f1(d(c.tn), d(c.fn), d(c.fp)), f1(d(c.tp), d(c.fp), d(c.fn))};
}

double f1_macro(const ConfusionCounts& counts) {
  const auto f = f1_per_class(counts);
  return 0.5 * (f[0] + f[1]);
}

std::optional<double> fnr(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.fn) / static_cast<double>(c.tp + c.fn);
}

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string fixed(const std::optional<double>& v, int digits = 4) {
  if (!v) return "undefined";
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::fixed << std::setprecision(digits) << *v;
  return out.str();
}

std::string exact(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::string MetricsReport::to_json_line() const {
  ordered_json j;
  j["split"] = split;
  j["representation"] = representation;
  j["auroc"] = opt(auroc);
  j["f1_macro"] = f1_macro;
  j["f1_no_error"] = f1_per_class[0];
  j["f1_error"] = f1_per_class[1];
  j["fnr"] = opt(fnr);
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["tn"] = counts.tn;
  j["fn"] = counts.fn;
  j["n_no_error"] = n_per_label[0];
  j["n_error"] = n_per_label[1];
  j["model_dataset"] = model_dataset;
  j["model_manifest"] = model_manifest;
  j["eval_dataset"] = eval_dataset;
  j["eval_manifest"] = eval_manifest;
  return j.dump();
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << "representation " << representation << ", split " << split << "\n";
  out << "  samples    " << counts.total() << " (no_error " << n_per_label[0] << ", error " << n_per_label[1]
      << ")\n";
  out << "  auroc      " << fixed(auroc) << "\n";
  out << "  f1_macro   " << fixed(f1_macro) << " (no_error " << fixed(f1_per_class[0]) << ", error "
      << fixed(f1_per_class[1]) << ")\n";
  out << "  fnr        " << fixed(fnr) << "\n";
  out << "  confusion  tp " << counts.tp << " fp " << counts.fp << " tn " << counts.tn << " fn " << counts.fn
      << "\n";
  out << "  trained on " << model_dataset << " (manifest " << model_manifest << ")\n";
  out << "  evaluated  " << eval_dataset << " (manifest " << eval_manifest << ")\n";
  return out.str();
}

MetricsReport evaluate(const Introspector& model, const ErrorDataset& dataset, Split split) {
  const auto idx = dataset.indices(split);
  if (idx.empty()) throw InputError(std::string("dataset has no ") + std::string(to_string(split)) + " items");
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(idx.size());
  labels.reserve(idx.size());
  for (std::size_t i : idx) {
    scores.push_back(model.error_score(dataset.features.at(i)));
    labels.push_back(static_cast<int>(dataset.items[i].label.value));
  }
  MetricsReport r;
  r.auroc = auroc(scores, labels);
  r.counts = confusion(labels, scores);
  r.f1_per_class = f1_per_class(r.counts);
  r.f1_macro = 0.5 * (r.f1_per_class[0] + r.f1_per_class[1]);
  r.fnr = fnr(r.counts);
  r.n_per_label = {r.counts.tn + r.counts.fp, r.counts.tp + r.counts.fn};
  r.split = std::string(to_string(split));
  r.representation = dataset.representation.canonical();
  r.model_dataset = model.model().dataset_hash;
  r.model_manifest = model.model().manifest_id;
  r.eval_dataset = dataset.content_hash();
  r.eval_manifest = dataset.manifest_id;
  if (!r.auroc) spdlog::warn("auroc undefined on {}: only one label present", r.split);
  return r;
}

MetricsReport cross_evaluate(const Introspector& model, const ErrorDataset& dataset, Split split) {
  const auto& m = model.model();
  if (dataset.representation.kind != m.representation) {
    throw ShapeMismatch("model expects representation " + std::string(to_string(m.representation)) +
                        ", dataset holds " + std::string(to_string(dataset.representation.kind)));
  }
  if (dataset.feature_signature != m.feature_signature) {
    throw ShapeMismatch("model expects feature shape " + m.feature_signature + ", dataset holds " +
                        dataset.feature_signature);
  }
  return evaluate(model, dataset, split);
}

std::string reports_table(std::span<const MetricsReport> reports, std::span<const std::string> names) {
  std::size_t width = 4;
  for (const auto& n : names) width = std::max(width, n.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "name"
      << "  auroc     f1_macro  fnr       n\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out << std::left << std::setw(static_cast<int>(width)) << (i < names.size() ? names[i] : "") << "  "
        << std::setw(10) << fixed(r.auroc) << std::setw(10) << fixed(r.f1_macro) << std::setw(10)
        << fixed(r.fnr) << r.counts.total() << "\n";
  }
  return out.str();
}

std::vector<SweepRow> threshold_sweep(const ErrorDataset& dataset, std::span<const double> taus,
                                      const ArchConfig& arch, const TrainConfig& config) {
  std::vector<SweepRow> rows;
  for (double tau : taus) {
    const ErrorDataset d = relabel(dataset, tau);
    SweepRow row;
    row.tau = tau;
    row.n_total = d.items.size();
    for (const auto& item : d.items) {
      row.labels.push_back(item.label);
      row.n_error += item.label.value == ErrorLabelValue::kError ? 1 : 0;
    }
    row.prevalence = row.n_total ? static_cast<double>(row.n_error) / static_cast<double>(row.n_total) : 0.0;
    row.weights = class_weights(d.labels(Split::kTrain));
    if (row.weights.missing_class) {
      spdlog::warn("tau {}: train split holds a single label, skipping training", tau);
      row.report.split = "test";
      row.report.representation = d.representation.canonical();
    } else {
      const Introspector model(train(arch, d, config));
      row.report = evaluate(model, d, Split::kTest);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "tau,n_total,n_error,prevalence,weight_no_error,weight_error,auroc,f1_macro,fnr,tp,fp,tn,fn\n";
  for (const auto& r : rows) {
    const auto& c = r.report.counts;
    out << exact(r.tau) << ',' << r.n_total << ',' << r.n_error << ',' << exact(r.prevalence) << ','
        << exact(r.weights.weight[0]) << ',' << exact(r.weights.weight[1]) << ','
        << (r.report.auroc ? exact(*r.report.auroc) : "undefined") << ',' << exact(r.report.f1_macro) << ','
        << (r.report.fnr ? exact(*r.report.fnr) : "undefined") << ',' << c.tp << ',' << c.fp << ',' << c.tn
        << ',' << c.fn << '\n';
  }
}

ProfileResult profile_representation(const RepresentationConfig& config, std::span<const FrameInputs> frames,
                                     std::size_t repetitions, const fs::path& cache_dir) {
  if (frames.empty()) throw InputError("nothing to profile");
  if (repetitions == 0) throw InputError("repetitions must be positive");
  config.validate();

  // Consume every result so the extraction cannot be optimised away.
  volatile std::size_t sink = 0;
  auto pass = [&] {
    for (const auto& f : frames) {
      const Feature feature = extract(config, f);
      sink = sink + (feature.is_vector() ? feature.vector().size() : feature.maps().size());
    }
  };
  for (std::size_t i = 0; i < kProfileWarmups; ++i) pass();

  std::vector<double> per_frame;
  per_frame.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    pass();
    const auto t1 = std::chrono::steady_clock::now();
    per_frame.push_back(std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(frames.size()));
  }
  std::sort(per_frame.begin(), per_frame.end());
  const std::size_t mid = per_frame.size() / 2;
  const double median = per_frame.size() % 2 ? per_frame[mid] : 0.5 * (per_frame[mid - 1] + per_frame[mid]);

  ProfileResult result;
  result.kind = config.kind;
  result.config = config.canonical();
  result.frames = frames.size();
  result.repetitions = repetitions;
  result.median_seconds = median;

  const Feature first = extract(config, frames[0]);
  const fs::path dir = cache_dir / config.hash();
  fs::create_directories(dir);
  std::vector<ActivationMap> maps;
  if (first.is_vector()) {
    const auto& v = first.vector();
    maps.emplace_back(1, 1, static_cast<std::uint32_t>(v.size()), v);
  } else {
    maps = first.maps();
  }
  for (std::size_t l = 0; l < maps.size(); ++l) {
    const fs::path p = dir / (first.frame_id + "_l" + std::to_string(l) + ".amf");
    write_activation_map(maps[l], p);
    result.feature_bytes += static_cast<std::size_t>(fs::file_size(p));
  }
  return result;
}

std::string profile_table(std::span<const ProfileResult> results) {
  std::size_t width = 6;
  for (const auto& r : results) width = std::max(width, r.config.size());
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::left << std::setw(static_cast<int>(width)) << "config"
      << "  median_us_per_frame  feature_bytes  frames  reps\n";
  for (const auto& r : results) {
    std::ostringstream us;
    us.imbue(std::locale::classic());
    us << std::fixed << std::setprecision(3) << r.median_seconds * 1e6;
    out << std::left << std::setw(static_cast<int>(width)) << r.config << "  " << std::setw(21) << us.str()
        << std::setw(15) << r.feature_bytes << std::setw(8) << r.frames << r.repetitions << "\n";
  }
  return out.str();
}

}  // namespace introspect
