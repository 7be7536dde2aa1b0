// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// The introspection classifier: architectures, focal loss, SGD training with
// early stopping, and hyperparameter grid search.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "introspect/dataset.hpp"
#include "introspect/nn.hpp"
#include "introspect/representations.hpp"

namespace introspect {

inline constexpr double kProbabilityEpsilon = 1e-7;

// -alpha * (1 - q_y)^gamma * ln(q_y), q_y clamped to [eps, 1 - eps].
double focal_loss(std::span<const double> probs, int true_class, double alpha, double gamma);

struct FocalLossResult {
  double loss = 0.0;
  std::array<double, 2> grad_logits{0.0, 0.0};
};

// Loss of softmax(logits) and its gradient with respect to the logits.
FocalLossResult focal_loss_from_logits(std::span<const double> logits, int true_class, double alpha,
                                       double gamma);

std::array<double, 2> softmax2(std::span<const double> logits);

enum class ArchKind { kMlp, kSmallConv, kCascade };

std::string_view to_string(ArchKind kind);
ArchKind parse_arch(std::string_view text);
ArchKind default_arch(RepresentationKind kind);

struct ArchConfig {
  ArchKind kind = ArchKind::kMlp;
  // mlp hidden layers.
  std::vector<std::uint32_t> hidden{64, 32};
  // smallconv: two conv widths.
  std::array<std::uint32_t, 2> conv_widths{8, 16};
  // cascade: per-layer conv width, then trunk conv width.
  std::uint32_t cascade_branch_width = 4;
  std::uint32_t cascade_trunk_width = 8;
  // Hidden dense width before the 2 logits (smallconv, cascade).
  std::uint32_t dense = 32;
  std::uint64_t init_seed = 0;

  std::string canonical() const;
};

// Input shapes of a feature: one flat shape for vectors, one per map otherwise.
std::vector<nn::Shape3> feature_input_shapes(const Feature& feature);
std::vector<nn::Shape3> parse_feature_signature(std::string_view signature);

// Throws ShapeMismatch when the arch cannot consume the inputs.
nn::Network build_network(const ArchConfig& arch, std::span<const nn::Shape3> inputs);

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double gamma = 0.0;
  std::size_t max_epochs = 600;
  std::size_t patience = 25;
  double momentum = 0.0;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
  std::string canonical() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Per-input affine standardisation fitted on the train split: z-scores per
// dimension for vectors, a per-map RMS scale (zeros stay zero) for maps.
struct InputNormalizer {
  std::vector<float> shift;
  std::vector<float> scale;

  static InputNormalizer fit(std::span<const Feature* const> features);
  // Flattens and normalises each network input.
  std::vector<std::vector<double>> apply(const Feature& feature) const;
};

struct TrainedIntrospector {
  ArchConfig arch;
  TrainConfig train;
  RepresentationKind representation = RepresentationKind::kLfr;
  std::string feature_signature;
  std::array<double, 2> alpha{1.0, 1.0};
  InputNormalizer normalizer;
  std::vector<float> weights;
  std::vector<EpochRecord> history;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::string dataset_hash;
  std::string manifest_id;
};

// Model file: text header ending with "weights <n>\n", then n little-endian
// float32 values.
void save_model(const TrainedIntrospector& model, const std::filesystem::path& path);
TrainedIntrospector load_model(const std::filesystem::path& path);
// One JSON object per epoch.
void save_history(const TrainedIntrospector& model, const std::filesystem::path& path);

// Inference wrapper around a trained model.
class Introspector {
 public:
  explicit Introspector(const TrainedIntrospector& model);

  // [p_no_error, p_error]; throws ShapeMismatch for incompatible features.
  std::array<double, 2> forward(const Feature& feature) const;
  double error_score(const Feature& feature) const { return forward(feature)[1]; }

  const TrainedIntrospector& model() const { return model_; }

 private:
  TrainedIntrospector model_;
  std::unique_ptr<nn::Network> network_;
  std::vector<double> params_;
  mutable nn::Workspace ws_;
};

// One normalised training example; spans point into caller-owned buffers.
struct Sample {
  std::vector<std::span<const double>> inputs;  // one per network branch
  int label = 0;
};

struct StepResult {
  double loss = 0.0;  // mean loss before the update
};

// Mean focal loss gradient over the batch, then params -= lr * grad (with
// optional momentum through `velocity`). Throws NumericalError on a
// non-finite gradient.
StepResult sgd_step(const nn::Network& network, std::span<double> params, std::span<double> velocity,
                    std::span<const Sample> batch, const std::array<double, 2>& alpha, const TrainConfig& config,
                    nn::Workspace& ws);

// Mean focal loss and its gradient (not averaged away; same scale as the loss).
double batch_loss_and_gradient(const nn::Network& network, std::span<const double> params,
                               std::span<const Sample> batch, const std::array<double, 2>& alpha, double gamma,
                               std::span<double> grad, nn::Workspace& ws);

// Trains on the train split, early-stopping on val loss, and returns the
// best-val-epoch weights. Alpha comes from the class weights of the train split.
TrainedIntrospector train(const ArchConfig& arch, const ErrorDataset& dataset, const TrainConfig& config);

struct GridSpec {
  std::vector<std::size_t> batch_sizes{16, 32, 64, 128};
  std::vector<double> learning_rates{0.001, 0.005, 0.01};
  std::vector<double> gammas{0, 2, 4, 5};
  // Shared by every combination.
  TrainConfig base;

  // key=value lines: batch_size, learning_rate, gamma (comma lists, optionally
  // in brackets),
  // max_epochs, patience, momentum, seed.
  static GridSpec from_file(const std::filesystem::path& path);
  std::vector<TrainConfig> combinations() const;
};

struct LeaderboardRow {
  TrainConfig config;
  std::string hash;
  double best_val_loss = 0.0;
  // Class-weighted cross-entropy on val; comparable across gamma values.
  double selection_loss = 0.0;
  std::optional<double> val_auroc;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool reused = false;
  bool selected = false;
};

struct GridResult {
  TrainedIntrospector best;
  std::vector<LeaderboardRow> leaderboard;
};

struct GridOptions {
  // When set, each combination's model is stored as <cache_dir>/<hash>.model
  // and reloaded instead of retrained on a rerun.
  std::filesystem::path cache_dir;
  unsigned jobs = 1;
};

// Lowest selection loss wins; ties go to higher val AUROC, then to the
// earlier combination in (batch_size, learning_rate, gamma) order.
GridResult grid_search(const ArchConfig& arch, const ErrorDataset& dataset, const GridSpec& grid,
                       const GridOptions& options = {});

// Index of the winning row under the rule above.
std::size_t select_best(std::span<const LeaderboardRow> rows);

std::string combination_hash(const ArchConfig& arch, std::string_view dataset_hash,
                             const TrainConfig& config);

void write_leaderboard(std::span<const LeaderboardRow> rows, const std::filesystem::path& path);

}  // namespace introspect
