// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// Minimal CPU network: a set of input branches whose outputs are concatenated
// along channels and fed to a trunk. Parameters live in one flat buffer owned
// by the caller; layers are stateless.

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace introspect::nn {

struct Shape3 {
  std::uint32_t c = 1;
  std::uint32_t h = 1;
  std::uint32_t w = 1;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Shape3 input_shape() const = 0;
  virtual Shape3 output_shape() const = 0;
  virtual std::size_t param_count() const { return 0; }
  virtual void init(std::span<double> /*params*/, std::mt19937_64& /*rng*/) const {}

  virtual void forward(std::span<const double> params, std::span<const double> in,
                       std::span<double> out) const = 0;
  // Accumulates into grad_params; overwrites grad_in unless it is empty.
  virtual void backward(std::span<const double> params, std::span<const double> in,
                        std::span<const double> out, std::span<const double> grad_out,
                        std::span<double> grad_params, std::span<double> grad_in) const = 0;

  virtual std::string describe() const = 0;
};

// Glorot-uniform weights, zero bias.
class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);
  Shape3 input_shape() const override;
  Shape3 output_shape() const override;
  std::size_t param_count() const override;
  void init(std::span<double> params, std::mt19937_64& rng) const override;
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> grad_out,
                std::span<double> grad_params, std::span<double> grad_in) const override;
  std::string describe() const override;

 private:
  std::size_t in_;
  std::size_t out_;
};

// 3x3 convolution, zero padding 1. Output side is (side - 1) / stride + 1.
class Conv3x3 final : public Layer {
 public:
  Conv3x3(Shape3 input, std::uint32_t out_channels, std::uint32_t stride = 1);
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_; }
  std::size_t param_count() const override;
  void init(std::span<double> params, std::mt19937_64& rng) const override;
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> grad_out,
                std::span<double> grad_params, std::span<double> grad_in) const override;
  std::string describe() const override;

 private:
  void forward_strided(std::span<const double> params, std::span<const double> in,
                       std::span<double> out) const;
  void backward_strided(std::span<const double> params, std::span<const double> in,
                        std::span<const double> grad_out, std::span<double> grad_params,
                        std::span<double> grad_in) const;

  Shape3 in_;
  Shape3 out_;
  std::uint32_t stride_;
};

class Relu final : public Layer {
 public:
  explicit Relu(Shape3 shape) : shape_(shape) {}
  Shape3 input_shape() const override { return shape_; }
  Shape3 output_shape() const override { return shape_; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> grad_out,
                std::span<double> grad_params, std::span<double> grad_in) const override;
  std::string describe() const override { return "relu"; }

 private:
  Shape3 shape_;
};

// 2x2 window, stride 2, odd trailing row/column dropped.
class MaxPool2 final : public Layer {
 public:
  explicit MaxPool2(Shape3 input);
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> grad_out,
                std::span<double> grad_params, std::span<double> grad_in) const override;
  std::string describe() const override { return "maxpool2"; }

 private:
  Shape3 in_;
  Shape3 out_;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(Shape3 input) : in_(input) {}
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return {in_.c, 1, 1}; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> grad_out,
                std::span<double> grad_params, std::span<double> grad_in) const override;
  std::string describe() const override { return "gap"; }

 private:
  Shape3 in_;
};

using LayerStack = std::vector<std::unique_ptr<Layer>>;

// Scratch buffers for one forward/backward pass; one per thread.
struct Workspace {
  std::vector<std::vector<std::vector<double>>> branch_acts;
  std::vector<std::vector<std::vector<double>>> branch_grads;
  std::vector<double> concat;
  std::vector<double> concat_grad;
  std::vector<std::vector<double>> trunk_acts;
  std::vector<std::vector<double>> trunk_grads;
};

class Network {
 public:
  // Branch outputs must share h and w; with no trunk there must be exactly
  // one branch. The final output is the network's logit vector.
  Network(std::vector<LayerStack> branches, LayerStack trunk);

  std::size_t param_count() const { return param_count_; }
  std::size_t input_count() const { return branches_.size(); }
  Shape3 input_shape(std::size_t branch) const;
  std::size_t output_size() const;

  void init(std::span<double> params, std::uint64_t seed) const;
  Workspace make_workspace() const;

  // `inputs` has one span per branch. Returns the output buffer inside `ws`.
  std::span<const double> forward(std::span<const double> params,
                                  std::span<const std::span<const double>> inputs,
                                  Workspace& ws) const;
  // Backpropagates `grad_output` through the pass last run on `ws`,
  // accumulating into grad_params. Input gradients are not produced.
  void backward(std::span<const double> params, std::span<const std::span<const double>> inputs,
                std::span<const double> grad_output, std::span<double> grad_params,
                Workspace& ws) const;

  std::string describe() const;

 private:
  std::vector<LayerStack> branches_;
  LayerStack trunk_;
  std::vector<std::vector<std::size_t>> branch_offsets_;
  std::vector<std::size_t> trunk_offsets_;
  std::size_t param_count_ = 0;
};

}  // namespace introspect::nn
