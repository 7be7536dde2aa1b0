// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "introspect/errors.hpp"

namespace introspect::nn {
namespace {

void glorot_uniform(std::span<double> weights, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& w : weights) w = dist(rng);
}

}  // namespace

// --- Dense -------------------------------------------------------------------

Dense::Dense(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
  if (in_ == 0 || out_ == 0) throw ShapeMismatch("dense layer needs positive sizes");
}

Shape3 Dense::input_shape() const { return {static_cast<std::uint32_t>(in_), 1, 1}; }
Shape3 Dense::output_shape() const { return {static_cast<std::uint32_t>(out_), 1, 1}; }
std::size_t Dense::param_count() const { return in_ * out_ + out_; }

void Dense::init(std::span<double> params, std::mt19937_64& rng) const {
  glorot_uniform(params.first(in_ * out_), static_cast<double>(in_), static_cast<double>(out_), rng);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(in_ * out_), params.end(), 0.0);
}

void Dense::forward(std::span<const double> params, std::span<const double> in,
                    std::span<double> out) const {
  const double* w = params.data();
  const double* b = params.data() + in_ * out_;
  for (std::size_t o = 0; o < out_; ++o) {
    const double* row = w + o * in_;
    double acc = b[o];
    for (std::size_t i = 0; i < in_; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void Dense::backward(std::span<const double> params, std::span<const double> in,
                     std::span<const double>, std::span<const double> grad_out,
                     std::span<double> grad_params, std::span<double> grad_in) const {
  const double* w = params.data();
  double* gw = grad_params.data();
  double* gb = grad_params.data() + in_ * out_;
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t o = 0; o < out_; ++o) {
    const double g = grad_out[o];
    gb[o] += g;
    if (g == 0.0) continue;
    double* grow = gw + o * in_;
    for (std::size_t i = 0; i < in_; ++i) grow[i] += g * in[i];
    if (!grad_in.empty()) {
      const double* row = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) grad_in[i] += g * row[i];
    }
  }
}

std::string Dense::describe() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

// --- Conv3x3 -----------------------------------------------------------------

Conv3x3::Conv3x3(Shape3 input, std::uint32_t out_channels, std::uint32_t stride)
    : in_(input), stride_(stride) {
  if (stride == 0 || out_channels == 0 || input.size() == 0) {
    throw ShapeMismatch("conv3x3 needs positive channels and stride");
  }
  out_ = {out_channels, (input.h - 1) / stride + 1, (input.w - 1) / stride + 1};
}

std::size_t Conv3x3::param_count() const {
  return static_cast<std::size_t>(out_.c) * in_.c * 9 + out_.c;
}

void Conv3x3::init(std::span<double> params, std::mt19937_64& rng) const {
  const std::size_t nw = static_cast<std::size_t>(out_.c) * in_.c * 9;
  glorot_uniform(params.first(nw), in_.c * 9.0, out_.c * 9.0, rng);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(nw), params.end(), 0.0);
}

namespace {

// Patch matrix with rows (ci, ky, kx) and one column per output position;
// taps falling in the zero padding are 0.
void im2col(const double* x, Shape3 in, Shape3 out, int stride, std::vector<double>& col) {
  const int H = static_cast<int>(in.h), W = static_cast<int>(in.w);
  const int OH = static_cast<int>(out.h), OW = static_cast<int>(out.w);
  const std::size_t P = static_cast<std::size_t>(OH) * OW;
  col.resize(static_cast<std::size_t>(in.c) * 9 * P);
  double* row = col.data();
  for (std::uint32_t ci = 0; ci < in.c; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx, row += P) {
        for (int oy = 0; oy < OH; ++oy) {
          double* r = row + static_cast<std::size_t>(oy) * OW;
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= H) {
            std::fill(r, r + OW, 0.0);
            continue;
          }
          const double* xr = plane + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * stride + kx - 1;
            r[ox] = ix >= 0 && ix < W ? xr[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Per-thread scratch so layers stay stateless.
thread_local std::vector<double> tl_col;
thread_local std::vector<double> tl_col_t;
thread_local std::vector<double> tl_grad_col;
thread_local std::vector<double> tl_padded;
thread_local std::vector<double> tl_out_padded;
thread_local std::vector<double> tl_grad_padded;

// Copies each channel into a (h + 2) x (w + 2) plane with a zero border.
void pad_input(const double* x, Shape3 in, std::vector<double>& padded) {
  const std::size_t wp = in.w + 2, hp = in.h + 2;
  padded.assign(in.c * hp * wp, 0.0);
  for (std::uint32_t c = 0; c < in.c; ++c) {
    for (std::uint32_t y = 0; y < in.h; ++y) {
      const double* src = x + (static_cast<std::size_t>(c) * in.h + y) * in.w;
      std::copy(src, src + in.w, padded.data() + (c * hp + y + 1) * wp + 1);
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void Conv3x3::forward_strided(std::span<const double> params, std::span<const double> in,
                              std::span<double> out) const {
  const std::size_t K = static_cast<std::size_t>(in_.c) * 9;
  const std::size_t P = static_cast<std::size_t>(out_.h) * out_.w;
  im2col(in.data(), in_, out_, static_cast<int>(stride_), tl_col);
  const double* bias = params.data() + out_.c * K;
  for (std::uint32_t co = 0; co < out_.c; ++co) {
    double* o = out.data() + co * P;
    std::fill(o, o + P, bias[co]);
    const double* wrow = params.data() + co * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double wv = wrow[k];
      const double* c = tl_col.data() + k * P;
      for (std::size_t p = 0; p < P; ++p) o[p] += wv * c[p];
    }
  }
}

void Conv3x3::backward_strided(std::span<const double> params, std::span<const double> in,
                               std::span<const double> grad_out, std::span<double> grad_params,
                               std::span<double> grad_in) const {
  const std::size_t K = static_cast<std::size_t>(in_.c) * 9;
  const std::size_t P = static_cast<std::size_t>(out_.h) * out_.w;
  im2col(in.data(), in_, out_, static_cast<int>(stride_), tl_col);
  tl_col_t.resize(K * P);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t p = 0; p < P; ++p) tl_col_t[p * K + k] = tl_col[k * P + p];
  }

  double* gb = grad_params.data() + out_.c * K;
  for (std::uint32_t co = 0; co < out_.c; ++co) {
    const double* g = grad_out.data() + co * P;
    double* gk = grad_params.data() + co * K;
    double bsum = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double gv = g[p];
      if (gv == 0.0) continue;
      bsum += gv;
      const double* ct = tl_col_t.data() + p * K;
      for (std::size_t k = 0; k < K; ++k) gk[k] += gv * ct[k];
    }
    gb[co] += bsum;
  }

  if (grad_in.empty()) return;
  tl_grad_col.assign(K * P, 0.0);
  for (std::uint32_t co = 0; co < out_.c; ++co) {
    const double* g = grad_out.data() + co * P;
    const double* wrow = params.data() + co * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double wv = wrow[k];
      double* gc = tl_grad_col.data() + k * P;
      for (std::size_t p = 0; p < P; ++p) gc[p] += wv * g[p];
    }
  }
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  const int H = static_cast<int>(in_.h), W = static_cast<int>(in_.w);
  const int OH = static_cast<int>(out_.h), OW = static_cast<int>(out_.w);
  const int s = static_cast<int>(stride_);
  const double* row = tl_grad_col.data();
  for (std::uint32_t ci = 0; ci < in_.c; ++ci) {
    double* plane = grad_in.data() + static_cast<std::size_t>(ci) * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx, row += P) {
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * s + ky - 1;
          if (iy < 0 || iy >= H) continue;
          const double* r = row + static_cast<std::size_t>(oy) * OW;
          double* gr = plane + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * s + kx - 1;
            if (ix >= 0 && ix < W) gr[ix] += r[ox];
          }
        }
      }
    }
  }
}

// Stride 1 works on the padded input: with rows of width w + 2, every tap is
// a contiguous run of (h - 1) * (w + 2) + w elements. The two extra columns of
// each output row are scratch and get dropped.
void Conv3x3::forward(std::span<const double> params, std::span<const double> in,
                      std::span<double> out) const {
  if (stride_ != 1) {
    forward_strided(params, in, out);
    return;
  }
  const std::size_t K = static_cast<std::size_t>(in_.c) * 9;
  const std::size_t wp = in_.w + 2, hp = in_.h + 2;
  const std::size_t run = (in_.h - 1) * wp + in_.w;
  pad_input(in.data(), in_, tl_padded);
  tl_out_padded.resize(in_.h * wp);
  const double* bias = params.data() + out_.c * K;
  for (std::uint32_t co = 0; co < out_.c; ++co) {
    double* o = tl_out_padded.data();
    std::fill(o, o + run, bias[co]);
    const double* k = params.data() + co * K;
    for (std::uint32_t ci = 0; ci < in_.c; ++ci) {
      const double* plane = tl_padded.data() + ci * hp * wp;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wv = *k++;
          const double* src = plane + ky * wp + kx;
          for (std::size_t q = 0; q < run; ++q) o[q] += wv * src[q];
        }
      }
    }
    double* dst = out.data() + static_cast<std::size_t>(co) * in_.h * in_.w;
    for (std::uint32_t y = 0; y < in_.h; ++y) std::copy(o + y * wp, o + y * wp + in_.w, dst + y * in_.w);
  }
}

void Conv3x3::backward(std::span<const double> params, std::span<const double> in,
                       std::span<const double>, std::span<const double> grad_out,
                       std::span<double> grad_params, std::span<double> grad_in) const {
  if (stride_ != 1) {
    backward_strided(params, in, grad_out, grad_params, grad_in);
    return;
  }
  const std::size_t K = static_cast<std::size_t>(in_.c) * 9;
  const std::size_t wp = in_.w + 2, hp = in_.h + 2;
  const std::size_t run = (in_.h - 1) * wp + in_.w;
  const bool want_input = !grad_in.empty();
  pad_input(in.data(), in_, tl_padded);
  tl_out_padded.assign(in_.h * wp, 0.0);
  if (want_input) tl_grad_padded.assign(in_.c * hp * wp, 0.0);
  double* gb = grad_params.data() + out_.c * K;

  for (std::uint32_t co = 0; co < out_.c; ++co) {
    // Output gradient laid out on the padded row width, zero in the scratch columns.
    double* g = tl_out_padded.data();
    const double* src_g = grad_out.data() + static_cast<std::size_t>(co) * in_.h * in_.w;
    double bsum = 0.0;
    for (std::uint32_t y = 0; y < in_.h; ++y) {
      for (std::uint32_t x = 0; x < in_.w; ++x) {
        g[y * wp + x] = src_g[y * in_.w + x];
        bsum += src_g[y * in_.w + x];
      }
    }
    gb[co] += bsum;
    double* gk = grad_params.data() + co * K;
    const double* k = params.data() + co * K;
    for (std::uint32_t ci = 0; ci < in_.c; ++ci) {
      const double* plane = tl_padded.data() + ci * hp * wp;
      double* gplane = want_input ? tl_grad_padded.data() + ci * hp * wp : nullptr;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx, ++gk, ++k) {
          const std::size_t off = ky * wp + kx;
          *gk += dot(g, plane + off, run);
          if (gplane) {
            const double wv = *k;
            double* dst = gplane + off;
            for (std::size_t q = 0; q < run; ++q) dst[q] += wv * g[q];
          }
        }
      }
    }
  }
  if (!want_input) return;
  for (std::uint32_t c = 0; c < in_.c; ++c) {
    for (std::uint32_t y = 0; y < in_.h; ++y) {
      const double* src = tl_grad_padded.data() + (c * hp + y + 1) * wp + 1;
      std::copy(src, src + in_.w, grad_in.data() + (static_cast<std::size_t>(c) * in_.h + y) * in_.w);
    }
  }
}

std::string Conv3x3::describe() const {
  std::ostringstream out;
  out << "conv3x3(" << in_.c << "->" << out_.c << ", stride " << stride_ << ")";
  return out.str();
}

// --- Pointwise & pooling -------------------------------------------------------

void Relu::forward(std::span<const double>, std::span<const double> in, std::span<double> out) const {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void Relu::backward(std::span<const double>, std::span<const double> in, std::span<const double>,
                    std::span<const double> grad_out, std::span<double>,
                    std::span<double> grad_in) const {
  if (grad_in.empty()) return;
  for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > 0.0 ? grad_out[i] : 0.0;
}

MaxPool2::MaxPool2(Shape3 input) : in_(input), out_{input.c, input.h / 2, input.w / 2} {
  if (out_.h == 0 || out_.w == 0) throw ShapeMismatch("maxpool2 needs at least a 2x2 input");
}

void MaxPool2::forward(std::span<const double>, std::span<const double> in, std::span<double> out) const {
  for (std::uint32_t c = 0; c < in_.c; ++c) {
    const double* x = in.data() + static_cast<std::size_t>(c) * in_.h * in_.w;
    double* o = out.data() + static_cast<std::size_t>(c) * out_.h * out_.w;
    for (std::uint32_t y = 0; y < out_.h; ++y) {
      for (std::uint32_t xo = 0; xo < out_.w; ++xo) {
        const double* p = x + static_cast<std::size_t>(2 * y) * in_.w + 2 * xo;
        o[y * out_.w + xo] = std::max({p[0], p[1], p[in_.w], p[in_.w + 1]});
      }
    }
  }
}

void MaxPool2::backward(std::span<const double>, std::span<const double> in, std::span<const double>,
                        std::span<const double> grad_out, std::span<double>,
                        std::span<double> grad_in) const {
  if (grad_in.empty()) return;
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::uint32_t c = 0; c < in_.c; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * in_.h * in_.w;
    const double* g = grad_out.data() + static_cast<std::size_t>(c) * out_.h * out_.w;
    for (std::uint32_t y = 0; y < out_.h; ++y) {
      for (std::uint32_t xo = 0; xo < out_.w; ++xo) {
        const std::size_t cand[4] = {base + 2 * y * in_.w + 2 * xo, base + 2 * y * in_.w + 2 * xo + 1,
                                     base + (2 * y + 1) * in_.w + 2 * xo,
                                     base + (2 * y + 1) * in_.w + 2 * xo + 1};
        std::size_t best = cand[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (in[cand[i]] > in[best]) best = cand[i];
        }
        grad_in[best] += g[y * out_.w + xo];
      }
    }
  }
}

void GlobalAvgPool::forward(std::span<const double>, std::span<const double> in,
                            std::span<double> out) const {
  const std::size_t plane = static_cast<std::size_t>(in_.h) * in_.w;
  for (std::uint32_t c = 0; c < in_.c; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += in[c * plane + i];
    out[c] = s / static_cast<double>(plane);
  }
}

void GlobalAvgPool::backward(std::span<const double>, std::span<const double>, std::span<const double>,
                             std::span<const double> grad_out, std::span<double>,
                             std::span<double> grad_in) const {
  if (grad_in.empty()) return;
  const std::size_t plane = static_cast<std::size_t>(in_.h) * in_.w;
  for (std::uint32_t c = 0; c < in_.c; ++c) {
    const double g = grad_out[c] / static_cast<double>(plane);
    std::fill(grad_in.begin() + static_cast<std::ptrdiff_t>(c * plane),
              grad_in.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane), g);
  }
}

// --- Network -------------------------------------------------------------------

Network::Network(std::vector<LayerStack> branches, LayerStack trunk)
    : branches_(std::move(branches)), trunk_(std::move(trunk)) {
  if (branches_.empty()) throw ShapeMismatch("network needs at least one branch");
  if (trunk_.empty() && branches_.size() != 1) {
    throw ShapeMismatch("multi-branch network needs a trunk");
  }
  std::uint32_t concat_c = 0;
  Shape3 spatial{};
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto& branch = branches_[b];
    if (branch.empty()) throw ShapeMismatch("empty branch");
    for (std::size_t l = 1; l < branch.size(); ++l) {
      if (branch[l]->input_shape().size() != branch[l - 1]->output_shape().size()) {
        throw ShapeMismatch("branch layer " + std::to_string(l) + " input does not match");
      }
    }
    const Shape3 out = branch.back()->output_shape();
    if (b == 0) {
      spatial = out;
    } else if (out.h != spatial.h || out.w != spatial.w) {
      throw ShapeMismatch("branch outputs differ in spatial size");
    }
    concat_c += out.c;
    std::vector<std::size_t> offsets;
    for (const auto& layer : branch) {
      offsets.push_back(param_count_);
      param_count_ += layer->param_count();
    }
    branch_offsets_.push_back(std::move(offsets));
  }
  if (!trunk_.empty()) {
    const Shape3 concat{concat_c, spatial.h, spatial.w};
    if (trunk_.front()->input_shape().size() != concat.size()) {
      throw ShapeMismatch("trunk input does not match concatenated branches");
    }
    for (std::size_t l = 1; l < trunk_.size(); ++l) {
      if (trunk_[l]->input_shape().size() != trunk_[l - 1]->output_shape().size()) {
        throw ShapeMismatch("trunk layer " + std::to_string(l) + " input does not match");
      }
    }
  }
  for (const auto& layer : trunk_) {
    trunk_offsets_.push_back(param_count_);
    param_count_ += layer->param_count();
  }
}

Shape3 Network::input_shape(std::size_t branch) const { return branches_.at(branch).front()->input_shape(); }

std::size_t Network::output_size() const {
  return trunk_.empty() ? branches_[0].back()->output_shape().size()
                        : trunk_.back()->output_shape().size();
}

void Network::init(std::span<double> params, std::uint64_t seed) const {
  if (params.size() != param_count_) throw ShapeMismatch("parameter buffer has the wrong size");
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    for (std::size_t l = 0; l < branches_[b].size(); ++l) {
      const auto& layer = branches_[b][l];
      layer->init(params.subspan(branch_offsets_[b][l], layer->param_count()), rng);
    }
  }
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    trunk_[l]->init(params.subspan(trunk_offsets_[l], trunk_[l]->param_count()), rng);
  }
}

Workspace Network::make_workspace() const {
  Workspace ws;
  std::size_t concat = 0;
  for (const auto& branch : branches_) {
    std::vector<std::vector<double>> acts, grads;
    for (const auto& layer : branch) {
      acts.emplace_back(layer->output_shape().size());
      grads.emplace_back(layer->output_shape().size());
    }
    concat += branch.back()->output_shape().size();
    ws.branch_acts.push_back(std::move(acts));
    ws.branch_grads.push_back(std::move(grads));
  }
  ws.concat.resize(concat);
  ws.concat_grad.resize(concat);
  for (const auto& layer : trunk_) {
    ws.trunk_acts.emplace_back(layer->output_shape().size());
    ws.trunk_grads.emplace_back(layer->output_shape().size());
  }
  return ws;
}

std::span<const double> Network::forward(std::span<const double> params,
                                         std::span<const std::span<const double>> inputs,
                                         Workspace& ws) const {
  if (inputs.size() != branches_.size()) throw ShapeMismatch("wrong number of network inputs");
  std::size_t concat_at = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const auto& branch = branches_[b];
    if (inputs[b].size() != branch.front()->input_shape().size()) {
      throw ShapeMismatch("input " + std::to_string(b) + " has " + std::to_string(inputs[b].size()) +
                          " values, expected " + std::to_string(branch.front()->input_shape().size()));
    }
    std::span<const double> x = inputs[b];
    for (std::size_t l = 0; l < branch.size(); ++l) {
      auto& out = ws.branch_acts[b][l];
      branch[l]->forward(params.subspan(branch_offsets_[b][l], branch[l]->param_count()), x, out);
      x = out;
    }
    std::copy(x.begin(), x.end(), ws.concat.begin() + static_cast<std::ptrdiff_t>(concat_at));
    concat_at += x.size();
  }
  if (trunk_.empty()) return ws.branch_acts[0].back();
  std::span<const double> x = ws.concat;
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    trunk_[l]->forward(params.subspan(trunk_offsets_[l], trunk_[l]->param_count()), x, ws.trunk_acts[l]);
    x = ws.trunk_acts[l];
  }
  return x;
}

void Network::backward(std::span<const double> params, std::span<const std::span<const double>> inputs,
                       std::span<const double> grad_output, std::span<double> grad_params,
                       Workspace& ws) const {
  std::span<const double> g = grad_output;
  if (!trunk_.empty()) {
    for (std::size_t l = trunk_.size(); l-- > 0;) {
      std::span<const double> in = l == 0 ? std::span<const double>(ws.concat) : ws.trunk_acts[l - 1];
      std::span<double> gin = l == 0 ? std::span<double>(ws.concat_grad) : ws.trunk_grads[l - 1];
      trunk_[l]->backward(params.subspan(trunk_offsets_[l], trunk_[l]->param_count()), in,
                          ws.trunk_acts[l], g,
                          grad_params.subspan(trunk_offsets_[l], trunk_[l]->param_count()), gin);
      g = gin;
    }
  }
  std::size_t concat_at = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const auto& branch = branches_[b];
    const std::size_t out_size = branch.back()->output_shape().size();
    std::span<const double> gb =
        trunk_.empty() ? grad_output : std::span<const double>(ws.concat_grad).subspan(concat_at, out_size);
    concat_at += out_size;
    for (std::size_t l = branch.size(); l-- > 0;) {
      std::span<const double> in = l == 0 ? inputs[b] : std::span<const double>(ws.branch_acts[b][l - 1]);
      std::span<double> gin = l == 0 ? std::span<double>() : std::span<double>(ws.branch_grads[b][l - 1]);
      branch[l]->backward(params.subspan(branch_offsets_[b][l], branch[l]->param_count()), in,
                          ws.branch_acts[b][l], gb,
                          grad_params.subspan(branch_offsets_[b][l], branch[l]->param_count()), gin);
      gb = gin;
    }
  }
}

std::string Network::describe() const {
  std::ostringstream out;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    out << "branch " << b << ":";
    for (const auto& layer : branches_[b]) out << ' ' << layer->describe();
    out << '\n';
  }
  if (!trunk_.empty()) {
    out << "trunk:";
    for (const auto& layer : trunk_) out << ' ' << layer->describe();
    out << '\n';
  }
  return out.str();
}

}  // namespace introspect::nn
