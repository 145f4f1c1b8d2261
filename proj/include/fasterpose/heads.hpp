// Copyright 2026 The FasterPose Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Regression heads and the toy backbone.
//
// LHR: one 1x1 conv producing N * L^2 channels, then depth_to_space with ratio
// L, so that keypoint k owns channels [k*L^2, (k+1)*L^2) and channel
// k*L^2 + i*L + j lands on sub-pixel (i, j) of every L x L output cell.
// DECONV: `layers` transposed convs (kernel K, stride 2) with ReLU, then a 1x1
// conv to N maps. PIXELSHUFFLE: as LHR with a padded 3x3 conv.

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fasterpose/autodiff.hpp"
#include "fasterpose/checkpoint.hpp"
#include "fasterpose/tensor.hpp"

namespace fasterpose {

enum class HeadKind { kLhr, kDeconv, kPixelShuffle };

inline std::string_view head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::kLhr: return "lhr";
    case HeadKind::kDeconv: return "deconv";
    case HeadKind::kPixelShuffle: return "pixelshuffle";
  }
  return "unknown";
}

inline HeadKind parse_head_kind(std::string_view name) {
  for (auto kind : {HeadKind::kLhr, HeadKind::kDeconv, HeadKind::kPixelShuffle})
    if (head_kind_name(kind) == name) return kind;
  throw std::invalid_argument("unknown head kind '" + std::string(name) + "'");
}

struct HeadSpec {
  HeadKind kind = HeadKind::kLhr;
  std::size_t in_channels = 0;      // M
  std::size_t keypoints = 0;        // N
  std::size_t upsample = 1;         // L (LHR / PIXELSHUFFLE)
  std::size_t filters = 256;        // F (DECONV)
  std::size_t kernel = 4;           // K (DECONV)
  std::size_t layers = 3;           // DECONV
  bool bias = false;

  void validate() const {
    if (in_channels == 0 || keypoints == 0) {
      throw std::invalid_argument("head: M and N must be positive");
    }
    if (kind == HeadKind::kDeconv) {
      if (layers < 1 || layers > 3) {
        throw std::invalid_argument("deconv head: layers must be 1..3, got " +
                                    std::to_string(layers));
      }
      if (filters == 0 || kernel < 2 || kernel % 2 != 0) {
        throw std::invalid_argument(
            "deconv head: F must be positive and K even >= 2");
      }
    } else if (upsample == 0) {
      throw std::invalid_argument("head: upsampling ratio L must be >= 1");
    }
  }

  /// Spatial magnification from feature map to heatmap.
  std::size_t magnification() const {
    return kind == HeadKind::kDeconv ? (std::size_t{1} << layers) : upsample;
  }

  static HeadSpec lhr(std::size_t M, std::size_t N, std::size_t L) {
    HeadSpec s;
    s.kind = HeadKind::kLhr;
    s.in_channels = M;
    s.keypoints = N;
    s.upsample = L;
    return s;
  }

  static HeadSpec pixel_shuffle(std::size_t M, std::size_t N, std::size_t L) {
    HeadSpec s = lhr(M, N, L);
    s.kind = HeadKind::kPixelShuffle;
    return s;
  }

  static HeadSpec deconv(std::size_t M, std::size_t F, std::size_t K,
                         std::size_t layers, std::size_t N) {
    HeadSpec s;
    s.kind = HeadKind::kDeconv;
    s.in_channels = M;
    s.filters = F;
    s.kernel = K;
    s.layers = layers;
    s.keypoints = N;
    return s;
  }
};

struct BackboneStage {
  std::size_t channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;

  /// Same-style padding; kernel - stride must be even.
  std::size_t padding() const { return (kernel - stride) / 2; }
};

struct BackboneSpec {
  std::size_t in_channels = 1;
  std::vector<BackboneStage> stages;

  std::size_t total_stride() const {
    std::size_t s = 1;
    for (const auto& st : stages) s *= st.stride;
    return s;
  }
  std::size_t out_channels() const {
    return stages.empty() ? in_channels : stages.back().channels;
  }

  void validate() const {
    if (in_channels == 0 || stages.empty()) {
      throw std::invalid_argument("backbone: needs input channels and stages");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& st = stages[i];
      if (st.channels == 0 || st.kernel == 0 || st.stride == 0 ||
          st.kernel < st.stride || (st.kernel - st.stride) % 2 != 0) {
        throw std::invalid_argument(
            "backbone stage " + std::to_string(i) +
            ": needs positive extents and an even kernel - stride");
      }
    }
    if (total_stride() < 2) {
      throw std::invalid_argument("backbone: total stride must be >= 2");
    }
  }

  /// Four stages: three 4x4 stride-2 convs and a 3x3 context conv.
  static BackboneSpec toy(std::size_t out_channels = 64) {
    BackboneSpec s;
    s.in_channels = 1;
    s.stages = {{8, 4, 2}, {16, 4, 2}, {32, 4, 2}, {out_channels, 3, 1}};
    return s;
  }
};

/// Parameters of a network component plus their binding to a graph.
template <Real T>
class ParameterSet {
 public:
  std::vector<NamedTensor<T>>& entries() noexcept { return entries_; }
  const std::vector<NamedTensor<T>>& entries() const noexcept {
    return entries_;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Creates one parameter node per entry, in order.
  std::vector<Var<T>> bind(Graph<T>& g) const {
    std::vector<Var<T>> vars;
    vars.reserve(entries_.size());
    for (const auto& e : entries_) vars.push_back(g.parameter(e.value));
    return vars;
  }

 protected:
  /// Uniform in +-sqrt(1 / fan_in).
  template <typename Rng>
  std::size_t add(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(fan_in)));
    t.fill_uniform(rng, -bound, bound);
    entries_.push_back({std::move(name), std::move(t)});
    return entries_.size() - 1;
  }

  std::vector<NamedTensor<T>> entries_;
};

/// One of the three regression heads described by a HeadSpec.
template <Real T>
class Head : public ParameterSet<T> {
 public:
  template <typename Rng>
  Head(const HeadSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    const std::size_t M = spec_.in_channels, N = spec_.keypoints;
    switch (spec_.kind) {
      case HeadKind::kLhr:
      case HeadKind::kPixelShuffle: {
        const std::size_t K = spec_.kind == HeadKind::kLhr ? 1 : 3;
        const std::size_t L2 = spec_.upsample * spec_.upsample;
        this->add("head.weight", {N * L2, M, K, K}, M * K * K, rng);
        if (spec_.bias) this->add("head.bias", {N * L2}, M * K * K, rng);
        break;
      }
      case HeadKind::kDeconv: {
        const std::size_t F = spec_.filters, K = spec_.kernel;
        for (std::size_t i = 0; i < spec_.layers; ++i) {
          const std::size_t cin = i == 0 ? M : F;
          const std::string name = "head.deconv" + std::to_string(i);
          this->add(name + ".weight", {cin, F, K, K}, cin * K * K, rng);
          if (spec_.bias) this->add(name + ".bias", {F}, cin * K * K, rng);
        }
        this->add("head.final.weight", {N, F, 1, 1}, F, rng);
        if (spec_.bias) this->add("head.final.bias", {N}, F, rng);
        break;
      }
    }
  }

  const HeadSpec& spec() const noexcept { return spec_; }

  /// Maps features (B, M, H, W) to raw heatmaps (B, N, H*s, W*s) with s the
  /// magnification. params are the nodes returned by bind().
  Var<T> forward(Var<T> features, std::span<const Var<T>> params) const {
    if (features.value().rank() != 4 ||
        features.value().dim(1) != spec_.in_channels) {
      throw ShapeError("head expects " + std::to_string(spec_.in_channels) +
                       " input channels, got " +
                       to_string(features.value().shape()));
    }
    std::size_t p = 0;
    auto next = [&]() { return params[p++]; };
    switch (spec_.kind) {
      case HeadKind::kLhr:
      case HeadKind::kPixelShuffle: {
        const std::size_t pad = spec_.kind == HeadKind::kLhr ? 0 : 1;
        Var<T> x = ad::conv2d(features, next(), 1, pad);
        if (spec_.bias) x = ad::add_channel_bias(x, next());
        return ad::depth_to_space(x, spec_.upsample);
      }
      case HeadKind::kDeconv: {
        const std::size_t pad = (spec_.kernel - 2) / 2;
        Var<T> x = features;
        for (std::size_t i = 0; i < spec_.layers; ++i) {
          x = ad::conv_transpose2d(x, next(), 2, pad);
          if (spec_.bias) x = ad::add_channel_bias(x, next());
          x = ad::relu(x);
        }
        x = ad::conv2d(x, next(), 1, 0);
        if (spec_.bias) x = ad::add_channel_bias(x, next());
        return x;
      }
    }
    throw std::logic_error("unreachable head kind");
  }

 private:
  HeadSpec spec_;
};

/// Stack of conv + bias + ReLU stages.
template <Real T>
class Backbone : public ParameterSet<T> {
 public:
  template <typename Rng>
  Backbone(const BackboneSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    std::size_t cin = spec_.in_channels;
    for (std::size_t i = 0; i < spec_.stages.size(); ++i) {
      const auto& st = spec_.stages[i];
      const std::string name = "backbone.stage" + std::to_string(i);
      const std::size_t fan_in = cin * st.kernel * st.kernel;
      this->add(name + ".weight", {st.channels, cin, st.kernel, st.kernel},
                fan_in, rng);
      this->add(name + ".bias", {st.channels}, fan_in, rng);
      cin = st.channels;
    }
  }

  const BackboneSpec& spec() const noexcept { return spec_; }

  Var<T> forward(Var<T> image, std::span<const Var<T>> params) const {
    const auto& s = image.value().shape();
    const std::size_t stride = spec_.total_stride();
    if (s.size() != 4 || s[1] != spec_.in_channels || s[2] % stride != 0 ||
        s[3] % stride != 0) {
      throw ShapeError("backbone: input " + to_string(s) +
                       " must have " + std::to_string(spec_.in_channels) +
                       " channels and extents divisible by " +
                       std::to_string(stride));
    }
    Var<T> x = image;
    for (std::size_t i = 0; i < spec_.stages.size(); ++i) {
      const auto& st = spec_.stages[i];
      x = ad::conv2d(x, params[2 * i], st.stride, st.padding());
      x = ad::bias_relu(x, params[2 * i + 1]);
    }
    return x;
  }

 private:
  BackboneSpec spec_;
};

/// Backbone followed by a head; owns all trainable tensors.
template <Real T>
class PoseNet {
 public:
  template <typename Rng>
  PoseNet(const BackboneSpec& backbone, const HeadSpec& head, Rng& rng)
      : backbone_(backbone, rng), head_(head, rng) {
    if (head.in_channels != backbone.out_channels()) {
      throw std::invalid_argument(
          "head M=" + std::to_string(head.in_channels) +
          " does not match backbone output channels " +
          std::to_string(backbone.out_channels()));
    }
  }

  struct Pass {
    Var<T> output;
    std::vector<Var<T>> params;  // backbone params, then head params
  };

  Pass forward(Graph<T>& g, Tensor<T> images) const {
    Pass pass;
    auto bb = backbone_.bind(g);
    auto hd = head_.bind(g);
    Var<T> x = g.constant(std::move(images));
    x = backbone_.forward(x, bb);
    pass.output = head_.forward(x, hd);
    pass.params = std::move(bb);
    pass.params.insert(pass.params.end(), hd.begin(), hd.end());
    return pass;
  }

  /// Overall input-to-heatmap stride.
  std::size_t output_stride() const {
    return backbone_.spec().total_stride() / head_.spec().magnification();
  }

  std::size_t parameter_count() const {
    return backbone_.count() + head_.count();
  }

  /// All parameter tensors, backbone first.
  std::vector<Tensor<T>*> tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& e : backbone_.entries()) out.push_back(&e.value);
    for (auto& e : head_.entries()) out.push_back(&e.value);
    return out;
  }

  std::vector<NamedTensor<T>> named() const {
    auto out = backbone_.entries();
    const auto& h = head_.entries();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

  /// Overwrites parameters from a checkpoint; names and shapes must match.
  void load(const std::vector<NamedTensor<T>>& entries) {
    auto current = tensors();
    auto names = named();
    if (entries.size() != current.size()) {
      throw CheckpointError("checkpoint has " + std::to_string(entries.size()) +
                            " tensors, model has " +
                            std::to_string(current.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name != names[i].name ||
          entries[i].value.shape() != current[i]->shape()) {
        throw CheckpointError("checkpoint entry '" + entries[i].name +
                              "' does not match model tensor '" +
                              names[i].name + "'");
      }
      *current[i] = entries[i].value;
    }
  }

  const Backbone<T>& backbone() const noexcept { return backbone_; }
  const Head<T>& head() const noexcept { return head_; }

 private:
  Backbone<T> backbone_;
  Head<T> head_;
};

}  // namespace fasterpose
