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

// Analytic parameter and multiply-accumulate counting.
//
// MAC convention (embedded in every report as kMacConvention):
//   conv             out_elements * Cin * K^2
//   transposed conv  out_elements * Cin * K^2  (output-centric, full K^2)
//   GFLOPs           MACs / 1e9
// Normalization, activation, pooling and residual additions are free.
// Backbone counts include BatchNorm scale/shift; head counts carry no
// normalization or bias terms.

#pragma once

#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fasterpose/heads.hpp"
#include <json.hpp>

namespace fasterpose::complexity {

inline constexpr const char* kMacConvention =
    "mac/v1: conv=out*cin*k^2; deconv=out*cin*k^2 (output-centric); "
    "gflops=macs/1e9; bn params counted in backbone only";

struct Component {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct Report {
  std::vector<Component> components;
  std::string convention = kMacConvention;

  std::uint64_t total_params() const {
    return std::accumulate(
        components.begin(), components.end(), std::uint64_t{0},
        [](std::uint64_t acc, const Component& c) { return acc + c.params; });
  }
  std::uint64_t total_macs() const {
    return std::accumulate(
        components.begin(), components.end(), std::uint64_t{0},
        [](std::uint64_t acc, const Component& c) { return acc + c.macs; });
  }
  double gflops() const { return static_cast<double>(total_macs()) / 1e9; }
};

struct Extent {
  std::uint64_t height = 0;
  std::uint64_t width = 0;
};

inline std::uint64_t conv_macs(std::uint64_t out_h, std::uint64_t out_w,
                               std::uint64_t cout, std::uint64_t cin,
                               std::uint64_t k) {
  return out_h * out_w * cout * cin * k * k;
}

/// Closed-form head parameter count; equals Head<T>::count() for the spec.
inline std::uint64_t count_head_params(const HeadSpec& spec) {
  spec.validate();
  const std::uint64_t M = spec.in_channels, N = spec.keypoints;
  switch (spec.kind) {
    case HeadKind::kLhr:
    case HeadKind::kPixelShuffle: {
      const std::uint64_t K2 = spec.kind == HeadKind::kLhr ? 1 : 9;
      const std::uint64_t L2 = spec.upsample * spec.upsample;
      return M * N * L2 * K2 + (spec.bias ? N * L2 : 0);
    }
    case HeadKind::kDeconv: {
      const std::uint64_t F = spec.filters, K = spec.kernel;
      const std::uint64_t layers = spec.layers;
      std::uint64_t n = (M + (layers - 1) * F) * F * K * K + F * N;
      if (spec.bias) n += layers * F + N;
      return n;
    }
  }
  throw std::logic_error("unreachable head kind");
}

/// Head components at a given feature extent.
inline std::vector<Component> head_components(const HeadSpec& spec,
                                              Extent features) {
  spec.validate();
  const std::uint64_t M = spec.in_channels, N = spec.keypoints;
  std::vector<Component> out;
  switch (spec.kind) {
    case HeadKind::kLhr:
    case HeadKind::kPixelShuffle: {
      const std::uint64_t K = spec.kind == HeadKind::kLhr ? 1 : 3;
      const std::uint64_t L2 = spec.upsample * spec.upsample;
      out.push_back({std::string(head_kind_name(spec.kind)),
                     count_head_params(spec),
                     conv_macs(features.height, features.width, N * L2, M, K)});
      break;
    }
    case HeadKind::kDeconv: {
      const std::uint64_t F = spec.filters, K = spec.kernel;
      Extent e = features;
      std::uint64_t cin = M;
      for (std::size_t i = 0; i < spec.layers; ++i) {
        e = {e.height * 2, e.width * 2};
        out.push_back({"deconv" + std::to_string(i),
                       cin * F * K * K + (spec.bias ? F : 0),
                       conv_macs(e.height, e.width, F, cin, K)});
        cin = F;
      }
      out.push_back({"deconv.final", F * N + (spec.bias ? N : 0),
                     conv_macs(e.height, e.width, N, F, 1)});
      break;
    }
  }
  return out;
}

/// Components of the 50-layer bottleneck residual network (1x1 / 3x3 / 1x1
/// blocks, stride on the 3x3, projection shortcuts on each stage's first
/// block) without its classifier, at a given input extent.
inline std::vector<Component> resnet50_components(Extent input) {
  if (input.height % 32 != 0 || input.width % 32 != 0) {
    throw std::invalid_argument("resnet50: input extent must be divisible by 32");
  }
  std::vector<Component> out;
  auto bn = [](std::uint64_t c) { return 2 * c; };
  std::uint64_t h = input.height / 2, w = input.width / 2;
  out.push_back({"resnet50.stem", 3 * 64 * 49 + bn(64),
                 conv_macs(h, w, 64, 3, 7)});
  h /= 2;  // max pool
  w /= 2;
  const std::uint64_t blocks[4] = {3, 4, 6, 3};
  const std::uint64_t widths[4] = {64, 128, 256, 512};
  std::uint64_t cin = 64;
  for (int s = 0; s < 4; ++s) {
    const std::uint64_t mid = widths[s], cout = 4 * mid;
    Component stage{"resnet50.layer" + std::to_string(s + 1), 0, 0};
    for (std::uint64_t b = 0; b < blocks[s]; ++b) {
      const std::uint64_t stride = (b == 0 && s > 0) ? 2 : 1;
      const std::uint64_t in_h = h, in_w = w;
      const std::uint64_t oh = h / stride, ow = w / stride;
      stage.params += cin * mid + bn(mid);
      stage.macs += conv_macs(in_h, in_w, mid, cin, 1);
      stage.params += mid * mid * 9 + bn(mid);
      stage.macs += conv_macs(oh, ow, mid, mid, 3);
      stage.params += mid * cout + bn(cout);
      stage.macs += conv_macs(oh, ow, cout, mid, 1);
      if (b == 0) {
        stage.params += cin * cout + bn(cout);
        stage.macs += conv_macs(oh, ow, cout, cin, 1);
      }
      h = oh;
      w = ow;
      cin = cout;
    }
    out.push_back(stage);
  }
  return out;
}

inline std::uint64_t resnet50_params() {
  const auto comps = resnet50_components({224, 224});
  return std::accumulate(
      comps.begin(), comps.end(), std::uint64_t{0},
      [](std::uint64_t acc, const Component& c) { return acc + c.params; });
}

inline constexpr std::uint64_t kResNet50Channels = 2048;
inline constexpr std::uint64_t kResNet50Stride = 32;

/// Components of a toy backbone at a given input extent.
inline std::vector<Component> backbone_components(const BackboneSpec& spec,
                                                  Extent input) {
  spec.validate();
  const std::uint64_t stride = spec.total_stride();
  if (input.height % stride != 0 || input.width % stride != 0) {
    throw std::invalid_argument("input extent not divisible by total stride " +
                                std::to_string(stride));
  }
  std::vector<Component> out;
  std::uint64_t h = input.height, w = input.width, cin = spec.in_channels;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const auto& st = spec.stages[i];
    h /= st.stride;
    w /= st.stride;
    out.push_back({"backbone.stage" + std::to_string(i),
                   st.channels * cin * st.kernel * st.kernel + st.channels,
                   conv_macs(h, w, st.channels, cin, st.kernel)});
    cin = st.channels;
  }
  return out;
}

/// Full model report with the ResNet-50 backbone.
inline Report count_resnet50(const HeadSpec& head, Extent input) {
  Report r;
  r.components = resnet50_components(input);
  for (auto& c : head_components(
           head, {input.height / kResNet50Stride, input.width / kResNet50Stride}))
    r.components.push_back(std::move(c));
  return r;
}

/// Full model report with a toy backbone.
inline Report count_flops(const BackboneSpec& backbone, const HeadSpec& head,
                          Extent input) {
  Report r;
  r.components = backbone_components(backbone, input);
  const std::uint64_t s = backbone.total_stride();
  for (auto& c : head_components(head, {input.height / s, input.width / s}))
    r.components.push_back(std::move(c));
  return r;
}

/// The paper-baseline heads on a 2048-channel, 17-keypoint configuration.
inline HeadSpec baseline_lhr() { return HeadSpec::lhr(2048, 17, 8); }
inline HeadSpec baseline_deconv() {
  return HeadSpec::deconv(2048, 256, 4, 3, 17);
}

/// Fraction of regressor weights removed by LHR relative to the deconv head.
inline double regressor_reduction(const HeadSpec& lhr, const HeadSpec& deconv) {
  return 1.0 - static_cast<double>(count_head_params(lhr)) /
                   static_cast<double>(count_head_params(deconv));
}

struct AblationRow {
  Extent feature;
  std::size_t deconv_layers = 0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

/// Feature-resolution sweep on ResNet-50 at 256x192 input, 17 keypoints:
/// d deconv layers (F=256, K=4) raise the 8x6 feature map to 8*2^d x 6*2^d,
/// and an LHR with L = 8 / 2^d regresses the 64x48 heatmap from there.
inline std::vector<AblationRow> resolution_ablation_report() {
  const Extent input{256, 192};
  const std::uint64_t N = 17, F = 256, K = 4;
  std::vector<AblationRow> rows;
  for (std::size_t d = 0; d <= 3; ++d) {
    Report r;
    r.components = resnet50_components(input);
    Extent e{input.height / kResNet50Stride, input.width / kResNet50Stride};
    std::uint64_t cin = kResNet50Channels;
    for (std::size_t i = 0; i < d; ++i) {
      e = {e.height * 2, e.width * 2};
      r.components.push_back({"deconv" + std::to_string(i), cin * F * K * K,
                              conv_macs(e.height, e.width, F, cin, K)});
      cin = F;
    }
    const auto lhr = HeadSpec::lhr(cin, N, std::size_t{8} >> d);
    for (auto& c : head_components(lhr, e)) r.components.push_back(c);
    rows.push_back({e, d, r.total_params(), r.total_macs()});
  }
  return rows;
}

inline std::string format_millions(std::uint64_t n) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << static_cast<double>(n) / 1e6
     << 'M';
  return os.str();
}

inline std::string format_table(const Report& r) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "component" << std::right
     << std::setw(14) << "params" << std::setw(18) << "MACs" << '\n';
  for (const auto& c : r.components)
    os << std::left << std::setw(22) << c.name << std::right << std::setw(14)
       << c.params << std::setw(18) << c.macs << '\n';
  os << std::left << std::setw(22) << "total" << std::right << std::setw(14)
     << r.total_params() << std::setw(18) << r.total_macs() << '\n';
  os << "GFLOPs " << std::fixed << std::setprecision(3) << r.gflops() << "  ("
     << r.convention << ")\n";
  return os.str();
}

inline nlohmann::json to_json(const Report& r) {
  nlohmann::json j;
  j["convention"] = r.convention;
  j["total_params"] = r.total_params();
  j["total_macs"] = r.total_macs();
  j["gflops"] = r.gflops();
  for (const auto& c : r.components)
    j["components"].push_back(
        {{"name", c.name}, {"params", c.params}, {"macs", c.macs}});
  return j;
}

}  // namespace fasterpose::complexity
