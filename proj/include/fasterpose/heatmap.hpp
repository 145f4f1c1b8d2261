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

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fasterpose/tensor.hpp"

namespace fasterpose {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  /// 0 = not labeled, 1 = labeled but occluded, 2 = visible.
  int visibility = 0;

  bool labeled() const noexcept { return visibility > 0; }
};

/// A person sample: ground truth or prediction.
struct PoseInstance {
  std::vector<Keypoint> keypoints;
  /// (x, y, width, height) in image pixels.
  std::array<double, 4> bbox{0.0, 0.0, 0.0, 0.0};
  double area = 0.0;
  /// Per-keypoint confidence; filled for predictions only.
  std::vector<double> confidences;
  /// Instance score used for ranking predictions.
  double score = 1.0;

  std::size_t size() const noexcept { return keypoints.size(); }
};

/// Per-keypoint response maps plus the mapping from heatmap cells to image
/// pixels: image = cell * stride + origin_offset.
struct HeatmapSet {
  Tensor<double> maps;  // (N, Hh, Wh)
  double stride = 1.0;
  double origin_offset = 0.0;
  /// True when responses are post-activation and must lie in [0, 1].
  bool activated = true;

  std::size_t count() const { return maps.dim(0); }
  std::size_t height() const { return maps.dim(1); }
  std::size_t width() const { return maps.dim(2); }

  void validate() const {
    if (maps.rank() != 3) {
      throw ShapeError("heatmap set must be rank 3 (N, H, W), got " +
                       to_string(maps.shape()));
    }
    maps.check_finite("heatmap");
    if (activated) {
      for (auto v : maps.data()) {
        if (v < 0.0 || v > 1.0) {
          throw std::domain_error("activated heatmap response outside [0,1]");
        }
      }
    }
  }
};

/// Target-generator configuration. sigma is the Gaussian spread t, used as a
/// standard deviation: value = exp(-d^2 / (2 t^2)).
struct TargetConfig {
  double sigma = 2.0;
  double stride = 1.0;
  double origin_offset = 0.0;
  /// Responses below this value are set to exactly zero.
  double cutoff = 0.01;
  /// Round the image-to-grid position to the nearest cell before drawing.
  bool snap_center = true;
};

/// Squared grid radius inside which a Gaussian response stays positive.
inline double positive_radius_sq(double sigma, double cutoff) {
  return 2.0 * sigma * sigma * std::log(1.0 / cutoff);
}

/// Heatmap position of an image coordinate under the given grid mapping.
inline double image_to_grid(double v, double stride, double origin_offset) {
  return (v - origin_offset) / stride;
}

inline double grid_to_image(double v, double stride, double origin_offset) {
  return v * stride + origin_offset;
}

/// Renders one truncated Gaussian per labeled keypoint. Unlabeled keypoints
/// yield all-zero maps.
inline HeatmapSet gen_target(const PoseInstance& instance, std::size_t height,
                             std::size_t width, const TargetConfig& cfg) {
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) {
    throw std::invalid_argument("gen_target: sigma must be positive, got " +
                                std::to_string(cfg.sigma));
  }
  if (!(cfg.stride > 0.0)) {
    throw std::invalid_argument("gen_target: stride must be positive");
  }
  if (!(cfg.cutoff > 0.0 && cfg.cutoff < 1.0)) {
    throw std::invalid_argument("gen_target: cutoff must be in (0,1)");
  }
  if (height == 0 || width == 0 || instance.keypoints.empty()) {
    throw ShapeError("gen_target: empty heatmap extent or keypoint list");
  }
  HeatmapSet out{Tensor<double>({instance.size(), height, width}), cfg.stride,
                 cfg.origin_offset, true};
  const double r2 = positive_radius_sq(cfg.sigma, cfg.cutoff);
  const double two_var = 2.0 * cfg.sigma * cfg.sigma;
  const double reach = std::sqrt(r2);
  for (std::size_t k = 0; k < instance.size(); ++k) {
    const auto& kp = instance.keypoints[k];
    if (!kp.labeled()) continue;
    double cu = image_to_grid(kp.x, cfg.stride, cfg.origin_offset);
    double cv = image_to_grid(kp.y, cfg.stride, cfg.origin_offset);
    if (cfg.snap_center) {
      cu = std::round(cu);
      cv = std::round(cv);
    }
    const auto lo_h = std::max(0.0, std::ceil(cv - reach));
    const auto hi_h = std::min(static_cast<double>(height) - 1.0,
                               std::floor(cv + reach));
    const auto lo_w = std::max(0.0, std::ceil(cu - reach));
    const auto hi_w = std::min(static_cast<double>(width) - 1.0,
                               std::floor(cu + reach));
    if (lo_h > hi_h || lo_w > hi_w) continue;
    for (auto h = static_cast<std::size_t>(lo_h);
         h <= static_cast<std::size_t>(hi_h); ++h) {
      for (auto w = static_cast<std::size_t>(lo_w);
           w <= static_cast<std::size_t>(hi_w); ++w) {
        const double du = static_cast<double>(w) - cu;
        const double dv = static_cast<double>(h) - cv;
        const double d2 = du * du + dv * dv;
        if (d2 <= r2) out.maps.at(k, h, w) = std::exp(-d2 / two_var);
      }
    }
  }
  return out;
}

struct SampleCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;

  /// Negatives per positive (the "1:x" ratio).
  double ratio() const {
    return positives == 0 ? std::numeric_limits<double>::infinity()
                          : static_cast<double>(negatives) /
                                static_cast<double>(positives);
  }
};

/// Positive (> 0) and negative (== 0) cell counts, one entry per map.
inline std::vector<SampleCounts> count_pos_neg(const HeatmapSet& heatmaps) {
  const std::size_t cells = heatmaps.height() * heatmaps.width();
  std::vector<SampleCounts> out(heatmaps.count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double* m = heatmaps.maps.data().data() + k * cells;
    for (std::size_t i = 0; i < cells; ++i) {
      if (m[i] > 0.0) ++out[k].positives;
    }
    out[k].negatives = cells - out[k].positives;
  }
  return out;
}

/// Argmax plus a 0.25-cell shift per axis toward the larger neighbour. The
/// shift is applied only when both neighbours exist; ties give no shift.
inline PoseInstance decode(const HeatmapSet& heatmaps) {
  if (heatmaps.maps.rank() != 3) {
    throw ShapeError("decode: heatmaps must be rank 3, got " +
                     to_string(heatmaps.maps.shape()));
  }
  const std::size_t H = heatmaps.height(), W = heatmaps.width();
  PoseInstance pose;
  pose.keypoints.resize(heatmaps.count());
  pose.confidences.resize(heatmaps.count());
  const auto& m = heatmaps.maps;
  for (std::size_t k = 0; k < heatmaps.count(); ++k) {
    std::size_t best_h = 0, best_w = 0;
    double best = m.at(k, 0, 0);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        if (m.at(k, h, w) > best) {
          best = m.at(k, h, w);
          best_h = h;
          best_w = w;
        }
    double u = static_cast<double>(best_w);
    double v = static_cast<double>(best_h);
    if (best_w > 0 && best_w + 1 < W) {
      const double diff = m.at(k, best_h, best_w + 1) - m.at(k, best_h, best_w - 1);
      if (diff > 0.0) u += 0.25;
      if (diff < 0.0) u -= 0.25;
    }
    if (best_h > 0 && best_h + 1 < H) {
      const double diff = m.at(k, best_h + 1, best_w) - m.at(k, best_h - 1, best_w);
      if (diff > 0.0) v += 0.25;
      if (diff < 0.0) v -= 0.25;
    }
    pose.keypoints[k] = Keypoint{
        grid_to_image(u, heatmaps.stride, heatmaps.origin_offset),
        grid_to_image(v, heatmaps.stride, heatmaps.origin_offset), 2};
    pose.confidences[k] = best;
  }
  return pose;
}

/// Checks that pair_map is a permutation that is its own inverse.
inline void validate_pairing(const std::vector<std::size_t>& pair_map,
                             std::size_t count) {
  if (pair_map.size() != count) {
    throw std::invalid_argument("pairing has " +
                                std::to_string(pair_map.size()) +
                                " entries for " + std::to_string(count) +
                                " keypoints");
  }
  for (std::size_t k = 0; k < count; ++k) {
    if (pair_map[k] >= count || pair_map[pair_map[k]] != k) {
      throw std::invalid_argument("pairing is not an involution at index " +
                                  std::to_string(k));
    }
  }
}

/// Mirrors flipped_output back, swaps paired channels, optionally shifts one
/// cell toward +w (column 0 keeps its mirrored value), and averages with
/// original.
inline HeatmapSet flip_average(const HeatmapSet& original,
                               const HeatmapSet& flipped_output,
                               const std::vector<std::size_t>& pair_map,
                               bool shift_one = true) {
  if (original.maps.shape() != flipped_output.maps.shape()) {
    throw ShapeError("flip_average: extents " +
                     to_string(original.maps.shape()) + " vs " +
                     to_string(flipped_output.maps.shape()));
  }
  validate_pairing(pair_map, original.count());
  const std::size_t H = original.height(), W = original.width();
  HeatmapSet out = original;
  for (std::size_t k = 0; k < original.count(); ++k) {
    const std::size_t src = pair_map[k];
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        std::size_t aligned_w = w;
        if (shift_one && w > 0) aligned_w = w - 1;
        const double mirrored = flipped_output.maps.at(src, h, W - 1 - aligned_w);
        out.maps.at(k, h, w) = 0.5 * (original.maps.at(k, h, w) + mirrored);
      }
    }
  }
  return out;
}

/// Mean keypoint confidence times the box score.
inline double instance_score(const std::vector<double>& confidences,
                             double box_score) {
  if (confidences.empty()) {
    throw std::invalid_argument("instance_score: no keypoint confidences");
  }
  const double mean =
      std::accumulate(confidences.begin(), confidences.end(), 0.0) /
      static_cast<double>(confidences.size());
  return mean * box_score;
}

}  // namespace fasterpose
