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
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fasterpose/dataset.hpp"

namespace fasterpose {

/// Ranges of the random similarity transform: scale in 1 +- scale, rotation
/// in +-rotation degrees, horizontal flip with flip_prob.
struct AugmentConfig {
  double scale = 0.35;
  double rotation = 45.0;
  double flip_prob = 0.5;

  void validate() const {
    if (!(scale >= 0.0 && scale < 1.0))
      throw std::invalid_argument("augment scale range must be in [0,1)");
    if (!(rotation >= 0.0 && rotation <= 180.0))
      throw std::invalid_argument("augment rotation must be in [0,180]");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
      throw std::invalid_argument("augment flip probability must be in [0,1]");
  }
};

struct AugmentDraw {
  double scale = 1.0;
  /// Degrees, in image coordinates (y down): positive turns +x toward +y.
  double rotation = 0.0;
  bool flip = false;
};

inline AugmentDraw draw_augment(const AugmentConfig& cfg,
                                std::mt19937_64& rng) {
  cfg.validate();
  AugmentDraw d;
  d.scale = detail::uniform(rng, 1.0 - cfg.scale, 1.0 + cfg.scale);
  d.rotation = detail::uniform(rng, -cfg.rotation, cfg.rotation);
  d.flip = detail::uniform01(rng) < cfg.flip_prob;
  return d;
}

/// Forward map of image points: scale and rotate about the image centre, then
/// mirror x when flipping.
class SimilarityTransform {
 public:
  SimilarityTransform(const AugmentDraw& d, std::size_t width,
                      std::size_t height)
      : draw_(d),
        cx_((static_cast<double>(width) - 1.0) / 2.0),
        cy_((static_cast<double>(height) - 1.0) / 2.0) {
    if (!(d.scale > 0.0)) throw std::invalid_argument("scale must be > 0");
    const double r = d.rotation * std::numbers::pi / 180.0;
    c_ = std::cos(r);
    s_ = std::sin(r);
  }

  std::pair<double, double> apply(double x, double y) const {
    const double dx = x - cx_, dy = y - cy_;
    double ox = cx_ + draw_.scale * (c_ * dx - s_ * dy);
    const double oy = cy_ + draw_.scale * (s_ * dx + c_ * dy);
    if (draw_.flip) ox = 2.0 * cx_ - ox;
    return {ox, oy};
  }

  std::pair<double, double> invert(double x, double y) const {
    if (draw_.flip) x = 2.0 * cx_ - x;
    const double dx = (x - cx_) / draw_.scale, dy = (y - cy_) / draw_.scale;
    return {cx_ + c_ * dx + s_ * dy, cy_ - s_ * dx + c_ * dy};
  }

 private:
  AugmentDraw draw_;
  double cx_, cy_, c_ = 1.0, s_ = 0.0;
};

/// Bilinear sample; points outside the image read as zero.
inline float sample_bilinear(const GrayImage& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  auto px = [&](long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= static_cast<long>(img.width) ||
        yy >= static_cast<long>(img.height))
      return 0.0;
    return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  const double top = (1.0 - ax) * px(y0, x0) + ax * px(y0, x0 + 1);
  const double bot = (1.0 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1);
  return static_cast<float>((1.0 - ay) * top + ay * bot);
}

/// Warps pixels and keypoints with the same transform. A flip also swaps
/// paired keypoint indices. Keypoints leaving the image become unlabeled.
inline std::pair<GrayImage, PoseInstance> apply_augment(
    const GrayImage& image, const PoseInstance& instance,
    const AugmentDraw& draw, const std::vector<std::size_t>& pair_map) {
  validate_pairing(pair_map, instance.size());
  const SimilarityTransform tf(draw, image.width, image.height);
  const bool identity = draw.scale == 1.0 && draw.rotation == 0.0 && !draw.flip;

  GrayImage out = image;
  if (!identity) {
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) {
        const auto [sx, sy] =
            tf.invert(static_cast<double>(x), static_cast<double>(y));
        out.at(y, x) = sample_bilinear(image, sx, sy);
      }
  }

  PoseInstance pose = instance;
  const double W = static_cast<double>(image.width) - 1.0;
  const double H = static_cast<double>(image.height) - 1.0;
  for (std::size_t k = 0; k < instance.size(); ++k) {
    const std::size_t dst = draw.flip ? pair_map[k] : k;
    Keypoint kp = instance.keypoints[k];
    if (!identity) {
      const auto [x, y] = tf.apply(kp.x, kp.y);
      kp.x = x;
      kp.y = y;
      if (kp.labeled() && (x < 0.0 || y < 0.0 || x > W || y > H))
        kp.visibility = 0;
    }
    pose.keypoints[dst] = kp;
  }
  if (!identity) {
    double x_lo = 1e300, y_lo = 1e300, x_hi = -1e300, y_hi = -1e300;
    const auto& b = instance.bbox;
    const std::array<std::array<double, 2>, 4> corners = {
        {{b[0], b[1]}, {b[0] + b[2], b[1]}, {b[0], b[1] + b[3]},
         {b[0] + b[2], b[1] + b[3]}}};
    for (const auto& c : corners) {
      const auto [x, y] = tf.apply(c[0], c[1]);
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
    pose.bbox = {x_lo, y_lo, x_hi - x_lo, y_hi - y_lo};
    pose.area = instance.area * draw.scale * draw.scale;
  }
  return {std::move(out), std::move(pose)};
}

}  // namespace fasterpose
