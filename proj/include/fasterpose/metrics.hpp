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

// Keypoint accuracy: object keypoint similarity, OKS-based average precision
// and PCKh.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fasterpose/heatmap.hpp"

namespace fasterpose::metrics {

/// Published per-keypoint sigmas of the 17-keypoint benchmark layout.
inline const std::vector<double>& coco_sigmas() {
  static const std::vector<double> s = {
      0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
      0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};
  return s;
}

/// k constants (k = 2 * sigma) from per-keypoint sigmas.
inline std::vector<double> k_from_sigmas(const std::vector<double>& sigmas) {
  std::vector<double> k(sigmas.size());
  std::transform(sigmas.begin(), sigmas.end(), k.begin(),
                 [](double s) { return 2.0 * s; });
  return k;
}

/// Mean over labeled ground-truth keypoints of exp(-d^2 / (2 s^2 k^2)),
/// s^2 = gt.area.
inline double oks(const PoseInstance& pred, const PoseInstance& gt,
                  const std::vector<double>& k) {
  if (pred.size() != gt.size() || k.size() != gt.size()) {
    throw std::invalid_argument(
        "oks: keypoint counts differ (pred " + std::to_string(pred.size()) +
        ", gt " + std::to_string(gt.size()) + ", k " +
        std::to_string(k.size()) + ")");
  }
  if (!(gt.area > 0.0)) throw std::invalid_argument("oks: gt area must be > 0");
  double acc = 0.0;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.keypoints[i].labeled()) continue;
    const double dx = pred.keypoints[i].x - gt.keypoints[i].x;
    const double dy = pred.keypoints[i].y - gt.keypoints[i].y;
    acc += std::exp(-(dx * dx + dy * dy) / (2.0 * gt.area * k[i] * k[i]));
    ++labeled;
  }
  if (labeled == 0) throw std::invalid_argument("oks: no labeled keypoints");
  return acc / static_cast<double>(labeled);
}

/// Ground truths and scored predictions of one image.
struct ImageResult {
  std::vector<PoseInstance> gts;
  std::vector<PoseInstance> preds;
};

struct EvalResult {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar = 0.0;
  std::vector<double> pckh_per_keypoint;
  double pckh = 0.0;
  /// AP per threshold, aligned with the thresholds used.
  std::vector<double> ap_per_threshold;
};

inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
  return t;
}

struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
};

/// Precision/recall after greedy score-ordered matching at one threshold.
/// Each prediction takes the unmatched ground truth of its image with the
/// highest OKS at or above the threshold.
inline PrCurve match_curve(const std::vector<ImageResult>& images,
                           const std::vector<double>& k, double threshold,
                           std::size_t* total_gt = nullptr) {
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    n_gt += images[i].gts.size();
    for (std::size_t j = 0; j < images[i].preds.size(); ++j)
      ranked.push_back({images[i].preds[j].score, i, j});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) {
                     return a.score > b.score;
                   });
  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    taken[i].assign(images[i].gts.size(), false);

  PrCurve c;
  std::size_t tp = 0, fp = 0;
  for (const auto& r : ranked) {
    const auto& img = images[r.image];
    double best = threshold;
    std::ptrdiff_t match = -1;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (taken[r.image][g]) continue;
      const double s = oks(img.preds[r.index], img.gts[g], k);
      if (s >= best) {
        best = s;
        match = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (match >= 0) {
      taken[r.image][static_cast<std::size_t>(match)] = true;
      ++tp;
    } else {
      ++fp;
    }
    c.precision.push_back(static_cast<double>(tp) /
                          static_cast<double>(tp + fp));
    c.recall.push_back(n_gt == 0 ? 0.0
                                 : static_cast<double>(tp) /
                                       static_cast<double>(n_gt));
  }
  if (total_gt) *total_gt = n_gt;
  return c;
}

/// 101-point interpolated area under a precision/recall curve.
inline double interpolated_ap(PrCurve c) {
  if (c.precision.empty()) return 0.0;
  for (std::size_t i = c.precision.size() - 1; i > 0; --i)
    c.precision[i - 1] = std::max(c.precision[i - 1], c.precision[i]);
  double acc = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = static_cast<double>(r) / 100.0;
    auto it = std::lower_bound(c.recall.begin(), c.recall.end(), level);
    if (it == c.recall.end()) continue;
    acc += c.precision[static_cast<std::size_t>(it - c.recall.begin())];
  }
  return acc / 101.0;
}

/// AP, AP50, AP75 and mean recall over the thresholds.
inline EvalResult average_precision(
    const std::vector<ImageResult>& images, const std::vector<double>& k,
    const std::vector<double>& thresholds = default_thresholds()) {
  EvalResult out;
  double ap_sum = 0.0, ar_sum = 0.0;
  for (double t : thresholds) {
    const PrCurve c = match_curve(images, k, t);
    const double ap = interpolated_ap(c);
    out.ap_per_threshold.push_back(ap);
    ap_sum += ap;
    ar_sum += c.recall.empty() ? 0.0 : c.recall.back();
    if (std::abs(t - 0.50) < 1e-9) out.ap50 = ap;
    if (std::abs(t - 0.75) < 1e-9) out.ap75 = ap;
  }
  if (!thresholds.empty()) {
    out.ap = ap_sum / static_cast<double>(thresholds.size());
    out.ar = ar_sum / static_cast<double>(thresholds.size());
  }
  return out;
}

struct PckhResult {
  /// Per keypoint: 1 correct, 0 wrong, -1 unlabeled.
  std::vector<int> correct;
  double mean = 0.0;
  std::size_t labeled = 0;
};

/// Keypoint correct iff distance <= tau * head_length (inclusive).
inline PckhResult pckh(const PoseInstance& pred, const PoseInstance& gt,
                       double head_length, double tau = 0.5) {
  if (!(head_length > 0.0)) {
    throw std::invalid_argument("pckh: head segment length must be > 0");
  }
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("pckh: keypoint counts differ");
  }
  PckhResult r;
  r.correct.assign(gt.size(), -1);
  std::size_t hits = 0;
  const double limit = tau * head_length;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.keypoints[i].labeled()) continue;
    const double d = std::hypot(pred.keypoints[i].x - gt.keypoints[i].x,
                                pred.keypoints[i].y - gt.keypoints[i].y);
    r.correct[i] = d <= limit ? 1 : 0;
    hits += static_cast<std::size_t>(r.correct[i]);
    ++r.labeled;
  }
  r.mean = r.labeled == 0 ? 0.0
                          : static_cast<double>(hits) /
                                static_cast<double>(r.labeled);
  return r;
}

/// Accumulates PCKh over many instances, per keypoint and overall.
class PckhAccumulator {
 public:
  explicit PckhAccumulator(std::size_t keypoints)
      : hits_(keypoints, 0), total_(keypoints, 0) {}

  void add(const PckhResult& r) {
    for (std::size_t i = 0; i < r.correct.size() && i < hits_.size(); ++i) {
      if (r.correct[i] < 0) continue;
      hits_[i] += static_cast<std::size_t>(r.correct[i]);
      ++total_[i];
    }
  }

  std::vector<double> per_keypoint() const {
    std::vector<double> out(hits_.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (total_[i]) out[i] = static_cast<double>(hits_[i]) / total_[i];
    return out;
  }

  double mean() const {
    const auto h = std::accumulate(hits_.begin(), hits_.end(), std::size_t{0});
    const auto t = std::accumulate(total_.begin(), total_.end(), std::size_t{0});
    return t == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(t);
  }

 private:
  std::vector<std::size_t> hits_;
  std::vector<std::size_t> total_;
};

}  // namespace fasterpose::metrics
