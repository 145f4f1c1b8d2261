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

#include <cmath>

#include <gtest/gtest.h>

#include "fasterpose/metrics.hpp"

namespace fasterpose::metrics {
namespace {

PoseInstance one_point(double x, double y, double area = 100.0,
                       double score = 1.0) {
  PoseInstance p;
  p.keypoints = {Keypoint{x, y, 2}};
  p.area = area;
  p.score = score;
  return p;
}

// Prediction whose OKS against one_point(0, 0) with k = 0.1 is `target`.
PoseInstance at_oks(double target, double score) {
  return one_point(std::sqrt(-2.0 * std::log(target)), 0.0, 100.0, score);
}

TEST(OksTest, PerfectPredictionIsOne) {
  PoseInstance gt;
  for (int i = 0; i < 17; ++i) gt.keypoints.push_back({10.0 + i, 3.0 * i, 2});
  gt.area = 900.0;
  EXPECT_EQ(oks(gt, gt, k_from_sigmas(coco_sigmas())), 1.0);
}

TEST(OksTest, ScaleDistanceGivesInverseE) {
  for (double area : {1.0, 100.0, 4321.5})
    for (double k : {0.05, 0.1, 0.214}) {
      const double d = std::sqrt(2.0 * area * k * k);
      const auto gt = one_point(5.0, 5.0, area);
      const auto pred = one_point(5.0 + d, 5.0);
      EXPECT_NEAR(oks(pred, gt, {k}), std::exp(-1.0), 1e-12);
    }
}

TEST(OksTest, UnlabeledIgnored) {
  PoseInstance gt = one_point(0, 0);
  gt.keypoints.push_back({50.0, 50.0, 0});
  PoseInstance pred = one_point(0, 0);
  pred.keypoints.push_back({-80.0, 0.0, 2});
  EXPECT_EQ(oks(pred, gt, {0.1, 0.1}), 1.0);
  gt.keypoints[0].visibility = 0;
  EXPECT_THROW(oks(pred, gt, {0.1, 0.1}), std::invalid_argument);
  EXPECT_THROW(oks(pred, gt, {0.1}), std::invalid_argument);
  gt.area = 0.0;
  EXPECT_THROW(oks(pred, gt, {0.1, 0.1}), std::invalid_argument);
}

TEST(ApTest, HandComputedCurve) {
  // Three images, one person each; predictions at OKS 0.9, 0.6, 0.3.
  std::vector<ImageResult> images(3);
  const double oks_values[3] = {0.9, 0.6, 0.3}, scores[3] = {0.9, 0.8, 0.7};
  for (int i = 0; i < 3; ++i) {
    images[i].gts = {one_point(0, 0)};
    images[i].preds = {at_oks(oks_values[i], scores[i])};
  }
  const auto r = average_precision(images, {0.1});
  // @0.5: TP TP FP, precision 1 up to recall 2/3 (levels 0.00..0.66).
  EXPECT_NEAR(r.ap50, 67.0 / 101.0, 1e-12);
  // @0.75: TP FP FP, precision 1 up to recall 1/3 (levels 0.00..0.33).
  EXPECT_NEAR(r.ap75, 34.0 / 101.0, 1e-12);
  EXPECT_NEAR(r.ap_per_threshold.back(), 0.0, 1e-12);
}

TEST(ApTest, PerfectAndEmpty) {
  std::vector<ImageResult> images(4);
  for (auto& im : images) {
    im.gts = {one_point(3, 4)};
    im.preds = {one_point(3, 4)};
  }
  const auto r = average_precision(images, {0.1});
  EXPECT_DOUBLE_EQ(r.ap, 1.0);
  EXPECT_DOUBLE_EQ(r.ar, 1.0);
  std::vector<ImageResult> none(2);
  none[0].gts = {one_point(0, 0)};
  EXPECT_EQ(average_precision(none, {0.1}).ap, 0.0);
}

TEST(ApTest, DuplicatePredictionIsFalsePositive) {
  std::vector<ImageResult> images(1);
  images[0].gts = {one_point(0, 0)};
  images[0].preds = {one_point(0, 0, 100.0, 0.9), one_point(0, 0, 100.0, 0.8)};
  const auto c = match_curve(images, {0.1}, 0.5);
  ASSERT_EQ(c.precision.size(), 2u);
  EXPECT_EQ(c.precision[1], 0.5);
  EXPECT_EQ(c.recall[1], 1.0);
  EXPECT_DOUBLE_EQ(interpolated_ap(c), 1.0);
}

TEST(ApTest, HigherScoreMatchesFirst) {
  std::vector<ImageResult> images(1);
  images[0].gts = {one_point(0, 0)};
  images[0].preds = {at_oks(0.6, 0.2), at_oks(0.95, 0.9)};
  const auto c = match_curve(images, {0.1}, 0.5);
  EXPECT_EQ(c.precision[0], 1.0);
  EXPECT_EQ(c.precision[1], 0.5);
}

TEST(ApTest, MatchesBestUnclaimedGroundTruth) {
  std::vector<ImageResult> images(1);
  images[0].gts = {one_point(0, 0), one_point(30, 0)};
  images[0].preds = {one_point(29, 0, 100.0, 0.9), one_point(1, 0, 100.0, 0.5)};
  const auto c = match_curve(images, {0.1}, 0.5);
  EXPECT_EQ(c.recall.back(), 1.0);
  EXPECT_EQ(c.precision.back(), 1.0);
}

TEST(PckhTest, BoundaryIsInclusive) {
  const auto gt = one_point(0, 0);
  EXPECT_EQ(pckh(one_point(5.0, 0.0), gt, 10.0).correct[0], 1);
  EXPECT_EQ(pckh(one_point(3.0, 4.0), gt, 10.0).correct[0], 1);
  EXPECT_EQ(pckh(one_point(std::nextafter(5.0, 6.0), 0.0), gt, 10.0).correct[0],
            0);
  EXPECT_EQ(pckh(one_point(0.0, 2.0), gt, 10.0, 0.2).correct[0], 1);
  EXPECT_THROW(pckh(gt, gt, 0.0), std::invalid_argument);
}

TEST(PckhTest, AccumulatorSkipsUnlabeled) {
  PoseInstance gt;
  gt.keypoints = {{0, 0, 2}, {10, 0, 0}, {20, 0, 1}};
  PoseInstance pred;
  pred.keypoints = {{1, 0, 2}, {99, 0, 2}, {40, 0, 2}};
  const auto r = pckh(pred, gt, 4.0);
  EXPECT_EQ(r.correct, (std::vector<int>{1, -1, 0}));
  EXPECT_EQ(r.labeled, 2u);
  EXPECT_EQ(r.mean, 0.5);
  PckhAccumulator acc(3);
  acc.add(r);
  acc.add(pckh(gt, gt, 4.0));
  EXPECT_EQ(acc.per_keypoint(), (std::vector<double>{1.0, 0.0, 0.5}));
  EXPECT_DOUBLE_EQ(acc.mean(), 3.0 / 4.0);
}

}  // namespace
}  // namespace fasterpose::metrics
