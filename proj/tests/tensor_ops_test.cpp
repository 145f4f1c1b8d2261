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
#include <limits>
#include <random>
#include <tuple>

#include <gtest/gtest.h>

#include "fasterpose/ops.hpp"
#include "fasterpose/tensor.hpp"

namespace fasterpose {
namespace {

template <Real T>
Tensor<T> random(std::mt19937_64& rng, Shape shape) {
  Tensor<T> t(std::move(shape));
  t.fill_uniform(rng, T(-1), T(1));
  return t;
}

// Direct nested-loop cross-correlation; padded taps read zero.
template <Real T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& w, std::size_t s,
                     std::size_t p) {
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - K) / s + 1;
  Tensor<T> out({B, Cout, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Cout; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          T acc{0};
          for (std::size_t c = 0; c < Cin; ++c)
            for (std::size_t kh = 0; kh < K; ++kh)
              for (std::size_t kw = 0; kw < K; ++kw) {
                const long y = static_cast<long>(i * s + kh) - static_cast<long>(p);
                const long xx = static_cast<long>(j * s + kw) - static_cast<long>(p);
                T v{0};
                if (y >= 0 && xx >= 0 && y < static_cast<long>(H) &&
                    xx < static_cast<long>(W))
                  v = x.at(b, c, static_cast<std::size_t>(y),
                           static_cast<std::size_t>(xx));
                acc += w.at(o, c, kh, kw) * v;
              }
          out.at(b, o, i, j) = acc;
        }
  return out;
}

// Scatter form of the transposed convolution; kernel is (Cin, Cout, K, K).
Tensor<double> naive_conv_transpose(const Tensor<double>& x,
                                    const Tensor<double>& w, std::size_t s,
                                    std::size_t p) {
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(1), K = w.dim(2);
  const std::size_t Ho = (H - 1) * s + K - 2 * p, Wo = (W - 1) * s + K - 2 * p;
  Tensor<double> out({B, Cout, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < Cin; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
          for (std::size_t o = 0; o < Cout; ++o)
            for (std::size_t kh = 0; kh < K; ++kh)
              for (std::size_t kw = 0; kw < K; ++kw) {
                const long y = static_cast<long>(i * s + kh) - static_cast<long>(p);
                const long xx = static_cast<long>(j * s + kw) - static_cast<long>(p);
                if (y < 0 || xx < 0 || y >= static_cast<long>(Ho) ||
                    xx >= static_cast<long>(Wo))
                  continue;
                out.at(b, o, static_cast<std::size_t>(y),
                       static_cast<std::size_t>(xx)) +=
                    x.at(b, c, i, j) * w.at(c, o, kh, kw);
              }
  return out;
}

TEST(TensorTest, ConstructionAndAccess) {
  Tensor<float> t({2, 3, 4, 5}, 1.5f);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.rank(), 4u);
  t.at(1, 2, 3, 4) = 7.f;
  EXPECT_EQ(t[119], 7.f);
  EXPECT_EQ(t.reshaped({120}).dim(0), 120u);
}

TEST(TensorTest, RejectsBadShapes) {
  EXPECT_THROW(Tensor<float>(Shape{}), ShapeError);
  EXPECT_THROW(Tensor<float>({1, 2, 3, 4, 5}), ShapeError);
  EXPECT_THROW(Tensor<float>({3, 0}), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 3}).reshaped({5}), ShapeError);
}

TEST(TensorTest, FiniteScan) {
  Tensor<float> f({8});
  EXPECT_TRUE(f.all_finite());
  f[3] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(f.all_finite());
  Tensor<double> d({8});
  d[7] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(d.all_finite());
  EXPECT_THROW(d.check_finite("d"), NumericError);
  d[7] = std::numeric_limits<double>::denorm_min();
  EXPECT_TRUE(d.all_finite());
}

class ConvOracleTest
    : public ::testing::TestWithParam<
          std::tuple<std::size_t, std::size_t, std::size_t>> {};

TEST_P(ConvOracleTest, MatchesNestedLoopExactlyFloat) {
  const auto [K, s, p] = GetParam();
  std::mt19937_64 rng(K * 100 + s * 10 + p);
  const std::size_t H = 7 + (K - s) % 2 + s, W = 9 + s;
  for (std::size_t hh : {H, H + 1})
    for (std::size_t ww : {W, W + 1}) {
      if ((hh + 2 * p - K) % s || (ww + 2 * p - K) % s) continue;
      auto x = random<float>(rng, {2, 3, hh, ww});
      auto w = random<float>(rng, {5, 3, K, K});
      EXPECT_EQ(ops::conv2d(x, w, s, p), naive_conv(x, w, s, p));
    }
}

TEST_P(ConvOracleTest, MatchesNestedLoopExactlyDouble) {
  const auto [K, s, p] = GetParam();
  std::mt19937_64 rng(K * 7 + s * 3 + p);
  for (std::size_t hh = 6; hh < 6 + s; ++hh) {
    if ((hh + 2 * p - K) % s) continue;
    auto x = random<double>(rng, {1, 4, hh, hh});
    auto w = random<double>(rng, {3, 4, K, K});
    EXPECT_EQ(ops::conv2d(x, w, s, p), naive_conv(x, w, s, p));
  }
}

INSTANTIATE_TEST_SUITE_P(
    Geometries, ConvOracleTest,
    ::testing::Values(std::make_tuple(1, 1, 0), std::make_tuple(3, 1, 1),
                      std::make_tuple(3, 2, 1), std::make_tuple(4, 2, 1),
                      std::make_tuple(2, 2, 0), std::make_tuple(5, 1, 2),
                      std::make_tuple(3, 1, 0)));

TEST(ConvTest, ManyOutputChannels) {
  std::mt19937_64 rng(5);
  auto x = random<float>(rng, {3, 17, 11, 13});
  auto w = random<float>(rng, {67, 17, 1, 1});
  EXPECT_EQ(ops::conv2d(x, w, 1, 0), naive_conv(x, w, 1, 0));
  auto w3 = random<float>(rng, {33, 17, 3, 3});
  EXPECT_EQ(ops::conv2d(x, w3, 1, 1), naive_conv(x, w3, 1, 1));
}

TEST(ConvTest, ShapeErrors) {
  Tensor<float> x({1, 3, 8, 8}), w({4, 2, 3, 3});
  EXPECT_THROW(ops::conv2d(x, w, 1, 1), ShapeError);
  Tensor<float> w2({4, 3, 3, 3});
  EXPECT_THROW(ops::conv2d(x, w2, 2, 0), ShapeError);
  EXPECT_THROW(ops::conv2d(x, w2, 0, 1), ShapeError);
  EXPECT_THROW(ops::conv2d(Tensor<float>({3, 8, 8}), w2, 1, 1), ShapeError);
}

TEST(ConvTest, RejectsNonFiniteInput) {
  Tensor<float> x({1, 1, 4, 4}), w({1, 1, 3, 3});
  x[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(ops::conv2d(x, w, 1, 1), NumericError);
}

TEST(ConvTransposeTest, OutputExtent) {
  Tensor<float> x({1, 2, 8, 6}), w({2, 3, 4, 4});
  const auto y = ops::conv_transpose2d(x, w, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 16, 12}));
  EXPECT_THROW(ops::conv_transpose2d(x, Tensor<float>({3, 3, 4, 4}), 2, 1),
               ShapeError);
}

TEST(ConvTransposeTest, MatchesScatterOracle) {
  std::mt19937_64 rng(11);
  for (auto [K, s, p] : {std::tuple<std::size_t, std::size_t, std::size_t>{4, 2, 1},
                         {2, 2, 0}, {3, 1, 1}, {3, 2, 0}, {4, 1, 0}}) {
    auto x = random<double>(rng, {2, 3, 5, 4});
    auto w = random<double>(rng, {3, 2, K, K});
    const auto got = ops::conv_transpose2d(x, w, s, p);
    const auto want = naive_conv_transpose(x, w, s, p);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_NEAR(got[i], want[i], 1e-12) << "K=" << K << " s=" << s;
  }
}

TEST(ConvTransposeTest, AdjointIdentity) {
  std::mt19937_64 rng(12);
  for (auto [K, s, p] : {std::tuple<std::size_t, std::size_t, std::size_t>{4, 2, 1},
                         {2, 2, 0}, {3, 1, 1}, {1, 1, 0}}) {
    // <conv(u), v> == <u, conv_transpose(v)> with the same kernel.
    auto w = random<double>(rng, {4, 3, K, K});
    auto v = random<double>(rng, {2, 4, 6, 5});
    const auto tv = ops::conv_transpose2d(v, w, s, p);
    auto u = random<double>(rng, tv.shape());
    const auto cu = ops::conv2d(u, w, s, p);
    ASSERT_EQ(cu.shape(), v.shape());
    const double lhs = dot(cu, v), rhs = dot(u, tv);
    EXPECT_LT(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)), 1e-12);
  }
}

TEST(ConvGradTest, KernelGradIsAdjointOfConv) {
  std::mt19937_64 rng(13);
  auto x = random<double>(rng, {2, 3, 9, 9});
  auto w = random<double>(rng, {4, 3, 3, 3});
  auto dy = random<double>(rng, {2, 4, 5, 5});
  const auto g = ops::conv_geometry(9, 9, 3, 2, 1);
  const auto dw = ops::conv2d_kernel_grad(x, dy, w.shape(), g);
  // conv is linear in w, so <conv(x; w), dy> == <w, dw>.
  const double lhs = dot(ops::conv2d(x, w, 2, 1), dy), rhs = dot(w, dw);
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(SpaceDepthTest, IndexRule) {
  Tensor<float> x({1, 8, 2, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i);
  const auto y = ops::depth_to_space(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 4, 6}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 3; ++w)
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t j = 0; j < 2; ++j)
            EXPECT_EQ(y.at(0, c, h * 2 + i, w * 2 + j),
                      x.at(0, c * 4 + i * 2 + j, h, w));
}

TEST(SpaceDepthTest, RoundTripIsExact) {
  std::mt19937_64 rng(14);
  for (std::size_t L : {1, 2, 3, 4}) {
    auto x = random<float>(rng, {2, 3 * L * L, 3, 5});
    EXPECT_EQ(ops::space_to_depth(ops::depth_to_space(x, L), L), x);
    auto z = random<float>(rng, {2, 3, 3 * L, 2 * L});
    EXPECT_EQ(ops::depth_to_space(ops::space_to_depth(z, L), L), z);
  }
  EXPECT_THROW(ops::depth_to_space(Tensor<float>({1, 6, 2, 2}), 2), ShapeError);
  EXPECT_THROW(ops::space_to_depth(Tensor<float>({1, 1, 5, 4}), 2), ShapeError);
}

TEST(SigmoidTest, StableAtExtremes) {
  EXPECT_EQ(ops::sigmoid(0.0), 0.5);
  EXPECT_GT(ops::sigmoid(-800.0), -1e-300);
  EXPECT_EQ(ops::sigmoid(800.0), 1.0);
  EXPECT_NEAR(ops::sigmoid(-15.0), 3.059022269256247e-07, 1e-20);
}

}  // namespace
}  // namespace fasterpose
