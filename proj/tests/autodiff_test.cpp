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
#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fasterpose/autodiff.hpp"
#include "fasterpose/checkpoint.hpp"
#include "fasterpose/gradcheck.hpp"
#include "fasterpose/optim.hpp"

namespace fasterpose {
namespace {

Var<double> add(Var<double> a, Var<double> b) {
  Tensor<double> v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.value()[i];
  return a.graph->add_node("add", {a.id, b.id}, std::move(v),
                           [](Graph<double>& g, std::size_t id) {
                             g.accumulate(g.inputs(id)[0], g.grad(id));
                             g.accumulate(g.inputs(id)[1], g.grad(id));
                           });
}

TEST(GraphTest, SharedInputAccumulates) {
  Graph<double> g;
  auto x = g.parameter(Tensor<double>({2}, std::vector<double>{2, -3}));
  // sum(x * c) + sum(x) has gradient c + 1.
  Tensor<double> c({2}, std::vector<double>{5, 7});
  auto total = add(ad::sum(ad::mul_constant(x, c)), ad::sum(x));
  g.backward(total);
  EXPECT_EQ(total.value()[0], 2.0 * 5 - 3.0 * 7 + 2 - 3);
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(x.grad()[1], 8.0);
}

TEST(GraphTest, ConstantsGetNoGradient) {
  Graph<double> g;
  auto c = g.constant(Tensor<double>({3}, 1.0));
  auto p = g.parameter(Tensor<double>({3}, 2.0));
  auto unused = g.parameter(Tensor<double>({2}, 2.0));
  auto l = ad::sum(ad::mul_constant(p, Tensor<double>({3}, 4.0)));
  (void)ad::sum(c);
  g.backward(l);
  EXPECT_TRUE(c.grad().empty());
  EXPECT_EQ(p.grad(), Tensor<double>({3}, 4.0));
  EXPECT_EQ(unused.grad(), Tensor<double>({2}, 0.0));
}

TEST(GraphTest, RejectsCyclesAndNonScalarLoss) {
  Graph<double> g;
  auto p = g.parameter(Tensor<double>({2}, 1.0));
  EXPECT_THROW(g.add_node("self", {1}, Tensor<double>({2}), nullptr),
               GraphError);
  EXPECT_THROW(g.add_node("later", {0, 5}, Tensor<double>({2}), nullptr),
               GraphError);
  EXPECT_THROW(g.backward(p), GraphError);
  Graph<double> other;
  auto q = other.parameter(Tensor<double>({1}, 1.0));
  EXPECT_THROW(g.backward(q), GraphError);
}

TEST(GraphTest, RepeatedBackwardResetsGradients) {
  Graph<double> g;
  auto p = g.parameter(Tensor<double>({2}, 1.0));
  auto l = ad::sum(ad::mul_constant(p, Tensor<double>({2}, 3.0)));
  g.backward(l);
  g.backward(l);
  EXPECT_EQ(p.grad(), Tensor<double>({2}, 3.0));
}

TEST(GraphTest, BiasReluMatchesSeparateOps) {
  std::mt19937_64 rng(3);
  Tensor<double> x({2, 3, 4, 4}), b({3});
  x.fill_uniform(rng, -1.0, 1.0);
  b.fill_uniform(rng, -0.5, 0.5);
  Tensor<double> w(x.shape());
  w.fill_uniform(rng, -1.0, 1.0);
  Graph<double> g1, g2;
  auto x1 = g1.parameter(x), b1 = g1.parameter(b);
  auto y1 = ad::bias_relu(x1, b1);
  g1.backward(ad::sum(ad::mul_constant(y1, w)));
  auto x2 = g2.parameter(x), b2 = g2.parameter(b);
  auto y2 = ad::relu(ad::add_channel_bias(x2, b2));
  g2.backward(ad::sum(ad::mul_constant(y2, w)));
  EXPECT_EQ(y1.value(), y2.value());
  EXPECT_EQ(x1.grad(), x2.grad());
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b1.grad()[c], b2.grad()[c], 1e-12);
}

TEST(GradcheckTest, SuiteAgreesWithFiniteDifferences) {
  std::size_t cases = 0, checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto results = gradcheck::run_suite(seed, 2);
    for (const auto& r : results) {
      EXPECT_LT(r.max_rel_error, 1e-6) << r.name << " seed " << seed;
      EXPECT_GT(r.checked, 0u) << r.name;
      checked += r.checked;
    }
    cases += results.size();
    worst = std::max(worst, gradcheck::max_error(results));
  }
  EXPECT_GE(cases, 100u);
  EXPECT_LT(worst, 1e-6);
  EXPECT_GT(checked, 1000u);
}

TEST(GradcheckTest, DetectsAWrongGradient) {
  // A deliberately broken op: forward 2x, backward claims 3.
  gradcheck::Function f = [](Graph<double>& g,
                             std::span<const Var<double>> in) {
    Tensor<double> v = in[0].value();
    for (auto& e : v.data()) e *= 2.0;
    auto y = g.add_node("broken", {in[0].id}, v,
                        [](Graph<double>& gg, std::size_t id) {
                          Tensor<double> d = gg.grad(id);
                          for (auto& e : d.data()) e *= 3.0;
                          gg.accumulate(gg.inputs(id)[0], d);
                        });
    return ad::sum(y);
  };
  const auto r = gradcheck::check("broken", {Tensor<double>({4}, 0.3)}, f);
  EXPECT_NEAR(r.max_rel_error, 1.0 / 3.0, 1e-6);
}

TEST(GradcheckTest, RelativeErrorFloor) {
  EXPECT_EQ(gradcheck::relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(1e-9, 0.0), 1e-5);
}

TEST(AdamTest, ThreeStepsMatchClosedForm) {
  // With a constant gradient g the bias-corrected moments are exactly g and
  // g^2, so each step moves by lr * g / (|g| + eps).
  AdamHyper h;
  h.lr = 0.01;
  Tensor<double> p({3}, std::vector<double>{1.0, -2.0, 0.5});
  const Tensor<double> g({3}, std::vector<double>{0.3, -4.0, 1e-3});
  AdamState<double> st;
  for (int i = 0; i < 3; ++i) adam_update(p, g, st, h);
  const double start[3] = {1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    const double want = start[i] - 3.0 * h.lr * g[i] / (std::abs(g[i]) + h.eps);
    EXPECT_NEAR(p[i], want, 1e-12);
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(AdamTest, VaryingGradientHandComputed) {
  AdamHyper h;
  h.lr = 0.1;
  Tensor<double> p({1}, 0.0);
  AdamState<double> st;
  const double grads[3] = {1.0, -2.0, 0.5};
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 3; ++t) {
    adam_update(p, Tensor<double>({1}, grads[t - 1]), st, h);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) /
         (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p[0], x, 1e-14);
  // Step 1 always moves by lr regardless of the gradient scale.
  Tensor<double> q({1}, 0.0);
  AdamState<double> s2;
  adam_update(q, Tensor<double>({1}, 1e4), s2, h);
  EXPECT_NEAR(q[0], -0.1, 1e-9);
}

TEST(AdamTest, ShapeMismatch) {
  Tensor<float> p({2});
  AdamState<float> st;
  EXPECT_THROW(adam_update(p, Tensor<float>({3}), st, AdamHyper{}), ShapeError);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  std::mt19937_64 rng(8);
  std::vector<NamedTensor<float>> entries;
  Tensor<float> a({2, 3, 1, 1}), b({5});
  a.fill_uniform(rng, -1.f, 1.f);
  b.fill_uniform(rng, -1.f, 1.f);
  entries.push_back({"head.weight", a});
  entries.push_back({"head.bias", b});
  const auto path =
      (std::filesystem::temp_directory_path() / "fasterpose_ckpt_test.bin")
          .string();
  checkpoint::save(path, entries);
  const auto back = checkpoint::load<float>(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "head.weight");
  EXPECT_EQ(back[0].value, a);
  EXPECT_EQ(back[1].value, b);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsCorruptStreams) {
  std::stringstream bad("not a checkpoint at all");
  EXPECT_THROW(checkpoint::read<float>(bad), CheckpointError);
  std::stringstream ss;
  checkpoint::write<float>(ss, {{"w", Tensor<float>({4}, 1.f)}});
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(checkpoint::read<float>(truncated), CheckpointError);
  EXPECT_THROW(checkpoint::load<float>("/nonexistent/dir/x.ckpt"),
               CheckpointError);
}

}  // namespace
}  // namespace fasterpose
