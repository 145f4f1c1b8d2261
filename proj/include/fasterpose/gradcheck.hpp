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

// Central finite-difference checks of reverse-mode gradients at 64-bit, and a
// randomized suite covering every layer and loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fasterpose/autodiff.hpp"
#include "fasterpose/heads.hpp"
#include "fasterpose/losses.hpp"

namespace fasterpose::gradcheck {

/// Builds a scalar from leaf variables bound in order.
using Function =
    std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;

struct CaseResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Elements whose stencil flips a ReLU; not compared.
  std::size_t nonsmooth = 0;
};

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric,
                             double floor = 1e-4) {
  const double d = std::abs(analytic - numeric);
  return d / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Active set of every ReLU in the graph.
inline std::vector<bool> relu_pattern(const Graph<double>& g) {
  std::vector<bool> out;
  for (std::size_t id = 0; id < g.size(); ++id) {
    if (g.op(id) != "relu" && g.op(id) != "bias_relu") continue;
    for (double v : g.value(id).data()) out.push_back(v > 0.0);
  }
  return out;
}

/// Compares backward() against the fourth-order central difference
/// (f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h for every leaf element.
/// Elements whose stencil flips any ReLU are counted as nonsmooth and skipped.
inline CaseResult check(std::string name, std::vector<Tensor<double>> leaves,
                        const Function& f, double h = 1e-3) {
  auto eval = [&](const std::vector<Tensor<double>>& ls,
                  std::vector<bool>* pattern) {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& l : ls) vars.push_back(g.parameter(l));
    const double v = g.value(f(g, vars))[0];
    if (pattern) *pattern = relu_pattern(g);
    return v;
  };
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& l : leaves) vars.push_back(g.parameter(l));
  const Var<double> out = f(g, vars);
  g.backward(out);
  const std::vector<bool> center = relu_pattern(g);

  CaseResult r{std::move(name), 0.0, 0, 0};
  std::vector<bool> pattern;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor<double> grad = g.grad(vars[li]);
    for (std::size_t i = 0; i < leaves[li].size(); ++i) {
      const double keep = leaves[li][i];
      double fv[4];
      bool smooth = true;
      const double steps[4] = {-2.0 * h, -h, h, 2.0 * h};
      for (int s = 0; s < 4; ++s) {
        leaves[li][i] = keep + steps[s];
        fv[s] = eval(leaves, &pattern);
        smooth = smooth && pattern == center;
      }
      leaves[li][i] = keep;
      if (!smooth) {
        ++r.nonsmooth;
        continue;
      }
      const double numeric =
          (fv[0] - 8.0 * fv[1] + 8.0 * fv[2] - fv[3]) / (12.0 * h);
      r.max_rel_error =
          std::max(r.max_rel_error, relative_error(grad[i], numeric));
      ++r.checked;
    }
  }
  return r;
}

namespace detail {

inline Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Scalar probe sum(w * x) with a fixed random w.
inline Var<double> project(Var<double> x, const Tensor<double>& w) {
  return ad::sum(ad::mul_constant(x, w));
}

inline Tensor<double> soft_target(std::mt19937_64& rng, const Shape& shape) {
  return random_tensor(rng, shape, 0.0, 1.0);
}

/// Moves targets at least 0.02 away from the prediction, off the |e| = 0
/// kink of the regressive losses.
inline void separate(const Tensor<double>& x, Tensor<double>& t, bool sig) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double y = sig ? ops::sigmoid(x[i]) : x[i];
    if (std::abs(y - t[i]) < 0.02) t[i] = y < 0.5 ? y + 0.05 : y - 0.05;
  }
}

inline Tensor<double> binary_target(std::mt19937_64& rng, const Shape& shape) {
  Tensor<double> t(shape);
  std::bernoulli_distribution d(0.3);
  for (auto& v : t.data()) v = d(rng) ? 1.0 : 0.0;
  return t;
}

}  // namespace detail

/// Randomized suite: each repeat adds one case per layer and loss kind.
inline std::vector<CaseResult> run_suite(std::uint64_t seed,
                                         std::size_t repeats) {
  using detail::pick;
  using detail::project;
  using detail::random_tensor;
  std::mt19937_64 rng(seed);
  std::vector<CaseResult> out;

  for (std::size_t rep = 0; rep < repeats; ++rep) {
    const std::string tag = "#" + std::to_string(rep);

    {  // conv2d
      const std::size_t K = pick(rng, 1, 3), s = pick(rng, 1, 2);
      const std::size_t pad = pick(rng, 0, K / 2);
      const std::size_t n_out = pick(rng, 2, 3);
      const std::size_t H = (n_out - 1) * s + K - 2 * pad;
      const std::size_t Cin = pick(rng, 1, 3), Cout = pick(rng, 1, 3);
      const std::size_t B = pick(rng, 1, 2);
      const auto w = random_tensor(rng, {B, Cout, n_out, n_out});
      out.push_back(check(
          "conv2d" + tag,
          {random_tensor(rng, {B, Cin, H, H}),
           random_tensor(rng, {Cout, Cin, K, K})},
          [&, s, pad](Graph<double>&, std::span<const Var<double>> v) {
            return project(ad::conv2d(v[0], v[1], s, pad), w);
          }));
    }
    {  // conv_transpose2d
      const std::size_t K = 2 * pick(rng, 1, 2), s = pick(rng, 1, 2);
      const std::size_t pad = (K - s) / 2;
      const std::size_t Hin = pick(rng, 2, 3), Cin = pick(rng, 1, 3),
                        Cout = pick(rng, 1, 3);
      const std::size_t Hout = (Hin - 1) * s + K - 2 * pad;
      const auto w = random_tensor(rng, {1, Cout, Hout, Hout});
      out.push_back(check(
          "conv_transpose2d" + tag,
          {random_tensor(rng, {1, Cin, Hin, Hin}),
           random_tensor(rng, {Cin, Cout, K, K})},
          [&, s, pad](Graph<double>&, std::span<const Var<double>> v) {
            return project(ad::conv_transpose2d(v[0], v[1], s, pad), w);
          }));
    }
    {  // bias, relu, sigmoid
      const std::size_t C = pick(rng, 1, 4);
      const Shape sh{2, C, 3, 3};
      const auto w = random_tensor(rng, sh);
      out.push_back(check(
          "add_channel_bias" + tag,
          {random_tensor(rng, sh), random_tensor(rng, {C})},
          [&](Graph<double>&, std::span<const Var<double>> v) {
            return project(ad::add_channel_bias(v[0], v[1]), w);
          }));
      // Inputs kept off the kink so the central difference is valid.
      Tensor<double> x = random_tensor(rng, sh);
      for (auto& e : x.data()) e = e < 0 ? e - 0.05 : e + 0.05;
      out.push_back(check("relu" + tag, {x},
                          [&](Graph<double>&, std::span<const Var<double>> v) {
                            return project(ad::relu(v[0]), w);
                          }));
      const auto b = random_tensor(rng, {C});
      Tensor<double> xb = random_tensor(rng, sh);
      for (std::size_t i = 0; i < xb.size(); ++i) {
        const double v = xb[i] + b[i / 9 % C];
        if (std::abs(v) < 0.05) xb[i] += v < 0 ? -0.05 : 0.05;
      }
      out.push_back(check("bias_relu" + tag, {xb, b},
                          [&](Graph<double>&, std::span<const Var<double>> v) {
                            return project(ad::bias_relu(v[0], v[1]), w);
                          }));
      out.push_back(check("sigmoid" + tag, {random_tensor(rng, sh, -4, 4)},
                          [&](Graph<double>&, std::span<const Var<double>> v) {
                            return project(ad::sigmoid(v[0]), w);
                          }));
    }
    {  // depth_to_space / space_to_depth
      const std::size_t L = pick(rng, 1, 3), N = pick(rng, 1, 2);
      const auto w_up = random_tensor(rng, {1, N, 2 * L, 2 * L});
      out.push_back(check(
          "depth_to_space" + tag, {random_tensor(rng, {1, N * L * L, 2, 2})},
          [&, L](Graph<double>&, std::span<const Var<double>> v) {
            return project(ad::depth_to_space(v[0], L), w_up);
          }));
      const auto w_dn = random_tensor(rng, {1, N * L * L, 2, 2});
      out.push_back(check(
          "space_to_depth" + tag, {random_tensor(rng, {1, N, 2 * L, 2 * L})},
          [&, L](Graph<double>&, std::span<const Var<double>> v) {
            return project(ad::space_to_depth(v[0], L), w_dn);
          }));
    }
    {  // heads
      const std::size_t M = pick(rng, 2, 4), N = pick(rng, 1, 2);
      const bool bias = rep % 2 == 1;
      std::vector<HeadSpec> specs = {HeadSpec::lhr(M, N, pick(rng, 1, 3)),
                                     HeadSpec::pixel_shuffle(M, N, 2),
                                     HeadSpec::deconv(M, 2, 4, pick(rng, 1, 2), N)};
      for (auto spec : specs) {
        spec.bias = bias;
        const Head<double> head(spec, rng);
        const std::size_t s = spec.magnification();
        const auto w = random_tensor(rng, {1, N, 2 * s, 2 * s});
        std::vector<Tensor<double>> leaves{random_tensor(rng, {1, M, 2, 2})};
        for (const auto& e : head.entries()) leaves.push_back(e.value);
        out.push_back(check(
            std::string("head_") + std::string(head_kind_name(spec.kind)) + tag,
            leaves, [&](Graph<double>&, std::span<const Var<double>> v) {
              return project(head.forward(v[0], v.subspan(1)), w);
            }));
      }
    }
    {  // backbone
      BackboneSpec spec;
      spec.stages = {{2, 4, 2}, {3, 3, 1}};
      const Backbone<double> bb(spec, rng);
      const auto w = random_tensor(rng, {1, 3, 2, 2});
      std::vector<Tensor<double>> leaves{random_tensor(rng, {1, 1, 4, 4})};
      for (const auto& e : bb.entries()) leaves.push_back(e.value);
      out.push_back(check("backbone" + tag, leaves,
                          [&](Graph<double>&, std::span<const Var<double>> v) {
                            return project(bb.forward(v[0], v.subspan(1)), w);
                          }));
    }
    {  // losses on raw outputs
      const Shape sh{1, 2, 3, 3};
      const LossKind kinds[] = {LossKind::kMse, LossKind::kCeOneHot,
                                LossKind::kCeMask, LossKind::kRce,
                                LossKind::kFocalRce};
      for (auto kind : kinds) {
        for (bool sig : {true, false}) {
          LossSpec spec;
          spec.kind = kind;
          spec.applies_sigmoid = sig;
          spec.gamma = kind == LossKind::kFocalRce ? 0.5 + rep % 3 * 0.5 : 0.0;
          spec.alpha = kind == LossKind::kFocalRce && rep % 2 == 0
                           ? std::optional<double>(0.7)
                           : std::nullopt;
          const bool unit = !sig && kind != LossKind::kMse;
          Tensor<double> x = unit ? random_tensor(rng, sh, 0.05, 0.95)
                                  : random_tensor(rng, sh, -3.0, 3.0);
          Tensor<double> t = detail::soft_target(rng, sh);
          detail::separate(x, t, sig);
          out.push_back(check(
              std::string("loss_") + std::string(loss_kind_name(kind)) +
                  (sig ? "_sigmoid" : "") + tag,
              {x}, [&](Graph<double>&, std::span<const Var<double>> v) {
                return ad::supervised_loss(v[0], t, spec);
              }));
        }
      }
      // Standalone loss nodes on predictions.
      const auto tb = detail::binary_target(rng, sh);
      const double gamma = static_cast<double>(rep % 3);
      const auto y_focal = random_tensor(rng, sh, 0.05, 0.95);
      auto t = detail::soft_target(rng, sh);
      detail::separate(y_focal, t, false);
      out.push_back(check("mse_node" + tag, {random_tensor(rng, sh)},
                          [&](Graph<double>&, std::span<const Var<double>> v) {
                            return ad::mse_loss(v[0], t);
                          }));
      out.push_back(check("ce_node" + tag,
                          {random_tensor(rng, sh, 0.05, 0.95)},
                          [&](Graph<double>&, std::span<const Var<double>> v) {
                            return ad::ce_loss(v[0], tb);
                          }));
      out.push_back(check(
          "focal_rce_node" + tag, {y_focal},
          [&](Graph<double>&, std::span<const Var<double>> v) {
            return ad::focal_rce_loss(v[0], t, std::optional<double>(0.7),
                                      gamma);
          }));
    }
  }
  return out;
}

inline double max_error(const std::vector<CaseResult>& cases) {
  double m = 0.0;
  for (const auto& c : cases) m = std::max(m, c.max_rel_error);
  return m;
}

}  // namespace fasterpose::gradcheck
