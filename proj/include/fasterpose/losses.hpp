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

// Heatmap supervision: MSE, binary cross-entropy on binarized targets, and the
// regressive cross-entropy family -|e|^gamma * log(1 - |e|) with optional
// positive/negative weighting. All losses reduce by the mean over every
// element. Per-element arithmetic runs in double regardless of tensor type.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fasterpose/autodiff.hpp"
#include "fasterpose/heatmap.hpp"
#include "fasterpose/ops.hpp"
#include "fasterpose/tensor.hpp"

namespace fasterpose {

enum class LossKind { kMse, kCeOneHot, kCeMask, kRce, kFocalRce };

inline std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kMse: return "mse";
    case LossKind::kCeOneHot: return "ce_onehot";
    case LossKind::kCeMask: return "ce_mask";
    case LossKind::kRce: return "rce";
    case LossKind::kFocalRce: return "focal_rce";
  }
  return "unknown";
}

inline LossKind parse_loss_kind(std::string_view name) {
  for (auto kind : {LossKind::kMse, LossKind::kCeOneHot, LossKind::kCeMask,
                    LossKind::kRce, LossKind::kFocalRce}) {
    if (loss_kind_name(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "'");
}

struct LossSpec {
  LossKind kind = LossKind::kFocalRce;
  /// Weight of positive (target > 0) elements; negatives get 1 - alpha.
  /// Empty disables the weighting.
  std::optional<double> alpha = 0.7;
  double gamma = 1.0;
  /// Map the raw head output x through sigmoid before the loss.
  bool applies_sigmoid = true;

  void validate() const {
    if (alpha && !(*alpha > 0.0 && *alpha < 1.0)) {
      throw std::invalid_argument("loss alpha must lie in (0,1)");
    }
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
      throw std::invalid_argument("loss gamma must be >= 0");
    }
  }
};

namespace loss {

inline constexpr double kClamp = 1e-12;

enum class BinarizeMode { kOneHot, kMask };

// Element-wise terms.

inline double rce_term(double abs_err) {
  const double a = std::min(abs_err, 1.0 - kClamp);
  return -std::log1p(-a);
}

inline double ce_term(double y, double target) {
  const double p = std::clamp(y, kClamp, 1.0 - kClamp);
  return target > 0.5 ? -std::log(p) : -std::log1p(-p);
}

namespace detail {

template <Real T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <Real T>
void require_unit_range(const Tensor<T>& t, const char* op, const char* what) {
  for (auto v : t.data()) {
    if (!(v >= T{0} && v <= T{1})) {
      throw std::domain_error(std::string(op) + ": " + what +
                              " outside [0,1]");
    }
  }
}

inline double power(double a, double g) {
  if (g == 0.0) return 1.0;
  if (g == 1.0) return a;
  return std::pow(a, g);
}

inline double weight_for(const std::optional<double>& alpha, double target) {
  if (!alpha) return 1.0;
  return target > 0.0 ? *alpha : 1.0 - *alpha;
}

}  // namespace detail

template <Real T>
double mse(const Tensor<T>& y, const Tensor<T>& target) {
  detail::require_same_shape(y, target, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = static_cast<double>(y[i]) - static_cast<double>(target[i]);
    acc += e * e;
  }
  return acc / static_cast<double>(y.size());
}

template <Real T>
double ce_binary(const Tensor<T>& y, const Tensor<T>& target) {
  detail::require_same_shape(y, target, "ce_binary");
  detail::require_unit_range(y, "ce_binary", "prediction");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (target[i] != T{0} && target[i] != T{1}) {
      throw std::domain_error("ce_binary: target is not binary at element " +
                              std::to_string(i));
    }
    acc += ce_term(y[i], target[i]);
  }
  return acc / static_cast<double>(y.size());
}

/// Focal-weighted regressive cross-entropy. With gamma = 0 and no alpha this
/// is plain RCE.
template <Real T>
double focal_rce(const Tensor<T>& y, const Tensor<T>& target,
                 std::optional<double> alpha, double gamma) {
  detail::require_same_shape(y, target, "focal_rce");
  detail::require_unit_range(y, "focal_rce", "prediction");
  detail::require_unit_range(target, "focal_rce", "target");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = std::abs(static_cast<double>(y[i]) - target[i]);
    if (a == 0.0) continue;
    acc += detail::weight_for(alpha, target[i]) * std::pow(a, gamma) *
           rce_term(a);
  }
  return acc / static_cast<double>(y.size());
}

template <Real T>
double rce(const Tensor<T>& y, const Tensor<T>& target) {
  return focal_rce(y, target, std::nullopt, 0.0);
}

/// Binary target from a Gaussian heatmap; the last two axes are the maps.
/// kOneHot marks the first maximum of each non-zero map; kMask marks every
/// positive element.
template <Real T>
Tensor<T> binarize_target(const Tensor<T>& heatmap, BinarizeMode mode) {
  if (heatmap.rank() < 2) {
    throw ShapeError("binarize_target: heatmap rank must be >= 2");
  }
  Tensor<T> out = Tensor<T>::zeros_like(heatmap);
  if (mode == BinarizeMode::kMask) {
    for (std::size_t i = 0; i < heatmap.size(); ++i)
      out[i] = heatmap[i] > T{0} ? T{1} : T{0};
    return out;
  }
  const std::size_t cells =
      heatmap.dim(heatmap.rank() - 1) * heatmap.dim(heatmap.rank() - 2);
  for (std::size_t base = 0; base < heatmap.size(); base += cells) {
    std::size_t best = base;
    for (std::size_t i = base; i < base + cells; ++i)
      if (heatmap[i] > heatmap[best]) best = i;
    if (heatmap[best] > T{0}) out[best] = T{1};
  }
  return out;
}

inline Tensor<double> binarize_target(const HeatmapSet& heatmap,
                                      BinarizeMode mode) {
  return binarize_target(heatmap.maps, mode);
}

/// The tensor each loss kind compares against: the Gaussian heatmap itself
/// for MSE/RCE, or its binarized form for the CE variants.
template <Real T>
Tensor<T> effective_target(const LossSpec& spec, const Tensor<T>& heatmap) {
  switch (spec.kind) {
    case LossKind::kCeOneHot:
      return binarize_target(heatmap, BinarizeMode::kOneHot);
    case LossKind::kCeMask:
      return binarize_target(heatmap, BinarizeMode::kMask);
    default:
      return heatmap;
  }
}

namespace detail {

// Per-element loss and d(loss)/dx for raw output x against target t. The
// complement 1 - |e| is formed from sigmoid(-x) so wrong-sign saturation keeps
// its gradient.
struct ElementLoss {
  double value = 0.0;
  double grad = 0.0;
};

inline ElementLoss element_loss(const LossSpec& spec, double x, double t) {
  const bool sig = spec.applies_sigmoid;
  double y = x, one_minus_y = 1.0 - x;
  if (sig) {
    // sigmoid(x) and sigmoid(-x) from one exponential.
    const double z = std::exp(-std::abs(x));
    const double hi = 1.0 / (1.0 + z), lo = z / (1.0 + z);
    y = x >= 0.0 ? hi : lo;
    one_minus_y = x >= 0.0 ? lo : hi;
  }
  const double dy_dx = sig ? y * one_minus_y : 1.0;
  ElementLoss out;
  switch (spec.kind) {
    case LossKind::kMse: {
      const double e = y - t;
      out.value = e * e;
      out.grad = 2.0 * e * dy_dx;
      break;
    }
    case LossKind::kCeOneHot:
    case LossKind::kCeMask: {
      if (sig) {
        out.value = 0.0 - std::log(std::max(t > 0.5 ? y : one_minus_y, kClamp));
        out.grad = y - t;
      } else {
        out.value = ce_term(y, t);
        const double p = std::clamp(y, kClamp, 1.0 - kClamp);
        out.grad = t > 0.5 ? -1.0 / p : 1.0 / (1.0 - p);
      }
      break;
    }
    case LossKind::kRce:
    case LossKind::kFocalRce: {
      const double gamma = spec.kind == LossKind::kRce ? 0.0 : spec.gamma;
      const auto& alpha =
          spec.kind == LossKind::kRce ? std::optional<double>{} : spec.alpha;
      const double e = y - t;
      const double a = std::abs(e);
      if (a == 0.0) break;
      // 1 - |e| without cancellation.
      double comp = e > 0.0 ? one_minus_y + t : y + (1.0 - t);
      comp = std::max(comp, kClamp);
      const double nll = 0.0 - std::log(comp);
      const double w = weight_for(alpha, t);
      const double pow_g = power(a, gamma);
      out.value = w * pow_g * nll;
      double d_da = pow_g / comp;
      if (gamma > 0.0) d_da += gamma * power(a, gamma - 1.0) * nll;
      out.grad = w * (e > 0.0 ? 1.0 : -1.0) * d_da * dy_dx;
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Loss of raw head output x against a Gaussian heatmap target.
template <Real T>
double loss_value(const LossSpec& spec, const Tensor<T>& x,
                  const Tensor<T>& heatmap) {
  detail::require_same_shape(x, heatmap, "loss_value");
  spec.validate();
  const Tensor<T> target = effective_target(spec, heatmap);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += detail::element_loss(spec, x[i], target[i]).value;
  return acc / static_cast<double>(x.size());
}

/// Closed-form gradient of loss_value with respect to x.
template <Real T>
Tensor<T> loss_gradient(const LossSpec& spec, const Tensor<T>& x,
                        const Tensor<T>& heatmap) {
  detail::require_same_shape(x, heatmap, "loss_gradient");
  spec.validate();
  const Tensor<T> target = effective_target(spec, heatmap);
  Tensor<T> grad = Tensor<T>::zeros_like(x);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    grad[i] = static_cast<T>(
        detail::element_loss(spec, x[i], target[i]).grad * inv_n);
  return grad;
}

}  // namespace loss

namespace ad {

/// Mean squared error node on predictions y.
template <Real T>
Var<T> mse_loss(Var<T> y, Tensor<T> target) {
  const double value = loss::mse(y.value(), target);
  const std::size_t yi = y.id;
  return y.graph->add_node(
      "mse_loss", {yi}, Tensor<T>({1}, static_cast<T>(value)),
      [yi, target = std::move(target)](Graph<T>& g, std::size_t self) {
        const auto& yv = g.value(yi);
        const T scale = g.grad(self)[0] * T{2} / static_cast<T>(yv.size());
        Tensor<T> dy = Tensor<T>::zeros_like(yv);
        for (std::size_t i = 0; i < dy.size(); ++i)
          dy[i] = scale * (yv[i] - target[i]);
        g.accumulate(yi, dy);
      });
}

/// Binary cross-entropy node on probabilities y.
template <Real T>
Var<T> ce_loss(Var<T> y, Tensor<T> target) {
  const double value = loss::ce_binary(y.value(), target);
  const std::size_t yi = y.id;
  return y.graph->add_node(
      "ce_loss", {yi}, Tensor<T>({1}, static_cast<T>(value)),
      [yi, target = std::move(target)](Graph<T>& g, std::size_t self) {
        const auto& yv = g.value(yi);
        const double scale =
            static_cast<double>(g.grad(self)[0]) / static_cast<double>(yv.size());
        Tensor<T> dy = Tensor<T>::zeros_like(yv);
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double p = std::clamp(static_cast<double>(yv[i]), loss::kClamp,
                                      1.0 - loss::kClamp);
          dy[i] = static_cast<T>(
              scale * (target[i] > T{0.5} ? -1.0 / p : 1.0 / (1.0 - p)));
        }
        g.accumulate(yi, dy);
      });
}

/// Focal regressive cross-entropy node on predictions y in [0,1].
template <Real T>
Var<T> focal_rce_loss(Var<T> y, Tensor<T> target, std::optional<double> alpha,
                      double gamma) {
  const double value = loss::focal_rce(y.value(), target, alpha, gamma);
  const std::size_t yi = y.id;
  return y.graph->add_node(
      "focal_rce_loss", {yi}, Tensor<T>({1}, static_cast<T>(value)),
      [yi, target = std::move(target), alpha, gamma](Graph<T>& g,
                                                     std::size_t self) {
        const auto& yv = g.value(yi);
        const double scale =
            static_cast<double>(g.grad(self)[0]) / static_cast<double>(yv.size());
        Tensor<T> dy = Tensor<T>::zeros_like(yv);
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double e = static_cast<double>(yv[i]) - target[i];
          const double a = std::abs(e);
          if (a == 0.0) continue;
          const double comp = std::max(1.0 - a, loss::kClamp);
          double d_da = std::pow(a, gamma) / comp;
          if (gamma > 0.0)
            d_da += gamma * std::pow(a, gamma - 1.0) * -std::log(comp);
          dy[i] = static_cast<T>(scale *
                                 loss::detail::weight_for(alpha, target[i]) *
                                 (e > 0.0 ? 1.0 : -1.0) * d_da);
        }
        g.accumulate(yi, dy);
      });
}

/// Training loss on raw head output x, using the closed-form gradient.
template <Real T>
Var<T> supervised_loss(Var<T> x, const Tensor<T>& heatmap,
                       const LossSpec& spec) {
  const double value = loss::loss_value(spec, x.value(), heatmap);
  Tensor<T> dx = loss::loss_gradient(spec, x.value(), heatmap);
  const std::size_t xi = x.id;
  return x.graph->add_node(
      std::string("loss_") + std::string(loss_kind_name(spec.kind)), {xi},
      Tensor<T>({1}, static_cast<T>(value)),
      [xi, dx = std::move(dx)](Graph<T>& g, std::size_t self) {
        Tensor<T> scaled = dx;
        const T s = g.grad(self)[0];
        for (auto& v : scaled.data()) v *= s;
        g.accumulate(xi, scaled);
      });
}

}  // namespace ad
}  // namespace fasterpose
