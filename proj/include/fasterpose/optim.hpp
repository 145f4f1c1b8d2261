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

#include <cmath>
#include <cstdint>

#include "fasterpose/tensor.hpp"

namespace fasterpose {

/// Moment accumulators for one parameter tensor.
template <Real T>
struct AdamState {
  std::uint64_t step = 0;
  Tensor<T> first_moment;
  Tensor<T> second_moment;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step, in place. The state is lazily sized on the
/// first call.
template <Real T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state,
                 const AdamHyper& h) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("adam_update: parameter " + to_string(param.shape()) +
                     " vs gradient " + to_string(grad.shape()));
  }
  if (state.first_moment.empty()) {
    state.first_moment = Tensor<T>::zeros_like(param);
    state.second_moment = Tensor<T>::zeros_like(param);
  } else if (state.first_moment.shape() != param.shape()) {
    throw ShapeError("adam_update: state " +
                     to_string(state.first_moment.shape()) + " vs parameter " +
                     to_string(param.shape()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr), eps = static_cast<T>(h.eps);
  auto m = state.first_moment.data();
  auto v = state.second_moment.data();
  auto p = param.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (T{1} - b1) * g[i];
    v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
    const T m_hat = m[i] / c1;
    const T v_hat = v[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace fasterpose
