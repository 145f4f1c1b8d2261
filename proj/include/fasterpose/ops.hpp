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

// Raw tensor kernels. These carry no graph bookkeeping; autodiff.hpp wraps
// them into differentiable nodes.

#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fasterpose/tensor.hpp"

namespace fasterpose::ops {

/// Geometry of a square-kernel cross-correlation from an input plane of
/// in_h x in_w to an output plane of out_h x out_w.
struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t kernel = 1, stride = 1, padding = 0;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                                   std::size_t stride, std::size_t padding,
                                   const char* op) {
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be > 0");
  if (kernel == 0) throw ShapeError(std::string(op) + ": kernel must be > 0");
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel || (padded - kernel) % stride != 0) {
    throw ShapeError(std::string(op) + ": extent " + std::to_string(in) +
                     " with kernel " + std::to_string(kernel) + ", stride " +
                     std::to_string(stride) + ", padding " +
                     std::to_string(padding) +
                     " gives a non-integer output extent");
  }
  return (padded - kernel) / stride + 1;
}

inline ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w,
                                  std::size_t kernel, std::size_t stride,
                                  std::size_t padding) {
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  g.padding = padding;
  g.out_h = conv_out_extent(in_h, kernel, stride, padding, "conv2d");
  g.out_w = conv_out_extent(in_w, kernel, stride, padding, "conv2d");
  return g;
}

/// Geometry of the transposed convolution taking an in_h x in_w plane up to
/// (in - 1) * stride - 2 * padding + kernel. Expressed as the conv2d geometry
/// it is the adjoint of, so in/out are swapped relative to the caller.
inline ConvGeometry conv_transpose_geometry(std::size_t in_h, std::size_t in_w,
                                            std::size_t kernel,
                                            std::size_t stride,
                                            std::size_t padding) {
  if (stride == 0 || kernel == 0) {
    throw ShapeError("conv_transpose2d: stride and kernel must be > 0");
  }
  auto up = [&](std::size_t in) {
    const std::size_t full = (in - 1) * stride + kernel;
    if (full <= 2 * padding) {
      throw ShapeError("conv_transpose2d: padding " + std::to_string(padding) +
                       " consumes the whole output");
    }
    return full - 2 * padding;
  };
  ConvGeometry g;
  g.in_h = up(in_h);
  g.in_w = up(in_w);
  g.out_h = in_h;
  g.out_w = in_w;
  g.kernel = kernel;
  g.stride = stride;
  g.padding = padding;
  return g;
}

namespace detail {

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

// Output columns [lo, hi) of a kernel tap read inside the input row.
inline std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g,
                                                         std::size_t kw) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto k = static_cast<std::ptrdiff_t>(kw);
  const auto in_w = static_cast<std::ptrdiff_t>(g.in_w);
  std::ptrdiff_t lo = 0;
  while (lo * s + k - pad < 0) ++lo;
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(g.out_w);
  while (hi > lo && (hi - 1) * s + k - pad >= in_w) --hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// col has shape (channels * K * K, out_h * out_w); row index is
// (c * K + kh) * K + kw so accumulation over rows visits (c, kh, kw) in
// lexicographic order.
template <Real T>
void im2col(const T* plane, std::size_t channels, const ConvGeometry& g,
            T* col) {
  const std::size_t K = g.kernel;
  const std::size_t P = g.out_h * g.out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = plane + c * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < K; ++kh) {
      for (std::size_t kw = 0; kw < K; ++kw) {
        T* dst = col + ((c * K + kh) * K + kw) * P;
        const auto [lo, hi] = valid_columns(g, kw);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                          static_cast<std::ptrdiff_t>(g.padding);
          T* row = dst + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
            for (std::size_t ow = 0; ow < g.out_w; ++ow) row[ow] = T{0};
            continue;
          }
          const T* src_row = src + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < lo; ++ow) row[ow] = T{0};
          for (std::size_t ow = lo; ow < hi; ++ow)
            row[ow] = src_row[ow * g.stride + kw - g.padding];
          for (std::size_t ow = hi; ow < g.out_w; ++ow) row[ow] = T{0};
        }
      }
    }
  }
}

// Same values as im2col laid out (out_h * out_w, channels * K * K). scratch
// must hold channels * K * K * out_h * out_w elements.
template <Real T>
void im2col_transposed(const T* plane, std::size_t channels,
                       const ConvGeometry& g, T* col_t, T* scratch) {
  const std::size_t R = channels * g.kernel * g.kernel;
  const std::size_t P = g.out_h * g.out_w;
  const T* col = plane;
  if (!is_pointwise(g)) {
    im2col(plane, channels, g, scratch);
    col = scratch;
  }
  constexpr std::size_t kBlock = 16;
  for (std::size_t r0 = 0; r0 < R; r0 += kBlock)
    for (std::size_t p0 = 0; p0 < P; p0 += kBlock) {
      const std::size_t r1 = std::min(R, r0 + kBlock);
      const std::size_t p1 = std::min(P, p0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t q = p0; q < p1; ++q) col_t[q * R + r] = col[r * P + q];
    }
}

template <Real T>
void col2im_add(const T* col, std::size_t channels, const ConvGeometry& g,
                T* plane) {
  const std::size_t K = g.kernel;
  const std::size_t P = g.out_h * g.out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = plane + c * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < K; ++kh) {
      for (std::size_t kw = 0; kw < K; ++kw) {
        const T* src = col + ((c * K + kh) * K + kw) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst_row = dst + static_cast<std::size_t>(ih) * g.in_w;
          const T* src_row = src + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            dst_row[iw] += src_row[ow];
          }
        }
      }
    }
  }
}

// GEMM on register tiles of kRowTile rows by NV vectors. Every output element
// accumulates its terms in ascending reduction-index order with separate
// multiply and add, so results equal a naive loop bit for bit.
inline constexpr std::size_t kRowTile = 4;
inline constexpr std::size_t kVecBytes = 64;

template <Real T>
struct Vec {
  typedef T type __attribute__((vector_size(kVecBytes)));
  typedef T unaligned
      __attribute__((vector_size(kVecBytes), aligned(sizeof(T)), may_alias));
  static constexpr std::size_t lanes = kVecBytes / sizeof(T);
};

template <Real T, std::size_t MR, std::size_t NV>
inline void gemm_tile(const T* __restrict packed, const T* __restrict b,
                      T* __restrict out, std::size_t R, std::size_t P) {
  using V = typename Vec<T>::type;
  using U = typename Vec<T>::unaligned;
  constexpr std::size_t W = Vec<T>::lanes;
  V acc[MR][NV];
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t v = 0; v < NV; ++v)
      acc[i][v] = *reinterpret_cast<const U*>(out + i * P + v * W);
  for (std::size_t r = 0; r < R; ++r) {
    V bv[NV];
    for (std::size_t v = 0; v < NV; ++v)
      bv[v] = *reinterpret_cast<const U*>(b + r * P + v * W);
    for (std::size_t i = 0; i < MR; ++i) {
      const T s = packed[r * MR + i];
      for (std::size_t v = 0; v < NV; ++v) acc[i][v] += s * bv[v];
    }
  }
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t v = 0; v < NV; ++v)
      *reinterpret_cast<U*>(out + i * P + v * W) = acc[i][v];
}

template <Real T, std::size_t MR>
inline void gemm_rows(const T* __restrict packed, const T* __restrict b,
                      T* __restrict out, std::size_t R, std::size_t P) {
  constexpr std::size_t W = Vec<T>::lanes;
  std::size_t p = 0;
  for (; p + 4 * W <= P; p += 4 * W)
    gemm_tile<T, MR, 4>(packed, b + p, out + p, R, P);
  for (; p + W <= P; p += W) gemm_tile<T, MR, 1>(packed, b + p, out + p, R, P);
  for (std::size_t i = 0; i < MR; ++i)
    for (std::size_t q = p; q < P; ++q) {
      T acc = out[i * P + q];
      for (std::size_t r = 0; r < R; ++r) acc += packed[r * MR + i] * b[r * P + q];
      out[i * P + q] = acc;
    }
}

// out (M x P) += a * b, with a(m, r) = a[m * a_rs + r * a_cs] and b (R x P).
template <Real T>
void gemm_strided_add(const T* a, std::size_t a_rs, std::size_t a_cs,
                      const T* __restrict b, T* __restrict out, std::size_t M,
                      std::size_t R, std::size_t P) {
  std::vector<T> packed(R * kRowTile);
  std::size_t m = 0;
  for (; m + kRowTile <= M; m += kRowTile) {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t i = 0; i < kRowTile; ++i)
        packed[r * kRowTile + i] = a[(m + i) * a_rs + r * a_cs];
    gemm_rows<T, kRowTile>(packed.data(), b, out + m * P, R, P);
  }
  for (; m < M; ++m) {
    for (std::size_t r = 0; r < R; ++r) packed[r] = a[m * a_rs + r * a_cs];
    gemm_rows<T, 1>(packed.data(), b, out + m * P, R, P);
  }
}

// out (M x P) += a (M x R) * b (R x P).
template <Real T>
void gemm_nn_add(const T* a, const T* b, T* out, std::size_t M, std::size_t R,
                 std::size_t P) {
  gemm_strided_add(a, R, 1, b, out, M, R, P);
}

// out (R x P) += a^T * b with a (M x R), b (M x P).
template <Real T>
void gemm_tn_add(const T* a, const T* b, T* out, std::size_t M, std::size_t R,
                 std::size_t P) {
  gemm_strided_add(a, 1, R, b, out, R, M, P);
}

inline void require_rank4(const Shape& s, const char* op, const char* what) {
  if (s.size() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank 4, got " +
                     to_string(s));
  }
}

}  // namespace detail

/// Forward cross-correlation. kernel is (Cout, Cin, K, K).
template <Real T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding) {
  detail::require_rank4(input.shape(), "conv2d", "input");
  detail::require_rank4(kernel.shape(), "conv2d", "kernel");
  if (kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: kernel must be square, got " +
                     to_string(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) +
                     " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  input.check_finite("conv2d input");
  const std::size_t B = input.dim(0), Cin = input.dim(1), Cout = kernel.dim(0);
  const auto g =
      conv_geometry(input.dim(2), input.dim(3), kernel.dim(2), stride, padding);
  const std::size_t P = g.out_h * g.out_w;
  const std::size_t R = Cin * g.kernel * g.kernel;

  Tensor<T> out({B, Cout, g.out_h, g.out_w});
  std::vector<T> col;
  if (!detail::is_pointwise(g)) col.resize(R * P);
  for (std::size_t b = 0; b < B; ++b) {
    const T* plane = input.data().data() + b * Cin * g.in_h * g.in_w;
    const T* cols = plane;
    if (!col.empty()) {
      detail::im2col(plane, Cin, g, col.data());
      cols = col.data();
    }
    detail::gemm_nn_add(kernel.data().data(), cols,
                        out.data().data() + b * Cout * P, Cout, R, P);
  }
  return out;
}

/// Gradient of conv2d with respect to its input, given the output gradient.
/// This is also the forward pass of the transposed convolution.
template <Real T>
Tensor<T> conv2d_input_grad(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                            const ConvGeometry& g) {
  const std::size_t B = grad_out.dim(0), Cout = kernel.dim(0),
                    Cin = kernel.dim(1);
  const std::size_t P = g.out_h * g.out_w;
  const std::size_t R = Cin * g.kernel * g.kernel;
  Tensor<T> grad_in({B, Cin, g.in_h, g.in_w});
  std::vector<T> col(R * P);
  for (std::size_t b = 0; b < B; ++b) {
    T* plane = grad_in.data().data() + b * Cin * g.in_h * g.in_w;
    const T* dout = grad_out.data().data() + b * Cout * P;
    if (detail::is_pointwise(g)) {
      detail::gemm_tn_add(kernel.data().data(), dout, plane, Cout, R, P);
    } else {
      std::fill(col.begin(), col.end(), T{0});
      detail::gemm_tn_add(kernel.data().data(), dout, col.data(), Cout, R, P);
      detail::col2im_add(col.data(), Cin, g, plane);
    }
  }
  return grad_in;
}

/// Gradient of conv2d with respect to its kernel, summed over the batch.
template <Real T>
Tensor<T> conv2d_kernel_grad(const Tensor<T>& input, const Tensor<T>& grad_out,
                             const Shape& kernel_shape, const ConvGeometry& g) {
  const std::size_t B = input.dim(0), Cin = input.dim(1),
                    Cout = kernel_shape[0];
  const std::size_t P = g.out_h * g.out_w;
  const std::size_t R = Cin * g.kernel * g.kernel;
  Tensor<T> grad_k(kernel_shape);
  std::vector<T> col_t(P * R), scratch(P * R);
  for (std::size_t b = 0; b < B; ++b) {
    const T* plane = input.data().data() + b * Cin * g.in_h * g.in_w;
    detail::im2col_transposed(plane, Cin, g, col_t.data(), scratch.data());
    detail::gemm_nn_add(grad_out.data().data() + b * Cout * P, col_t.data(),
                        grad_k.data().data(), Cout, P, R);
  }
  return grad_k;
}

/// Transposed convolution. kernel is (Cin, Cout, K, K); the result is the
/// adjoint of conv2d with the same kernel and geometry.
template <Real T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           std::size_t stride, std::size_t padding) {
  detail::require_rank4(input.shape(), "conv_transpose2d", "input");
  detail::require_rank4(kernel.shape(), "conv_transpose2d", "kernel");
  if (kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv_transpose2d: kernel must be square, got " +
                     to_string(kernel.shape()));
  }
  if (kernel.dim(0) != input.dim(1)) {
    throw ShapeError("conv_transpose2d: input has " +
                     std::to_string(input.dim(1)) +
                     " channels, kernel expects " +
                     std::to_string(kernel.dim(0)));
  }
  input.check_finite("conv_transpose2d input");
  const auto g = conv_transpose_geometry(input.dim(2), input.dim(3),
                                         kernel.dim(2), stride, padding);
  return conv2d_input_grad(input, kernel, g);
}

/// Moves channel blocks of ratio^2 into ratio x ratio spatial cells:
/// out(b, c, h*L + i, w*L + j) = in(b, c*L*L + i*L + j, h, w).
template <Real T>
Tensor<T> depth_to_space(const Tensor<T>& input, std::size_t ratio) {
  detail::require_rank4(input.shape(), "depth_to_space", "input");
  if (ratio == 0) throw ShapeError("depth_to_space: ratio must be > 0");
  const std::size_t L2 = ratio * ratio;
  if (input.dim(1) % L2 != 0) {
    throw ShapeError("depth_to_space: " + std::to_string(input.dim(1)) +
                     " channels not divisible by " + std::to_string(L2));
  }
  const std::size_t B = input.dim(0), C = input.dim(1) / L2, H = input.dim(2),
                    W = input.dim(3);
  Tensor<T> out({B, C, H * ratio, W * ratio});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < ratio; ++i)
        for (std::size_t j = 0; j < ratio; ++j)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
              out.at(b, c, h * ratio + i, w * ratio + j) =
                  input.at(b, c * L2 + i * ratio + j, h, w);
  return out;
}

/// Inverse of depth_to_space.
template <Real T>
Tensor<T> space_to_depth(const Tensor<T>& input, std::size_t ratio) {
  detail::require_rank4(input.shape(), "space_to_depth", "input");
  if (ratio == 0) throw ShapeError("space_to_depth: ratio must be > 0");
  if (input.dim(2) % ratio != 0 || input.dim(3) % ratio != 0) {
    throw ShapeError("space_to_depth: extents " + to_string(input.shape()) +
                     " not divisible by " + std::to_string(ratio));
  }
  const std::size_t L2 = ratio * ratio;
  const std::size_t B = input.dim(0), C = input.dim(1),
                    H = input.dim(2) / ratio, W = input.dim(3) / ratio;
  Tensor<T> out({B, C * L2, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < ratio; ++i)
        for (std::size_t j = 0; j < ratio; ++j)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
              out.at(b, c * L2 + i * ratio + j, h, w) =
                  input.at(b, c, h * ratio + i, w * ratio + j);
  return out;
}

/// Logistic function, evaluated so that large |x| saturates instead of
/// overflowing.
template <Real T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace fasterpose::ops
