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

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fasterpose/ops.hpp"
#include "fasterpose/tensor.hpp"

namespace fasterpose {

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <Real T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <Real T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(*this); }
  const Tensor<T>& grad() const { return graph->grad(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order and may only
/// reference earlier nodes, so the node index is a topological order and
/// backward is a single reverse sweep.
template <Real T>
class Graph {
 public:
  /// Receives the graph and the node id; reads grad(id) and accumulates into
  /// the gradients of the node's inputs.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant leaf; never receives a gradient.
  Var<T> constant(Tensor<T> value) {
    return add_node("constant", {}, std::move(value), nullptr, false);
  }

  /// Differentiable leaf.
  Var<T> parameter(Tensor<T> value) {
    return add_node("parameter", {}, std::move(value), nullptr, true);
  }

  /// Appends an operation node. Inputs must already exist on this graph;
  /// referencing the node being created or a later one would close a cycle.
  Var<T> add_node(std::string op, std::vector<std::size_t> inputs,
                  Tensor<T> value, BackwardFn backward,
                  bool leaf_requires_grad = false) {
    const std::size_t id = nodes_.size();
    bool requires_grad = leaf_requires_grad;
    for (auto in : inputs) {
      if (in >= id) {
        throw GraphError(op + ": input node " + std::to_string(in) +
                         " does not precede node " + std::to_string(id) +
                         " (cycle)");
      }
      requires_grad = requires_grad || nodes_[in].requires_grad;
    }
    value.check_finite(op + " output");
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value),
                          Tensor<T>{}, std::move(backward), requires_grad});
    return Var<T>{this, id};
  }

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }

  /// Gradient after backward(). Parameters the loss does not reach hold
  /// all-zero gradients; constants hold an empty tensor.
  const Tensor<T>& grad(Var<T> v) const { return node(v).grad; }

  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor<T>& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const {
    return nodes_.at(id).requires_grad;
  }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }

  /// Adds delta into the gradient of node id (allocating it on first use).
  void accumulate(std::size_t id, const Tensor<T>& delta) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = delta;
      return;
    }
    if (delta.shape() != n.grad.shape()) {
      throw ShapeError("gradient shape " + to_string(delta.shape()) +
                       " does not match node shape " +
                       to_string(n.grad.shape()));
    }
    auto g = n.grad.data();
    auto d = delta.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
  }

  /// Populates gradients of every node the scalar loss depends on. Each node
  /// is visited once in reverse topological order.
  void backward(Var<T> loss) {
    if (loss.graph != this) throw GraphError("backward: foreign node");
    const Node& root = node(loss);
    if (root.value.size() != 1) {
      throw GraphError("backward: loss must be scalar, got shape " +
                       to_string(root.value.shape()));
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      for (auto in : nodes_[id].inputs) {
        if (in >= id) throw GraphError("backward: graph contains a cycle");
      }
      nodes_[id].grad = Tensor<T>{};
    }
    nodes_[loss.id].grad = Tensor<T>(root.value.shape(), T{1});
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
    for (auto& n : nodes_) {
      if (n.requires_grad && n.inputs.empty() && n.grad.empty())
        n.grad = Tensor<T>::zeros_like(n.value);
    }
  }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(Var<T> v) const {
    if (v.graph != this || v.id >= nodes_.size()) {
      throw GraphError("variable does not belong to this graph");
    }
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

namespace ad {

template <Real T>
Var<T> conv2d(Var<T> x, Var<T> kernel, std::size_t stride,
              std::size_t padding) {
  Graph<T>& g = *x.graph;
  auto out = ops::conv2d(x.value(), kernel.value(), stride, padding);
  const auto geom = ops::conv_geometry(x.value().dim(2), x.value().dim(3),
                                       kernel.value().dim(2), stride, padding);
  const std::size_t xi = x.id, ki = kernel.id;
  return g.add_node(
      "conv2d", {xi, ki}, std::move(out),
      [xi, ki, geom](Graph<T>& gr, std::size_t self) {
        const auto& dout = gr.grad(self);
        if (gr.requires_grad(xi))
          gr.accumulate(xi, ops::conv2d_input_grad(dout, gr.value(ki), geom));
        if (gr.requires_grad(ki))
          gr.accumulate(ki, ops::conv2d_kernel_grad(
                                gr.value(xi), dout, gr.value(ki).shape(), geom));
      });
}

template <Real T>
Var<T> conv_transpose2d(Var<T> x, Var<T> kernel, std::size_t stride,
                        std::size_t padding) {
  Graph<T>& g = *x.graph;
  auto out = ops::conv_transpose2d(x.value(), kernel.value(), stride, padding);
  const auto geom = ops::conv_transpose_geometry(
      x.value().dim(2), x.value().dim(3), kernel.value().dim(2), stride,
      padding);
  const std::size_t xi = x.id, ki = kernel.id;
  return g.add_node(
      "conv_transpose2d", {xi, ki}, std::move(out),
      [xi, ki, geom, stride, padding](Graph<T>& gr, std::size_t self) {
        const auto& dout = gr.grad(self);
        if (gr.requires_grad(xi))
          gr.accumulate(xi, ops::conv2d(dout, gr.value(ki), stride, padding));
        if (gr.requires_grad(ki))
          gr.accumulate(ki, ops::conv2d_kernel_grad(
                                dout, gr.value(xi), gr.value(ki).shape(), geom));
      });
}

/// Adds a per-channel bias of shape (C) to a rank-4 input.
template <Real T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (xv.rank() != 4 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_channel_bias: input " + to_string(xv.shape()) +
                     ", bias " + to_string(bv.shape()));
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), P = xv.dim(2) * xv.dim(3);
  Tensor<T> out = xv;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      T* row = out.data().data() + (b * C + c) * P;
      for (std::size_t p = 0; p < P; ++p) row[p] += bv[c];
    }
  const std::size_t xi = x.id, bi = bias.id;
  return x.graph->add_node(
      "add_channel_bias", {xi, bi}, std::move(out),
      [xi, bi, B, C, P](Graph<T>& gr, std::size_t self) {
        const auto& dout = gr.grad(self);
        gr.accumulate(xi, dout);
        if (!gr.requires_grad(bi)) return;
        Tensor<T> db({C});
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const T* row = dout.data().data() + (b * C + c) * P;
            for (std::size_t p = 0; p < P; ++p) db[c] += row[p];
          }
        gr.accumulate(bi, db);
      });
}

template <Real T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t xi = x.id;
  return x.graph->add_node(
      "relu", {xi}, std::move(out), [xi](Graph<T>& gr, std::size_t self) {
        Tensor<T> dx = gr.grad(self);
        const auto& in = gr.value(xi);
        for (std::size_t i = 0; i < dx.size(); ++i)
          if (!(in[i] > T{0})) dx[i] = T{0};
        gr.accumulate(xi, dx);
      });
}

/// relu(x + bias) with a per-channel bias, in one pass.
template <Real T>
Var<T> bias_relu(Var<T> x, Var<T> bias) {
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (xv.rank() != 4 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("bias_relu: input " + to_string(xv.shape()) + ", bias " +
                     to_string(bv.shape()));
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), P = xv.dim(2) * xv.dim(3);
  Tensor<T> out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* src = xv.data().data() + (b * C + c) * P;
      T* dst = out.data().data() + (b * C + c) * P;
      const T bc = bv[c];
      for (std::size_t p = 0; p < P; ++p) {
        const T v = src[p] + bc;
        dst[p] = v > T{0} ? v : T{0};
      }
    }
  const std::size_t xi = x.id, bi = bias.id;
  return x.graph->add_node(
      "bias_relu", {xi, bi}, std::move(out),
      [xi, bi, B, C, P](Graph<T>& gr, std::size_t self) {
        Tensor<T> dx = gr.grad(self);
        const auto& y = gr.value(self);
        for (std::size_t i = 0; i < dx.size(); ++i)
          if (!(y[i] > T{0})) dx[i] = T{0};
        if (gr.requires_grad(bi)) {
          Tensor<T> db({C});
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const T* row = dx.data().data() + (b * C + c) * P;
              T acc{0};
              for (std::size_t p = 0; p < P; ++p) acc += row[p];
              db[c] += acc;
            }
          gr.accumulate(bi, db);
        }
        gr.accumulate(xi, dx);
      });
}

template <Real T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = ops::sigmoid(v);
  const std::size_t xi = x.id;
  return x.graph->add_node(
      "sigmoid", {xi}, std::move(out), [xi](Graph<T>& gr, std::size_t self) {
        Tensor<T> dx = gr.grad(self);
        const auto& y = gr.value(self);
        for (std::size_t i = 0; i < dx.size(); ++i)
          dx[i] *= y[i] * (T{1} - y[i]);
        gr.accumulate(xi, dx);
      });
}

template <Real T>
Var<T> depth_to_space(Var<T> x, std::size_t ratio) {
  auto out = ops::depth_to_space(x.value(), ratio);
  const std::size_t xi = x.id;
  return x.graph->add_node(
      "depth_to_space", {xi}, std::move(out),
      [xi, ratio](Graph<T>& gr, std::size_t self) {
        gr.accumulate(xi, ops::space_to_depth(gr.grad(self), ratio));
      });
}

template <Real T>
Var<T> space_to_depth(Var<T> x, std::size_t ratio) {
  auto out = ops::space_to_depth(x.value(), ratio);
  const std::size_t xi = x.id;
  return x.graph->add_node(
      "space_to_depth", {xi}, std::move(out),
      [xi, ratio](Graph<T>& gr, std::size_t self) {
        gr.accumulate(xi, ops::depth_to_space(gr.grad(self), ratio));
      });
}

/// Sum of all elements, as a rank-1 tensor of size 1.
template <Real T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (auto v : x.value().data()) acc += v;
  const std::size_t xi = x.id;
  return x.graph->add_node(
      "sum", {xi}, Tensor<T>({1}, acc), [xi](Graph<T>& gr, std::size_t self) {
        gr.accumulate(xi, Tensor<T>(gr.value(xi).shape(), gr.grad(self)[0]));
      });
}

/// Elementwise product with a constant tensor of the same shape.
template <Real T>
Var<T> mul_constant(Var<T> x, Tensor<T> c) {
  if (c.shape() != x.value().shape()) {
    throw ShapeError("mul_constant: " + to_string(x.value().shape()) + " vs " +
                     to_string(c.shape()));
  }
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  const std::size_t xi = x.id;
  return x.graph->add_node(
      "mul_constant", {xi}, std::move(out),
      [xi, c = std::move(c)](Graph<T>& gr, std::size_t self) {
        Tensor<T> dx = gr.grad(self);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= c[i];
        gr.accumulate(xi, dx);
      });
}

}  // namespace ad
}  // namespace fasterpose
