// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/tensor.hpp"

#include <deque>
#include <functional>
#include <utility>
#include <vector>

/// Minimal reverse-mode differentiation over Tensor values.
///
/// A Graph records every operation applied to its variables. Calling
/// backward() on a scalar node propagates gradients to every node that
/// transitively depends on a parameter leaf. Constants never receive a
/// gradient buffer, so inference through a graph of constants costs little
/// more than a plain forward pass.
namespace ldla::ad {

struct Var {
    int id = -1;
    bool valid() const noexcept { return id >= 0; }
};

class Graph;
using BackwardFn = std::function<void(Graph&, int self)>;

class Graph {
public:
    Var constant(Tensor value);
    Var parameter(Tensor value);

    const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
    double scalar(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }

    // Gradient accumulated by the last backward(); zeros when the node received none.
    Tensor grad(Var v) const;

    void backward(Var root);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by op implementations.
    Var push(Tensor value, bool requires_grad, BackwardFn fn);
    Tensor& grad_buffer(int id);
    bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
    const Tensor& node_value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& node_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::deque<Node> nodes_;  // deque: references to values stay valid while the graph grows
};

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
// alpha*a + beta*b
Var lincomb(Graph& g, double alpha, Var a, double beta, Var b);
// sum_i weight_i * term_i over scalar terms
Var weighted_sum(Graph& g, const std::vector<std::pair<double, Var>>& terms);

Var silu(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);

// x: (C,H,W); weight: (O,C,k,k) with odd k, zero padding k/2; bias: (O).
Var conv2d(Graph& g, Var x, Var weight, Var bias);
Var avg_pool2(Graph& g, Var x);
Var upsample2(Graph& g, Var x);
Var concat_channels(Graph& g, Var a, Var b);
// x * (1 + gamma) + beta per channel; gamma_beta has 2*C entries, gammas first.
Var film(Graph& g, Var x, Var gamma_beta);
// (C,H,W) -> (C)
Var channel_mean(Graph& g, Var x);

// weight: (O,I); x: (I); bias: (O).
Var linear(Graph& g, Var weight, Var x, Var bias);

// Mean of squared differences, shape (1).
Var mse(Graph& g, Var a, Var b);

}  // namespace ldla::ad
