// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over Tensor values.
//
// Every differentiable op produces a Var whose node remembers its inputs and
// a closure that pushes the node's gradient back into them. Graphs are built
// per forward pass and die with the last Var referencing them.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "avsal/tensor.hpp"

namespace avsal {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient accumulator, zero-initialized on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds the output Var of an op. When no input requires a gradient (or
/// recording is disabled) the result is a constant and `backward` is dropped.
Var make_op_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient. `loss` must hold exactly one element.
void backward(const Var& loss);

}  // namespace avsal
