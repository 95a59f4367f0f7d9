// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsal/autograd.hpp"

#include <unordered_set>

namespace avsal {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.numel() > 0) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  if (g_grad_enabled) {
    for (const Var& in : inputs) any = any || in.requires_grad();
  }
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (Var& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw ShapeError("backward() needs a single-element loss");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    // Interior gradients are only needed once; drop them to bound memory.
    node->grad = Tensor();
  }
}

}  // namespace avsal
