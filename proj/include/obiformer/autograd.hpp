// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over Tensor values.
//
// Every differentiable op returns a Var (shared node). A node only records
// its parents and backward closure when at least one parent requires a
// gradient, so eval-mode inference builds no graph at all.

#pragma once

#include <functional>
#include <algorithm>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "obiformer/tensor.hpp"

namespace obiformer {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  /// Gradient accumulator, zero-initialized on first use.
  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape(), T(0));
    return grad;
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

/// A trainable leaf: gradients accumulate into `grad` during backward().
template <class T>
Var<T> leaf(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

template <class T>
bool any_requires_grad(const std::vector<Var<T>>& vars) {
  for (const auto& v : vars) {
    if (v && v->requires_grad) return true;
  }
  return false;
}

/// Creates an op result. `fn` receives the output node (value and grad filled)
/// and must accumulate into the grad buffers of parents that require grad.
template <class T, class Fn>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, Fn&& fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (any_requires_grad(parents)) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::forward<Fn>(fn);
  }
  return node;
}

/// Back-propagates from a scalar (single-element) root.
template <class T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1) throw ShapeError("backward() requires a scalar root");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad.size() == node->value.size()) node->backward_fn(*node);
  }
}

}  // namespace obiformer
