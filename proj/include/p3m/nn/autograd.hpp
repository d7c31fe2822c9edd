#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "p3m/nn/tensor.hpp"

namespace p3m::nn {

// Reverse-mode autodiff over a dynamically recorded graph. Each op builds a
// Node holding its value and a closure that pushes the output gradient into
// its parents. Leaves with requires_grad keep their gradient after
// backward(); interior gradients are released as soon as they are consumed.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor<T>&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>::zeros_like(value);
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

  int n() const { return value().n(); }
  int c() const { return value().c(); }
  int h() const { return value().h(); }
  int w() const { return value().w(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <class T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value(), false);
}

// Records an op. The closure receives the output gradient and must only
// touch parents through accumulate().
template <class T>
Var<T> record(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(const Tensor<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

// Adds g (same shape as v) into v's gradient if v takes part in the backward pass.
template <class T>
void accumulate(const Var<T>& v, const Tensor<T>& g) {
  if (!v.requires_grad()) return;
  auto& buf = v.node()->grad_buffer();
  T* d = buf.data();
  const T* s = g.data();
  for (std::size_t i = 0; i < buf.size(); ++i) d[i] += s[i];
}

template <class T>
bool wants_grad(const Var<T>& v) {
  return v.requires_grad();
}

template <class T>
Tensor<T>& grad_of(const Var<T>& v) {
  return v.node()->grad_buffer();
}

// Seeds the root with ones (any shape; a scalar loss in practice) and runs
// the recorded closures in reverse topological order.
template <class T>
void backward(const Var<T>& root) {
  if (!root.requires_grad()) throw StateError("backward: root does not depend on any parameter");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf() || node->grad.empty()) continue;
    node->backward_fn(node->grad);
    node->grad = Tensor<T>();
  }
}

}  // namespace p3m::nn
