#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "isoplane/error.hpp"

namespace isoplane::engine {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Graph recording switch for the current thread; see NoGradGuard.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
  std::uint64_t id = next_node_id();

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Handle to a node of the computation graph. Copies share the node.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), T(0), requires_grad); }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(engine::numel(shape), fill);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (engine::numel(shape) != values.size())
      throw ShapeError("tensor shape " + to_string(shape) + " needs " + std::to_string(engine::numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  std::uint64_t id() const { return node_->id; }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  // Empty until a backward pass reaches this tensor.
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  // Same values, no history.
  Tensor detach() const { return from(shape(), node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Reverse pass from a scalar root (seed 1) or with an explicit seed gradient.
  void backward(std::span<const T> seed = {}) const {
    if (!node_->requires_grad) return;
    if (seed.empty() && numel() != 1)
      throw ShapeError("backward() without a seed needs a scalar, got " + to_string(shape()));
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node<T>* in = n->inputs[next++].get();
        if (in->requires_grad && seen.insert(in).second) stack.push_back({in, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    if (seed.empty()) {
      node_->grad[0] += T(1);
    } else {
      if (seed.size() != numel()) throw ShapeError("backward seed has wrong size");
      for (std::size_t i = 0; i < seed.size(); ++i) node_->grad[i] += seed[i];
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (!n->backward || n->grad.empty()) continue;
      for (auto& in : n->inputs)
        if (in->requires_grad) in->ensure_grad();
      n->backward(*n);
      if (n != node_.get()) std::vector<T>().swap(n->grad);  // interior grads are not kept
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op result. History is recorded only when gradients are enabled
// and at least one input needs them.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled())
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (needs) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

}  // namespace isoplane::engine
