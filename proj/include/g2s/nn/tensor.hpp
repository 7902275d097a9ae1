// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace g2s::nn {

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::array<std::size_t, 2>;

inline std::string shape_str(Shape s) {
  std::ostringstream os;
  os << "[" << s[0] << ", " << s[1] << "]";
  return os.str();
}

[[noreturn]] inline void throw_shape(const char* op, Shape a, Shape b) {
  throw ShapeMismatch(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct Node {
  Shape shape{0, 0};
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Dense row-major matrix with reverse-mode gradient tracking. Copies share
/// the underlying node.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0)) : node_(std::make_shared<Node<T>>()) {
    node_->shape = {rows, cols};
    node_->value.assign(rows * cols, fill);
  }
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    if (values.size() != rows * cols) throw_shape("Tensor", {rows, cols}, {values.size(), 1});
    node_->shape = {rows, cols};
    node_->value = std::move(values);
  }

  bool defined() const { return static_cast<bool>(node_); }
  Shape shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape[0]; }
  std::size_t cols() const { return node_->shape[1]; }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T& operator()(std::size_t r, std::size_t c) { return node_->value[r * cols() + c]; }
  T operator()(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  T item() const {
    if (size() != 1) throw_shape("item", shape(), {1, 1});
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }

  // Gradient storage; empty until a backward pass touches this tensor.
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Copy of the values without history.
  Tensor detach() const { return Tensor(rows(), cols(), node_->value); }

  /// Reverse-mode pass from a scalar. Gradients accumulate into every
  /// tensor on the path that requires them.
  void backward() const {
    if (size() != 1) throw_shape("backward", shape(), {1, 1});
    backward_with({T(1)});
  }

  void backward_with(const std::vector<T>& seed) const {
    if (seed.size() != size()) throw_shape("backward_with", shape(), {seed.size(), 1});
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
      Node<T>* n;
      std::size_t next;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        Node<T>* p = f.n->parents[f.next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) node_->grad[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn) {
        n->ensure_grad();
        n->backward_fn(*n);
      }
    }
  }

  // Creates an op result. Records history only when grad mode is on and
  // some input requires gradients.
  static Tensor make_result(std::size_t rows, std::size_t cols, std::vector<T> values,
                            std::initializer_list<const Tensor*> inputs,
                            std::function<void(Node<T>&)> backward_fn) {
    Tensor out(rows, cols, std::move(values));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const Tensor* t : inputs)
      if (t && t->defined() && t->requires_grad()) any = true;
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const Tensor* t : inputs)
      if (t && t->defined()) out.node_->parents.push_back(t->node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

  static Tensor make_result(std::size_t rows, std::size_t cols, std::vector<T> values,
                            const std::vector<Tensor>& inputs, std::function<void(Node<T>&)> backward_fn) {
    Tensor out(rows, cols, std::move(values));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const Tensor& t : inputs)
      if (t.defined() && t.requires_grad()) any = true;
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const Tensor& t : inputs)
      if (t.defined()) out.node_->parents.push_back(t.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Gradient sink for an input: null when the input does not take gradients.
template <class T>
inline T* grad_ptr(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  t.node()->ensure_grad();
  return t.node()->grad.data();
}

/// Copies values of a tensor of another precision.
template <class To, class From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> v(t.values().begin(), t.values().end());
  return Tensor<To>(t.rows(), t.cols(), std::move(v));
}

}  // namespace g2s::nn
