// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Operations on tensors that
// require gradients record their inputs and a backward closure on the result
// node; calling backward() on a scalar walks that graph in reverse
// topological order and accumulates gradients into every reachable leaf.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace suitein::diffnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  /// Grad storage, zero-initialised on first use.
  std::vector<double>& grad_buffer();
};

/// Wraps `value` into a tensor. When grad mode is on and any input requires
/// grad, the result is tracked: it keeps `inputs` alive and runs `fn` during
/// backward. Otherwise `fn` is dropped.
Tensor make_result(Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
                   std::string_view op, std::function<void(Node&)> fn);
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   std::string_view op, std::function<void(Node&)> fn);

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values().size(); }

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  /// Drops the accumulated gradient; has_grad() is false afterwards.
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Gradients accumulate into leaves;
  /// intermediate gradients are released once propagated.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of values into a new leaf.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor detail::make_result(Shape, std::vector<double>, std::span<const Tensor>,
                                    std::string_view, std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace suitein::diffnet
