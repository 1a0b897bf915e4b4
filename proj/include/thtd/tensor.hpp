#pragma once

// Dense row-major tensors with a tape-free reverse-mode autodiff graph.
//
// A Tensor is a cheap handle onto a shared node. Operations that see at least
// one input requiring gradients record their inputs and a backward closure on
// the output node; backward() walks the recorded graph in reverse topological
// order and accumulates into every node's grad buffer.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "thtd/errors.hpp"

namespace thtd {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape, const char* sep = "x");

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  bool graph_released = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into the inputs' grad buffers.
  std::function<void(Node& self)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

bool grad_mode_enabled();

}  // namespace detail

/// Disables graph recording for the lifetime of the guard (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& storage() { return node_->data; }
  const std::vector<T>& storage() const { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros when nothing has been accumulated yet.
  std::vector<T> grad() const;
  std::span<T> grad_mut() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);

  T item() const;
  /// Copy of the values with no graph attached.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Builds an op output. The backward closure is kept only when grad mode is on
/// and some input requires gradients.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward_fn);

/// Reverse-mode sweep from a scalar loss. Without retain_graph the graph is
/// released and a second call on the same loss throws GraphError.
template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph = false);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace thtd
