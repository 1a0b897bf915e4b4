#include "thtd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace thtd {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape, const char* sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << sep;
    os << shape[i];
  }
  return os.str();
}

namespace detail {
namespace {
thread_local bool g_grad_mode = true;
}
bool grad_mode_enabled() { return g_grad_mode; }
void set_grad_mode(bool on) { g_grad_mode = on; }
}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode_enabled()) { detail::set_grad_mode(false); }
NoGradGuard::~NoGradGuard() { detail::set_grad_mode(previous_); }

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  auto n = thtd::numel(shape);
  return from_data(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  check_shape(shape);
  if (thtd::numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw GraphError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = on;
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(node_->shape));
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward_fn) {
  auto out = Tensor<T>::from_data(std::move(shape), std::move(data), false);
  if (!detail::grad_mode_enabled()) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.is_leaf = false;
  for (const auto& t : inputs)
    if (t.defined()) node.inputs.push_back(t.node());
  node.backward_fn = std::move(backward_fn);
  return out;
}

template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph) {
  using NodeT = detail::Node<T>;
  if (!loss.defined() || loss.numel() != 1)
    throw GraphError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  NodeT* root = loss.node().get();
  if (root->graph_released)
    throw GraphError("graph already released by a previous backward(); pass retain_graph=true");
  if (!root->requires_grad) throw GraphError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* n : order)
    if (!n->is_leaf) n->grad.clear();
  root->ensure_grad()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->is_leaf || !n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
  }

  if (!retain_graph) {
    for (NodeT* n : order) {
      if (n->is_leaf) continue;
      n->backward_fn = nullptr;
      n->inputs.clear();
      n->graph_released = true;
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(detail::Node<double>&)>);
template void backward(const Tensor<float>&, bool);
template void backward(const Tensor<double>&, bool);

}  // namespace thtd
