#include "thtd/adam.hpp"

#include <cmath>

namespace thtd {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const std::vector<Tensor<T>>& params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const auto& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    s.v.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(state.m.size()) +
                     " moment buffers");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<std::size_t>(params[i].numel());
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n)
      throw ShapeError("adam_step: size mismatch for parameter " + std::to_string(i) + " of shape " +
                       shape_str(params[i].shape()));
  }
  const auto& o = state.options;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T step_size = static_cast<T>(o.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  std::vector<std::vector<T>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Tensor<float>>&, const std::vector<std::vector<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, const std::vector<std::vector<double>>&, AdamState<double>&);
template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);

}  // namespace thtd
