#pragma once

#include <cstdint>
#include <vector>

#include "thtd/tensor.hpp"

namespace thtd {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter tensor, in parameter order.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState zeros_like(const std::vector<Tensor<T>>& params, AdamOptions options);
};

/// One bias-corrected Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state);

/// Same update using each parameter's accumulated gradient (zeros when absent).
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

}  // namespace thtd
