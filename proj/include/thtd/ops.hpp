#pragma once

// Differentiable primitives used by the encoder, fusion, decoder and losses.

#include <array>
#include <cstdint>
#include <vector>

#include "thtd/tensor.hpp"

namespace thtd {

// ---- elementwise ----------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// tanh approximation of GELU, used in the transformer MLP.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

// ---- reductions ------------------------------------------------------------

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// ---- layout ----------------------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Output axis i is input axis perm[i].
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);

// ---- linear algebra --------------------------------------------------------

/// Affine map over the last dimension: y = x W^T + b, W is [D_out, D_in].
/// bias may be an undefined tensor.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Batched product of [B,M,K] and [B,K,N] (or [B,N,K] when transpose_b).
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

// ---- normalization ---------------------------------------------------------

/// Numerically stable softmax along `axis` (negative axes count from the end).
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Normalizes over the trailing dimension, then applies gamma * x_hat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

// ---- spatio-temporal -------------------------------------------------------

struct ConvSpec {
  std::array<std::int64_t, 3> kernel{1, 1, 1};   // t, h, w
  std::array<std::int64_t, 3> stride{1, 1, 1};
  std::array<std::int64_t, 3> padding{0, 0, 0};
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t groups = 1;  // in_channels == groups == out_channels gives a depthwise conv

  Shape weight_shape() const;
  /// Validates the ConvSpec and returns the output (T', H', W') for an input grid.
  std::array<std::int64_t, 3> output_dims(std::int64_t t, std::int64_t h, std::int64_t w) const;
  void validate() const;
};

/// input [N, C_in, T, H, W]; weight [C_out, C_in / groups, k_t, k_h, k_w]; bias [C_out] or undefined.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>& bias);

/// Nearest-neighbour spatial upsampling of [N, C, T, H, W] by an integer factor.
template <typename T> Tensor<T> upsample_spatial(const Tensor<T>& input, std::int64_t factor);

/// Mean over non-overlapping temporal groups of [N, C, T, H, W].
template <typename T> Tensor<T> avg_pool_temporal(const Tensor<T>& input, std::int64_t factor);

}  // namespace thtd
