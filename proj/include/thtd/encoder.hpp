#pragma once

// Hierarchical windowed video transformer producing the four-level feature pyramid.

#include <array>
#include <string>
#include <vector>

#include "thtd/config.hpp"
#include "thtd/random.hpp"
#include "thtd/tensor.hpp"

namespace thtd {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
Tensor<T> trunc_normal_param(Shape shape, Rng& rng, double std);
template <typename T>
Tensor<T> constant_param(Shape shape, T value);

template <typename T>
struct AttentionWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv;  // [C, C], [C]
  Tensor<T> wo, bo;
};

template <typename T>
struct BlockWeights {
  Tensor<T> norm1_gamma, norm1_beta;
  AttentionWeights<T> attn;
  Tensor<T> norm2_gamma, norm2_beta;
  Tensor<T> fc1_w, fc1_b;  // [r*C, C]
  Tensor<T> fc2_w, fc2_b;  // [C, r*C]
};

template <typename T>
struct StageWeights {
  Tensor<T> merge_w;  // [2*C_in, 4*C_in]; undefined for the first stage
  std::vector<BlockWeights<T>> blocks;
  Tensor<T> out_norm_gamma, out_norm_beta;
};

template <typename T>
struct EncoderWeights {
  Tensor<T> embed_w, embed_b;  // [C, 96], [C]
  std::array<StageWeights<T>, 4> stages;

  static EncoderWeights init(const EncoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// F_1..F_4, each [C_i, T/2, H/2^{i+1}, W/2^{i+1}] (one-based i).
template <typename T>
struct StageFeatures {
  std::array<Tensor<T>, 4> levels;
};

/// [T, H, W, 3] clip -> [T/2, H/4, W/4, 96] raw patch vectors, ordered (dt, dy, dx, rgb).
template <typename T>
Tensor<T> patchify(const Tensor<T>& clip);

/// Patchify followed by the linear embedding to C channels.
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& clip, const Tensor<T>& weight, const Tensor<T>& bias);

/// Multi-head self-attention restricted to non-overlapping windows of a
/// [T', H', W', C] token grid. No residual or normalization here. When `probs`
/// is given it receives the attention weights as [windows*heads, N_w, N_w].
template <typename T>
Tensor<T> window_attention(const Tensor<T>& tokens, const AttentionWeights<T>& w, const Dims3& window,
                           std::int64_t heads, Tensor<T>* probs = nullptr);

/// Pre-norm transformer block: x + attn(ln1(x)), then + mlp(ln2(.)).
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& tokens, const BlockWeights<T>& w, const Dims3& window,
                            std::int64_t heads);

/// Concatenates each 2x2 spatial neighbourhood (top-left first) and projects 4C -> 2C.
template <typename T>
Tensor<T> patch_merge(const Tensor<T>& tokens, const Tensor<T>& weight);

template <typename T>
StageFeatures<T> encode(const Tensor<T>& clip, const EncoderConfig& cfg, const EncoderWeights<T>& w);

}  // namespace thtd
