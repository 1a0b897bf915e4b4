#pragma once

// Multi-level fusion: 1x1x1 projection of every encoder level to 2C channels,
// nearest upsampling of levels 2-4 to the level-1 grid, elementwise sum.
// The temporal axis passes through untouched.

#include <array>
#include <vector>

#include "thtd/config.hpp"
#include "thtd/encoder.hpp"

namespace thtd {

template <typename T>
struct FusionWeights {
  std::array<Tensor<T>, 4> weight;  // [2C, C_i, 1, 1, 1]
  std::array<Tensor<T>, 4> bias;    // [2C]

  static FusionWeights init(const EncoderConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Spatial upsampling factor that brings zero-based stage i back to H/4 x W/4.
constexpr std::int64_t fusion_upsample_factor(int stage) { return std::int64_t{1} << stage; }

/// [C_i, T', h, w] -> [2C, T', h, w].
template <typename T>
Tensor<T> project_stage(const Tensor<T>& feature, int stage, const FusionWeights<T>& w);

/// Upsamples each projected level by 1, 2, 4, 8 and sums: -> [2C, T', H/4, W/4].
template <typename T>
Tensor<T> align_and_sum(const std::array<Tensor<T>, 4>& projected);

template <typename T>
Tensor<T> fuse(const StageFeatures<T>& features, const FusionWeights<T>& w);

}  // namespace thtd
