#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "thtd/tensor.hpp"

namespace thtd {

enum class DecoderVariant {
  baseline,
  layers4,
  layers3,
  layers2,
  double_layers,
  triple_layers,
  mobilenet,
  half_temporal,
};

/// CLI tag for a variant ("baseline", "double", "half_temporal", ...).
std::string_view variant_tag(DecoderVariant v);
/// Throws ConfigError listing the valid tags when `tag` is unknown.
DecoderVariant parse_variant(std::string_view tag);
const std::vector<DecoderVariant>& all_variants();

using Dims3 = std::array<std::int64_t, 3>;

struct EncoderConfig {
  std::int64_t frames = 8;    // T
  std::int64_t height = 32;   // H
  std::int64_t width = 64;    // W
  std::int64_t embed_dim = 16;  // C
  Dims3 patch{2, 4, 4};
  Dims3 window{2, 4, 4};
  std::array<std::int64_t, 4> heads{1, 2, 4, 8};
  std::array<std::int64_t, 4> depths{1, 1, 2, 1};
  std::int64_t mlp_ratio = 4;

  void validate() const;
  std::int64_t raw_token_dim() const { return patch[0] * patch[1] * patch[2] * 3; }
  std::int64_t stage_channels(int stage) const { return embed_dim << stage; }
  /// Token grid (T/2, H/2^{i+2}, W/2^{i+2}) for zero-based stage i.
  Dims3 token_grid(int stage) const;
  /// Attention window for a stage, clamped to the token grid on each axis.
  Dims3 stage_window(int stage) const;
  /// F_i shape [C_i, T/2, H/2^{i+2}, W/2^{i+2}] for zero-based stage i.
  Shape feature_shape(int stage) const;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderVariant variant = DecoderVariant::baseline;

  void validate() const { encoder.validate(); }
  std::int64_t fused_channels() const { return 2 * encoder.embed_dim; }
  /// [2C, T/2, H/4, W/4]
  Shape fused_shape() const;

  /// T=32, 224x384, C=96, Swin-S depths and heads.
  static ModelConfig paper();
  /// T=8, 32x64, C=16, depths (1,1,2,1).
  static ModelConfig toy();
  static ModelConfig profile(std::string_view name);
};

bool operator==(const EncoderConfig& a, const EncoderConfig& b);
inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.encoder == b.encoder && a.variant == b.variant;
}

}  // namespace thtd
