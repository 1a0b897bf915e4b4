#pragma once

// Single-branch decoder that consumes the fused features at full temporal
// resolution and shrinks time, channels and (inversely) space step by step.

#include <string>
#include <utility>
#include <vector>

#include "thtd/config.hpp"
#include "thtd/encoder.hpp"
#include "thtd/ops.hpp"

namespace thtd {

enum class Activation { relu, sigmoid };

struct DecoderLayerSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  /// Temporal kernel size and stride. 1 keeps T (kernel 1x3x3); 2 halves it
  /// (kernel 2x3x3, stride 2x1x1); compressed variants use 4 or 8.
  std::int64_t temporal_stride = 1;
  /// Nearest spatial upsampling applied to the layer input (1 = none).
  std::int64_t upsample_before = 1;
  Activation activation = Activation::relu;
  /// Depthwise (k_t x 3 x 3) followed by pointwise (1x1x1), ReLU in between.
  bool separable = false;

  bool temporal_reduce() const { return temporal_stride > 1; }
  ConvSpec conv_spec() const;
  ConvSpec depthwise_spec() const;
  ConvSpec pointwise_spec() const;
};

struct DecoderSchedule {
  DecoderVariant variant = DecoderVariant::baseline;
  Shape input_shape;              // fused [2C, T/2, H/4, W/4]
  std::int64_t temporal_pool = 1;  // average-pool factor applied before the first layer
  std::vector<DecoderLayerSpec> layers;

  /// Shape [C, T, H, W] entering the first conv (after any temporal pooling).
  Shape entry_shape() const;
  /// Output shape after each layer, in order.
  std::vector<Shape> trace() const;
  Shape output_shape() const;
  void validate() const;
};

/// Throws ConfigError when the variant cannot be realised for this config.
DecoderSchedule build_schedule(const ModelConfig& config, DecoderVariant variant);

/// Channel taper of the baseline scaled to the fused width 2C: 10 entries, 2C ... 1.
std::vector<std::int64_t> baseline_channels(std::int64_t fused_channels);

std::int64_t conv_parameter_count(const ConvSpec& spec, bool with_bias = true);
/// Sum over every conv of C_out * C_in/groups * k_t * k_h * k_w + C_out.
std::int64_t parameter_count(const DecoderSchedule& schedule);

template <typename T>
struct DecoderWeights {
  struct Conv {
    Tensor<T> weight, bias;
  };
  /// One conv per layer, two (depthwise, pointwise) for separable layers.
  std::vector<std::vector<Conv>> layers;

  static DecoderWeights init(const DecoderSchedule& schedule, Rng& rng);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// fused [2C, T/2, H/4, W/4] -> saliency map [1, 1, H, W] in (0, 1).
template <typename T>
Tensor<T> decode(const Tensor<T>& fused, const DecoderSchedule& schedule, const DecoderWeights<T>& weights);

}  // namespace thtd
