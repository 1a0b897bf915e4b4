#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "thtd/config.hpp"
#include "thtd/decoder.hpp"
#include "thtd/encoder.hpp"
#include "thtd/fusion.hpp"

namespace thtd {

/// Encoder + fusion + decoder. Parameters are shared handles: copying the
/// network shares weights, clone() copies them.
template <typename T>
class ThtdNet {
 public:
  /// Encoder, fusion and decoder draw from independent seed streams, so
  /// variants built from one seed share identical encoder/fusion weights.
  ThtdNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const DecoderSchedule& schedule() const { return schedule_; }

  /// clip [T, H, W, 3] -> saliency map [1, 1, H, W].
  Tensor<T> forward(const Tensor<T>& clip) const;
  Tensor<T> forward(const Tensor<T>& clip, StageFeatures<T>* features, Tensor<T>* fused) const;

  ParamList<T> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::int64_t parameter_count() const;
  ThtdNet clone() const;

  EncoderWeights<T> encoder;
  FusionWeights<T> fusion;
  DecoderWeights<T> decoder;

 private:
  ModelConfig config_;
  DecoderSchedule schedule_;
};

/// Shapes the network produces for a config, derived without allocating weights.
struct ShapeReport {
  std::array<Shape, 4> features;
  Shape fused;
  Shape decoder_entry;
  std::vector<Shape> decoder_trace;
  Shape output;
};

ShapeReport dry_run_shapes(const ModelConfig& config);
std::string format_shape_report(const ModelConfig& config, const ShapeReport& report);

extern template class ThtdNet<float>;
extern template class ThtdNet<double>;

}  // namespace thtd
