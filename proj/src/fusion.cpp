#include "thtd/fusion.hpp"

#include <cmath>

#include "thtd/ops.hpp"

namespace thtd {

template <typename T>
FusionWeights<T> FusionWeights<T>::init(const EncoderConfig& cfg, Rng& rng) {
  FusionWeights w;
  const auto out = 2 * cfg.embed_dim;
  for (int s = 0; s < 4; ++s) {
    const auto in = cfg.stage_channels(s);
    // He-normal keeps the summed levels at unit-ish scale for the ReLU decoder.
    std::vector<T> data(static_cast<std::size_t>(out * in));
    const double std = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& v : data) v = static_cast<T>(rng.normal() * std);
    w.weight[s] = Tensor<T>::from_data({out, in, 1, 1, 1}, std::move(data), true);
    w.bias[s] = constant_param<T>({out}, T(0));
  }
  return w;
}

template <typename T>
void FusionWeights<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (int s = 0; s < 4; ++s) {
    const std::string p = prefix + "proj" + std::to_string(s + 1) + ".";
    out.push_back({p + "weight", weight[s]});
    out.push_back({p + "bias", bias[s]});
  }
}

template <typename T>
Tensor<T> project_stage(const Tensor<T>& feature, int stage, const FusionWeights<T>& w) {
  if (stage < 0 || stage > 3) throw ConfigError("project_stage: stage index must be 0..3");
  const auto& s = feature.shape();
  if (s.size() != 4) throw ShapeError("project_stage: expected [C_i, T, H, W], got " + shape_str(s));
  const auto& ws = w.weight[stage].shape();
  if (s[0] != ws[1])
    throw ShapeError("project_stage: stage " + std::to_string(stage + 1) + " expects " + std::to_string(ws[1]) +
                     " channels, got " + std::to_string(s[0]));
  ConvSpec spec;
  spec.in_channels = ws[1];
  spec.out_channels = ws[0];
  auto y = conv3d(reshape(feature, {1, s[0], s[1], s[2], s[3]}), spec, w.weight[stage], w.bias[stage]);
  return reshape(y, {ws[0], s[1], s[2], s[3]});
}

template <typename T>
Tensor<T> align_and_sum(const std::array<Tensor<T>, 4>& projected) {
  Tensor<T> acc;
  for (int s = 0; s < 4; ++s) {
    const auto& p = projected[s];
    if (p.rank() != 4) throw ShapeError("align_and_sum: expected [2C, T, h, w], got " + shape_str(p.shape()));
    const auto& ps = p.shape();
    auto up = upsample_spatial(reshape(p, {1, ps[0], ps[1], ps[2], ps[3]}), fusion_upsample_factor(s));
    const auto& us = up.shape();
    auto aligned = reshape(up, {us[1], us[2], us[3], us[4]});
    if (s == 0) {
      acc = aligned;
    } else {
      if (aligned.shape() != acc.shape())
        throw ShapeError("align_and_sum: stage " + std::to_string(s + 1) + " aligns to " +
                         shape_str(aligned.shape()) + " but stage 1 is " + shape_str(acc.shape()));
      acc = add(acc, aligned);
    }
  }
  return acc;
}

template <typename T>
Tensor<T> fuse(const StageFeatures<T>& features, const FusionWeights<T>& w) {
  std::array<Tensor<T>, 4> projected;
  for (int s = 0; s < 4; ++s) projected[s] = project_stage(features.levels[s], s, w);
  return align_and_sum(projected);
}

template struct FusionWeights<float>;
template struct FusionWeights<double>;
template Tensor<float> project_stage(const Tensor<float>&, int, const FusionWeights<float>&);
template Tensor<double> project_stage(const Tensor<double>&, int, const FusionWeights<double>&);
template Tensor<float> align_and_sum(const std::array<Tensor<float>, 4>&);
template Tensor<double> align_and_sum(const std::array<Tensor<double>, 4>&);
template Tensor<float> fuse(const StageFeatures<float>&, const FusionWeights<float>&);
template Tensor<double> fuse(const StageFeatures<double>&, const FusionWeights<double>&);

}  // namespace thtd
