#include "thtd/decoder.hpp"

#include <cmath>

namespace thtd {

namespace {

// Baseline taper for a 192-channel fused input.
constexpr std::int64_t kBaseChannels[10] = {192, 192, 128, 128, 96, 64, 64, 32, 16, 1};
// Layers (zero-based) that may halve time in the 9-layer baseline, and the ones
// preceded by a x2 spatial upsample.
constexpr int kReduceSlots[4] = {1, 3, 5, 7};
constexpr int kUpsampleSlots[2] = {4, 6};

int exact_log2(std::int64_t v) {
  if (v < 1 || (v & (v - 1)) != 0) return -1;
  int k = 0;
  while ((std::int64_t{1} << k) < v) ++k;
  return k;
}

std::vector<DecoderLayerSpec> baseline_layers(std::int64_t fused_channels, int halvings, bool separable) {
  if (halvings < 0 || halvings > 4)
    throw ConfigError("decoder: the 9-layer schedule reduces time at most 4 times (T/2 <= 16), needs " +
                      std::to_string(halvings));
  const auto ch = baseline_channels(fused_channels);
  std::vector<DecoderLayerSpec> layers(9);
  for (int i = 0; i < 9; ++i) {
    auto& l = layers[i];
    l.in_channels = ch[i];
    l.out_channels = ch[i + 1];
    l.activation = i == 8 ? Activation::sigmoid : Activation::relu;
    l.separable = separable;
  }
  // Shallower temporal inputs keep the later reductions and turn the earlier ones into plain layers.
  for (int s = 4 - halvings; s < 4; ++s) layers[kReduceSlots[s]].temporal_stride = 2;
  for (int s : kUpsampleSlots) layers[s].upsample_before = 2;
  return layers;
}

std::vector<DecoderLayerSpec> compressed_layers(std::int64_t fused_channels, int halvings, int n) {
  const auto ch = baseline_channels(fused_channels);
  std::vector<DecoderLayerSpec> layers(n);
  std::int64_t in = ch[0];
  for (int j = 0; j < n; ++j) {
    auto& l = layers[j];
    const int idx = static_cast<int>(std::floor((j + 1) * 9.0 / n + 0.5));
    l.in_channels = in;
    l.out_channels = ch[idx];
    in = l.out_channels;
    const int h = (halvings * (j + 1)) / n - (halvings * j) / n;
    l.temporal_stride = std::int64_t{1} << h;
    l.activation = j == n - 1 ? Activation::sigmoid : Activation::relu;
  }
  switch (n) {
    case 4:
      layers[2].upsample_before = 2;
      layers[3].upsample_before = 2;
      break;
    case 3:
      layers[1].upsample_before = 2;
      layers[2].upsample_before = 2;
      break;
    default:
      layers[1].upsample_before = 4;
      break;
  }
  return layers;
}

std::vector<DecoderLayerSpec> widen(const std::vector<DecoderLayerSpec>& base, int copies) {
  std::vector<DecoderLayerSpec> out;
  for (const auto& b : base) {
    auto l = b;
    l.activation = Activation::relu;
    out.push_back(l);
    for (int c = 1; c < copies; ++c) {
      DecoderLayerSpec extra;
      extra.in_channels = extra.out_channels = b.out_channels;
      out.push_back(extra);
    }
  }
  out.back().activation = Activation::sigmoid;
  return out;
}

}  // namespace

ConvSpec DecoderLayerSpec::conv_spec() const {
  ConvSpec s;
  s.kernel = {temporal_stride, 3, 3};
  s.stride = {temporal_stride, 1, 1};
  s.padding = {0, 1, 1};
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  return s;
}

ConvSpec DecoderLayerSpec::depthwise_spec() const {
  ConvSpec s = conv_spec();
  s.out_channels = in_channels;
  s.groups = in_channels;
  return s;
}

ConvSpec DecoderLayerSpec::pointwise_spec() const {
  ConvSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  return s;
}

std::vector<std::int64_t> baseline_channels(std::int64_t fused_channels) {
  std::vector<std::int64_t> ch(10);
  for (int i = 0; i < 10; ++i) {
    const double scaled = static_cast<double>(kBaseChannels[i]) * static_cast<double>(fused_channels) / 192.0;
    ch[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(scaled + 0.5)));
  }
  ch.front() = fused_channels;
  ch.back() = 1;
  return ch;
}

Shape DecoderSchedule::entry_shape() const {
  Shape s = input_shape;
  s[1] /= temporal_pool;
  return s;
}

std::vector<Shape> DecoderSchedule::trace() const {
  std::vector<Shape> out;
  Shape cur = entry_shape();
  for (const auto& l : layers) {
    if (cur[0] != l.in_channels)
      throw ShapeError("decoder schedule: layer expects " + std::to_string(l.in_channels) + " channels, gets " +
                       std::to_string(cur[0]));
    const auto od = l.conv_spec().output_dims(cur[1], cur[2] * l.upsample_before, cur[3] * l.upsample_before);
    cur = {l.out_channels, od[0], od[1], od[2]};
    out.push_back(cur);
  }
  return out;
}

Shape DecoderSchedule::output_shape() const {
  auto t = trace();
  return t.empty() ? entry_shape() : t.back();
}

void DecoderSchedule::validate() const {
  if (input_shape.size() != 4) throw ConfigError("decoder schedule: input shape must be [C, T, H, W]");
  if (temporal_pool < 1 || input_shape[1] % temporal_pool != 0)
    throw ConfigError("decoder schedule: temporal pool " + std::to_string(temporal_pool) +
                      " does not divide T/2 = " + std::to_string(input_shape[1]));
  if (layers.empty()) throw ConfigError("decoder schedule: no layers");
  const auto tr = trace();
  Shape cur = entry_shape();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const bool last = i + 1 == layers.size();
    if ((l.activation == Activation::sigmoid) != last)
      throw ConfigError("decoder schedule: exactly the final layer must use sigmoid");
    if (cur[1] % l.temporal_stride != 0)
      throw ConfigError("decoder schedule: layer " + std::to_string(i + 1) + " stride " +
                        std::to_string(l.temporal_stride) + " does not divide temporal dim " + std::to_string(cur[1]));
    cur = tr[i];
  }
  if (layers.back().out_channels != 1) throw ConfigError("decoder schedule: final layer must output 1 channel");
  const Shape want{1, 1, input_shape[2] * 4, input_shape[3] * 4};
  if (cur != want)
    throw ConfigError("decoder schedule ends at " + shape_str(cur) + " instead of " + shape_str(want));
}

DecoderSchedule build_schedule(const ModelConfig& config, DecoderVariant variant) {
  config.validate();
  DecoderSchedule s;
  s.variant = variant;
  s.input_shape = config.fused_shape();
  const std::int64_t t_half = s.input_shape[1];
  const int k = exact_log2(t_half);
  if (k < 1)
    throw ConfigError("decoder variant '" + std::string(variant_tag(variant)) +
                      "' needs T/2 to be a power of two >= 2, got " + std::to_string(t_half));
  const auto c2 = config.fused_channels();
  switch (variant) {
    case DecoderVariant::baseline:
      s.layers = baseline_layers(c2, k, false);
      break;
    case DecoderVariant::mobilenet:
      s.layers = baseline_layers(c2, k, true);
      break;
    case DecoderVariant::double_layers:
      s.layers = widen(baseline_layers(c2, k, false), 2);
      break;
    case DecoderVariant::triple_layers:
      s.layers = widen(baseline_layers(c2, k, false), 3);
      break;
    case DecoderVariant::half_temporal:
      s.temporal_pool = 2;
      s.layers = baseline_layers(c2, k - 1, false);
      break;
    case DecoderVariant::layers4:
      s.layers = compressed_layers(c2, k, 4);
      break;
    case DecoderVariant::layers3:
      s.layers = compressed_layers(c2, k, 3);
      break;
    case DecoderVariant::layers2:
      s.layers = compressed_layers(c2, k, 2);
      break;
  }
  s.validate();
  return s;
}

std::int64_t conv_parameter_count(const ConvSpec& spec, bool with_bias) {
  return numel(spec.weight_shape()) + (with_bias ? spec.out_channels : 0);
}

std::int64_t parameter_count(const DecoderSchedule& schedule) {
  std::int64_t total = 0;
  for (const auto& l : schedule.layers) {
    if (l.separable)
      total += conv_parameter_count(l.depthwise_spec()) + conv_parameter_count(l.pointwise_spec());
    else
      total += conv_parameter_count(l.conv_spec());
  }
  return total;
}

template <typename T>
DecoderWeights<T> DecoderWeights<T>::init(const DecoderSchedule& schedule, Rng& rng) {
  auto make = [&rng](const ConvSpec& spec) {
    const auto ws = spec.weight_shape();
    const double fan_in = static_cast<double>(ws[1] * ws[2] * ws[3] * ws[4]);
    const double std = std::sqrt(2.0 / fan_in);
    std::vector<T> data(static_cast<std::size_t>(numel(ws)));
    for (auto& v : data) v = static_cast<T>(rng.normal() * std);
    return Conv{Tensor<T>::from_data(ws, std::move(data), true), constant_param<T>({spec.out_channels}, T(0))};
  };
  DecoderWeights w;
  for (const auto& l : schedule.layers) {
    if (l.separable)
      w.layers.push_back({make(l.depthwise_spec()), make(l.pointwise_spec())});
    else
      w.layers.push_back({make(l.conv_spec())});
  }
  return w;
}

template <typename T>
void DecoderWeights<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string lp = prefix + "layer" + std::to_string(i + 1) + ".";
    for (std::size_t j = 0; j < layers[i].size(); ++j) {
      const std::string cp = layers[i].size() == 1 ? lp : lp + (j == 0 ? "depthwise." : "pointwise.");
      out.push_back({cp + "weight", layers[i][j].weight});
      out.push_back({cp + "bias", layers[i][j].bias});
    }
  }
}

template <typename T>
Tensor<T> decode(const Tensor<T>& fused, const DecoderSchedule& schedule, const DecoderWeights<T>& weights) {
  if (fused.shape() != schedule.input_shape)
    throw ShapeError("decode: fused input " + shape_str(fused.shape()) + " does not match schedule entry " +
                     shape_str(schedule.input_shape));
  if (weights.layers.size() != schedule.layers.size())
    throw ShapeError("decode: weights hold " + std::to_string(weights.layers.size()) + " layers, schedule has " +
                     std::to_string(schedule.layers.size()));
  const auto trace = schedule.trace();
  const auto& in = schedule.input_shape;
  auto x = reshape(fused, {1, in[0], in[1], in[2], in[3]});
  if (schedule.temporal_pool > 1) x = avg_pool_temporal(x, schedule.temporal_pool);
  for (std::size_t i = 0; i < schedule.layers.size(); ++i) {
    const auto& l = schedule.layers[i];
    const auto& w = weights.layers[i];
    if (l.upsample_before > 1) x = upsample_spatial(x, l.upsample_before);
    if (l.separable) {
      x = relu(conv3d(x, l.depthwise_spec(), w[0].weight, w[0].bias));
      x = conv3d(x, l.pointwise_spec(), w[1].weight, w[1].bias);
    } else {
      x = conv3d(x, l.conv_spec(), w[0].weight, w[0].bias);
    }
    x = l.activation == Activation::sigmoid ? sigmoid(x) : relu(x);
    const auto& got = x.shape();
    if (Shape(got.begin() + 1, got.end()) != trace[i])
      throw ShapeError("decode: layer " + std::to_string(i + 1) + " produced " + shape_str(got) +
                       ", schedule expects " + shape_str(trace[i]));
  }
  const auto& o = x.shape();
  return reshape(x, {o[1], o[2], o[3], o[4]});
}

template struct DecoderWeights<float>;
template struct DecoderWeights<double>;
template Tensor<float> decode(const Tensor<float>&, const DecoderSchedule&, const DecoderWeights<float>&);
template Tensor<double> decode(const Tensor<double>&, const DecoderSchedule&, const DecoderWeights<double>&);

}  // namespace thtd
