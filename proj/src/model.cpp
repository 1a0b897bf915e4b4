#include "thtd/model.hpp"

#include <sstream>

#include "thtd/random.hpp"

namespace thtd {

namespace {
enum SeedStream : std::uint64_t { kEncoderStream = 1, kFusionStream = 2, kDecoderStream = 3 };
}

template <typename T>
ThtdNet<T>::ThtdNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config), schedule_(build_schedule(config, config.variant)) {
  Rng enc_rng(mix_seed(seed, kEncoderStream));
  Rng fus_rng(mix_seed(seed, kFusionStream));
  Rng dec_rng(mix_seed(seed, kDecoderStream));
  encoder = EncoderWeights<T>::init(config_.encoder, enc_rng);
  fusion = FusionWeights<T>::init(config_.encoder, fus_rng);
  decoder = DecoderWeights<T>::init(schedule_, dec_rng);
}

template <typename T>
Tensor<T> ThtdNet<T>::forward(const Tensor<T>& clip) const {
  return forward(clip, nullptr, nullptr);
}

template <typename T>
Tensor<T> ThtdNet<T>::forward(const Tensor<T>& clip, StageFeatures<T>* features, Tensor<T>* fused) const {
  auto f = encode(clip, config_.encoder, encoder);
  auto z = fuse(f, fusion);
  if (features) *features = f;
  if (fused) *fused = z;
  return decode(z, schedule_, decoder);
}

template <typename T>
ParamList<T> ThtdNet<T>::named_parameters() const {
  ParamList<T> out;
  encoder.collect("encoder.", out);
  fusion.collect("fusion.", out);
  decoder.collect("decoder.", out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> ThtdNet<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::int64_t ThtdNet<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
ThtdNet<T> ThtdNet<T>::clone() const {
  ThtdNet copy(config_, 0);
  auto src = named_parameters();
  auto dst = copy.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].tensor.storage() = src[i].tensor.storage();
  return copy;
}

ShapeReport dry_run_shapes(const ModelConfig& config) {
  config.validate();
  ShapeReport r;
  for (int s = 0; s < 4; ++s) r.features[s] = config.encoder.feature_shape(s);
  r.fused = config.fused_shape();
  const auto schedule = build_schedule(config, config.variant);
  r.decoder_entry = schedule.entry_shape();
  r.decoder_trace = schedule.trace();
  r.output = schedule.output_shape();
  return r;
}

std::string format_shape_report(const ModelConfig& config, const ShapeReport& report) {
  const auto& e = config.encoder;
  std::ostringstream os;
  os << "input clip: " << e.frames << "x" << e.height << "x" << e.width << "x3\n";
  os << "tokens: " << e.frames / 2 << "x" << e.height / 4 << "x" << e.width / 4 << " (raw dim "
     << e.raw_token_dim() << " -> C=" << e.embed_dim << ")\n";
  for (int s = 0; s < 4; ++s) os << "F" << (s + 1) << ": " << shape_str(report.features[s]) << "\n";
  os << "fused: " << shape_str(report.fused) << "\n";
  os << "decoder (" << variant_tag(config.variant) << "): entry " << shape_str(report.decoder_entry) << "\n";
  for (std::size_t i = 0; i < report.decoder_trace.size(); ++i)
    os << "  L" << (i + 1) << ": " << shape_str(report.decoder_trace[i]) << "\n";
  os << "output: " << shape_str(report.output) << "\n";
  return os.str();
}

template class ThtdNet<float>;
template class ThtdNet<double>;

}  // namespace thtd
