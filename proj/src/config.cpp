#include "thtd/config.hpp"

#include <algorithm>

namespace thtd {

namespace {

struct VariantName {
  DecoderVariant variant;
  std::string_view tag;
};

constexpr VariantName kVariants[] = {
    {DecoderVariant::baseline, "baseline"},       {DecoderVariant::layers4, "layers4"},
    {DecoderVariant::layers3, "layers3"},         {DecoderVariant::layers2, "layers2"},
    {DecoderVariant::double_layers, "double"},    {DecoderVariant::triple_layers, "triple"},
    {DecoderVariant::mobilenet, "mobilenet"},     {DecoderVariant::half_temporal, "half_temporal"},
};

std::string dims(const Dims3& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

}  // namespace

std::string_view variant_tag(DecoderVariant v) {
  for (const auto& e : kVariants)
    if (e.variant == v) return e.tag;
  return "unknown";
}

DecoderVariant parse_variant(std::string_view tag) {
  for (const auto& e : kVariants)
    if (e.tag == tag) return e.variant;
  std::string valid;
  for (const auto& e : kVariants) {
    if (!valid.empty()) valid += ", ";
    valid += e.tag;
  }
  throw ConfigError("unknown decoder variant '" + std::string(tag) + "'; valid variants: " + valid);
}

const std::vector<DecoderVariant>& all_variants() {
  static const std::vector<DecoderVariant> v = [] {
    std::vector<DecoderVariant> out;
    for (const auto& e : kVariants) out.push_back(e.variant);
    return out;
  }();
  return v;
}

Dims3 EncoderConfig::token_grid(int stage) const {
  const std::int64_t f = std::int64_t{1} << stage;
  return {frames / patch[0], height / patch[1] / f, width / patch[2] / f};
}

Dims3 EncoderConfig::stage_window(int stage) const {
  const auto grid = token_grid(stage);
  return {std::min(window[0], grid[0]), std::min(window[1], grid[1]), std::min(window[2], grid[2])};
}

Shape EncoderConfig::feature_shape(int stage) const {
  const auto g = token_grid(stage);
  return {stage_channels(stage), g[0], g[1], g[2]};
}

void EncoderConfig::validate() const {
  if (patch != Dims3{2, 4, 4})
    throw ConfigError("patch size must be 2x4x4, got " + dims(patch));
  if (frames < 2 || frames % 2 != 0)
    throw ConfigError("clip length T must be a positive even number, got " + std::to_string(frames));
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0)
    throw ConfigError("frame size must be a positive multiple of 32 on both axes, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  if (embed_dim < 1) throw ConfigError("embedding width C must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
  for (auto w : window)
    if (w < 1) throw ConfigError("attention window entries must be >= 1, got " + dims(window));
  for (int s = 0; s < 4; ++s) {
    if (heads[s] < 1 || stage_channels(s) % heads[s] != 0)
      throw ConfigError("stage " + std::to_string(s + 1) + ": " + std::to_string(heads[s]) +
                        " heads do not divide " + std::to_string(stage_channels(s)) + " channels");
    if (depths[s] < 0) throw ConfigError("stage depths must be >= 0");
    const auto grid = token_grid(s);
    const auto win = stage_window(s);
    for (int a = 0; a < 3; ++a)
      if (grid[a] % win[a] != 0)
        throw ConfigError("stage " + std::to_string(s + 1) + ": window " + dims(win) +
                          " does not divide token grid " + dims(grid));
  }
}

Shape ModelConfig::fused_shape() const {
  const auto g = encoder.token_grid(0);
  return {fused_channels(), g[0], g[1], g[2]};
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.encoder.frames = 32;
  c.encoder.height = 224;
  c.encoder.width = 384;
  c.encoder.embed_dim = 96;
  c.encoder.window = {8, 7, 6};
  c.encoder.heads = {3, 6, 12, 24};
  c.encoder.depths = {2, 2, 18, 2};
  return c;
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::profile(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  throw ConfigError("unknown profile '" + std::string(name) + "'; valid profiles: paper, toy");
}

bool operator==(const EncoderConfig& a, const EncoderConfig& b) {
  return a.frames == b.frames && a.height == b.height && a.width == b.width && a.embed_dim == b.embed_dim &&
         a.patch == b.patch && a.window == b.window && a.heads == b.heads && a.depths == b.depths &&
         a.mlp_ratio == b.mlp_ratio;
}

}  // namespace thtd
