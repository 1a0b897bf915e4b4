#include "thtd/encoder.hpp"

#include <cmath>

#include "thtd/ops.hpp"

namespace thtd {

template <typename T>
Tensor<T> trunc_normal_param(Shape shape, Rng& rng, double std) {
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.trunc_normal(std));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> constant_param(Shape shape, T value) {
  return Tensor<T>::full(std::move(shape), value, true);
}

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
BlockWeights<T> init_block(std::int64_t c, std::int64_t ratio, Rng& rng) {
  BlockWeights<T> b;
  b.norm1_gamma = constant_param<T>({c}, T(1));
  b.norm1_beta = constant_param<T>({c}, T(0));
  auto proj = [&](Tensor<T>& w, Tensor<T>& bias) {
    w = trunc_normal_param<T>({c, c}, rng, kInitStd);
    bias = constant_param<T>({c}, T(0));
  };
  proj(b.attn.wq, b.attn.bq);
  proj(b.attn.wk, b.attn.bk);
  proj(b.attn.wv, b.attn.bv);
  proj(b.attn.wo, b.attn.bo);
  b.norm2_gamma = constant_param<T>({c}, T(1));
  b.norm2_beta = constant_param<T>({c}, T(0));
  b.fc1_w = trunc_normal_param<T>({ratio * c, c}, rng, kInitStd);
  b.fc1_b = constant_param<T>({ratio * c}, T(0));
  b.fc2_w = trunc_normal_param<T>({c, ratio * c}, rng, kInitStd);
  b.fc2_b = constant_param<T>({c}, T(0));
  return b;
}

template <typename T>
void push(ParamList<T>& out, const std::string& name, const Tensor<T>& t) {
  out.push_back({name, t});
}

}  // namespace

template <typename T>
EncoderWeights<T> EncoderWeights<T>::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderWeights w;
  w.embed_w = trunc_normal_param<T>({cfg.embed_dim, cfg.raw_token_dim()}, rng, kInitStd);
  w.embed_b = constant_param<T>({cfg.embed_dim}, T(0));
  for (int s = 0; s < 4; ++s) {
    auto& st = w.stages[s];
    const auto c = cfg.stage_channels(s);
    if (s > 0) st.merge_w = trunc_normal_param<T>({c, 2 * c}, rng, kInitStd);
    for (std::int64_t b = 0; b < cfg.depths[s]; ++b) st.blocks.push_back(init_block<T>(c, cfg.mlp_ratio, rng));
    st.out_norm_gamma = constant_param<T>({c}, T(1));
    st.out_norm_beta = constant_param<T>({c}, T(0));
  }
  return w;
}

template <typename T>
void EncoderWeights<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  push(out, prefix + "embed.weight", embed_w);
  push(out, prefix + "embed.bias", embed_b);
  for (int s = 0; s < 4; ++s) {
    const auto& st = stages[s];
    const std::string sp = prefix + "stage" + std::to_string(s + 1) + ".";
    if (st.merge_w.defined()) push(out, sp + "merge.weight", st.merge_w);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      const auto& bl = st.blocks[b];
      const std::string bp = sp + "block" + std::to_string(b) + ".";
      push(out, bp + "norm1.gamma", bl.norm1_gamma);
      push(out, bp + "norm1.beta", bl.norm1_beta);
      push(out, bp + "attn.q.weight", bl.attn.wq);
      push(out, bp + "attn.q.bias", bl.attn.bq);
      push(out, bp + "attn.k.weight", bl.attn.wk);
      push(out, bp + "attn.k.bias", bl.attn.bk);
      push(out, bp + "attn.v.weight", bl.attn.wv);
      push(out, bp + "attn.v.bias", bl.attn.bv);
      push(out, bp + "attn.proj.weight", bl.attn.wo);
      push(out, bp + "attn.proj.bias", bl.attn.bo);
      push(out, bp + "norm2.gamma", bl.norm2_gamma);
      push(out, bp + "norm2.beta", bl.norm2_beta);
      push(out, bp + "mlp.fc1.weight", bl.fc1_w);
      push(out, bp + "mlp.fc1.bias", bl.fc1_b);
      push(out, bp + "mlp.fc2.weight", bl.fc2_w);
      push(out, bp + "mlp.fc2.bias", bl.fc2_b);
    }
    push(out, sp + "out_norm.gamma", st.out_norm_gamma);
    push(out, sp + "out_norm.beta", st.out_norm_beta);
  }
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& clip) {
  const auto& s = clip.shape();
  if (s.size() != 4 || s[3] != 3)
    throw ShapeError("patchify: expected a [T, H, W, 3] clip, got " + shape_str(s));
  if (s[0] % 2 != 0 || s[1] % 4 != 0 || s[2] % 4 != 0)
    throw ConfigError("patchify: clip " + shape_str(s) + " is not divisible into 2x4x4 patches");
  auto x = reshape(clip, {s[0] / 2, 2, s[1] / 4, 4, s[2] / 4, 4, 3});
  x = permute(x, {0, 2, 4, 1, 3, 5, 6});
  return reshape(x, {s[0] / 2, s[1] / 4, s[2] / 4, 96});
}

template <typename T>
Tensor<T> patch_embed(const Tensor<T>& clip, const Tensor<T>& weight, const Tensor<T>& bias) {
  return linear(patchify(clip), weight, bias);
}

template <typename T>
Tensor<T> window_attention(const Tensor<T>& tokens, const AttentionWeights<T>& w, const Dims3& window,
                           std::int64_t heads, Tensor<T>* probs) {
  const auto& s = tokens.shape();
  if (s.size() != 4) throw ShapeError("window_attention: expected [T, H, W, C] tokens, got " + shape_str(s));
  const std::int64_t c = s[3];
  for (int a = 0; a < 3; ++a)
    if (window[a] < 1 || s[a] % window[a] != 0)
      throw ConfigError("window_attention: window " + std::to_string(window[0]) + "x" +
                        std::to_string(window[1]) + "x" + std::to_string(window[2]) +
                        " does not divide token grid " + shape_str(Shape(s.begin(), s.begin() + 3)));
  if (heads < 1 || c % heads != 0)
    throw ConfigError("window_attention: " + std::to_string(heads) + " heads do not divide " +
                      std::to_string(c) + " channels");
  const std::int64_t nt = s[0] / window[0], nh = s[1] / window[1], nw = s[2] / window[2];
  const std::int64_t n_win = nt * nh * nw;
  const std::int64_t n_tok = window[0] * window[1] * window[2];
  const std::int64_t hd = c / heads;

  auto x = reshape(tokens, {nt, window[0], nh, window[1], nw, window[2], c});
  x = reshape(permute(x, {0, 2, 4, 1, 3, 5, 6}), {n_win, n_tok, c});

  auto split_heads = [&](const Tensor<T>& t) {
    return reshape(permute(reshape(t, {n_win, n_tok, heads, hd}), {0, 2, 1, 3}), {n_win * heads, n_tok, hd});
  };
  auto q = split_heads(scale(linear(x, w.wq, w.bq), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)))));
  auto k = split_heads(linear(x, w.wk, w.bk));
  auto v = split_heads(linear(x, w.wv, w.bv));

  auto attn = softmax(bmm(q, k, /*transpose_b=*/true), -1);
  if (probs) *probs = attn;
  auto ctx = bmm(attn, v);
  ctx = reshape(permute(reshape(ctx, {n_win, heads, n_tok, hd}), {0, 2, 1, 3}), {n_win, n_tok, c});
  auto y = linear(ctx, w.wo, w.bo);

  y = reshape(y, {nt, nh, nw, window[0], window[1], window[2], c});
  return reshape(permute(y, {0, 3, 1, 4, 2, 5, 6}), s);
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& tokens, const BlockWeights<T>& w, const Dims3& window,
                            std::int64_t heads) {
  auto x = add(tokens, window_attention(layer_norm(tokens, w.norm1_gamma, w.norm1_beta), w.attn, window, heads));
  auto h = linear(layer_norm(x, w.norm2_gamma, w.norm2_beta), w.fc1_w, w.fc1_b);
  return add(x, linear(gelu(h), w.fc2_w, w.fc2_b));
}

template <typename T>
Tensor<T> patch_merge(const Tensor<T>& tokens, const Tensor<T>& weight) {
  const auto& s = tokens.shape();
  if (s.size() != 4) throw ShapeError("patch_merge: expected [T, H, W, C] tokens, got " + shape_str(s));
  if (s[1] % 2 != 0 || s[2] % 2 != 0)
    throw ShapeError("patch_merge: spatial token dims must be even, got " + shape_str(s));
  auto x = reshape(tokens, {s[0], s[1] / 2, 2, s[2] / 2, 2, s[3]});
  x = reshape(permute(x, {0, 1, 3, 2, 4, 5}), {s[0], s[1] / 2, s[2] / 2, 4 * s[3]});
  return linear(x, weight, Tensor<T>());
}

template <typename T>
StageFeatures<T> encode(const Tensor<T>& clip, const EncoderConfig& cfg, const EncoderWeights<T>& w) {
  cfg.validate();
  const Shape expected_clip{cfg.frames, cfg.height, cfg.width, 3};
  if (clip.shape() != expected_clip)
    throw ShapeError("encode: clip shape " + shape_str(clip.shape()) + " != configured " + shape_str(expected_clip));
  StageFeatures<T> out;
  auto x = patch_embed(clip, w.embed_w, w.embed_b);
  for (int s = 0; s < 4; ++s) {
    const auto& st = w.stages[s];
    if (s > 0) x = patch_merge(x, st.merge_w);
    const auto win = cfg.stage_window(s);
    for (const auto& block : st.blocks) x = transformer_block(x, block, win, cfg.heads[s]);
    auto f = permute(layer_norm(x, st.out_norm_gamma, st.out_norm_beta), {3, 0, 1, 2});
    if (f.shape() != cfg.feature_shape(s))
      throw ShapeError("encode: stage " + std::to_string(s + 1) + " produced " + shape_str(f.shape()) +
                       ", expected " + shape_str(cfg.feature_shape(s)));
    out.levels[s] = std::move(f);
  }
  return out;
}

#define THTD_INSTANTIATE_ENCODER(T)                                                                      \
  template Tensor<T> trunc_normal_param<T>(Shape, Rng&, double);                                       \
  template Tensor<T> constant_param<T>(Shape, T);                                                      \
  template struct EncoderWeights<T>;                                                                   \
  template Tensor<T> patchify(const Tensor<T>&);                                                       \
  template Tensor<T> patch_embed(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> window_attention(const Tensor<T>&, const AttentionWeights<T>&, const Dims3&,      \
                                      std::int64_t, Tensor<T>*);                                       \
  template Tensor<T> transformer_block(const Tensor<T>&, const BlockWeights<T>&, const Dims3&,         \
                                       std::int64_t);                                                  \
  template Tensor<T> patch_merge(const Tensor<T>&, const Tensor<T>&);                                  \
  template StageFeatures<T> encode(const Tensor<T>&, const EncoderConfig&, const EncoderWeights<T>&);

THTD_INSTANTIATE_ENCODER(float)
THTD_INSTANTIATE_ENCODER(double)

}  // namespace thtd
