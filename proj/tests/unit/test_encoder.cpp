#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "thtd/encoder.hpp"
#include "thtd/model.hpp"

using namespace thtd;
using testing::max_abs_diff;
using testing::random_tensor;
using TD = Tensor<double>;

namespace {

AttentionWeights<double> identity_attention(std::int64_t c) {
  std::vector<double> eye(static_cast<std::size_t>(c * c), 0.0);
  for (std::int64_t i = 0; i < c; ++i) eye[static_cast<std::size_t>(i * c + i)] = 1.0;
  auto I = [&] { return TD::from_data({c, c}, eye); };
  auto Z = [&] { return TD::zeros({c}); };
  return {I(), Z(), I(), Z(), I(), Z(), I(), Z()};
}

AttentionWeights<double> random_attention(std::int64_t c, Rng& rng) {
  auto W = [&] { return random_tensor({c, c}, rng, false, 0.5); };
  auto B = [&] { return random_tensor({c}, rng, false, 0.1); };
  return {W(), B(), W(), B(), W(), B(), W(), B()};
}

}  // namespace

TEST_CASE("patchify matches an index-enumeration oracle") {
  Rng rng(1);
  auto clip = random_tensor({8, 32, 64, 3}, rng);
  auto p = patchify(clip);
  REQUIRE(p.shape() == Shape{4, 8, 16, 96});
  const auto& c = clip.storage();
  double worst = 0;
  for (int t = 0; t < 4; ++t)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 16; ++x)
        for (int dt = 0; dt < 2; ++dt)
          for (int dy = 0; dy < 4; ++dy)
            for (int dx = 0; dx < 4; ++dx)
              for (int ch = 0; ch < 3; ++ch) {
                const auto slot = ((dt * 4 + dy) * 4 + dx) * 3 + ch;
                const auto src = (((2 * t + dt) * 32 + 4 * y + dy) * 64 + 4 * x + dx) * 3 + ch;
                const auto dst = ((t * 8 + y) * 16 + x) * 96 + slot;
                worst = std::max(worst, std::abs(p.storage()[dst] - c[src]));
              }
  CHECK(worst == 0.0);
}

TEST_CASE("patchify constant clip and paper grid") {
  auto p = patchify(TD::full({4, 8, 8, 3}, 0.25));
  for (double v : p.storage()) CHECK(v == 0.25);
  EncoderConfig paper = ModelConfig::paper().encoder;
  CHECK(paper.token_grid(0) == Dims3{16, 56, 96});
  CHECK(paper.raw_token_dim() == 96);
  CHECK(ModelConfig::toy().encoder.token_grid(0) == Dims3{4, 8, 16});
  CHECK_THROWS_AS(patchify(TD::zeros({3, 8, 8, 3})), ConfigError);
  CHECK_THROWS_AS(patchify(TD::zeros({4, 6, 8, 3})), ConfigError);
}

TEST_CASE("window attention equals dense attention on a single window") {
  Rng rng(2);
  const std::int64_t c = 6;
  auto tokens = random_tensor({2, 2, 3, c}, rng);
  TD probs;
  auto out = window_attention(tokens, identity_attention(c), {2, 2, 3}, 1, &probs);
  const auto& x = tokens.storage();
  const int n = 12;
  std::vector<double> ref(static_cast<std::size_t>(n * c), 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      double d = 0;
      for (int k = 0; k < c; ++k) d += x[i * c + k] * x[j * c + k];
      logits[j] = d / std::sqrt(double(c));
      mx = std::max(mx, logits[j]);
    }
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < c; ++k) ref[i * c + k] += logits[j] / z * x[j * c + k];
  }
  CHECK(max_abs_diff(out.storage(), ref) <= 1e-10);
  CHECK(probs.shape() == Shape{1, 12, 12});
}

TEST_CASE("attention rows sum to one") {
  Rng rng(3);
  auto tokens = random_tensor({2, 4, 4, 8}, rng);
  TD probs;
  window_attention(tokens, random_attention(8, rng), {2, 2, 2}, 2, &probs);
  CHECK(probs.shape() == Shape{4 * 2, 8, 8});
  for (std::int64_t r = 0; r < probs.numel() / 8; ++r) {
    double acc = 0;
    for (int k = 0; k < 8; ++k) acc += probs.storage()[r * 8 + k];
    CHECK(std::abs(acc - 1.0) <= 1e-9);
  }
}

TEST_CASE("window locality") {
  Rng rng(4);
  const std::int64_t c = 4;
  auto w = random_attention(c, rng);
  auto tokens = random_tensor({2, 4, 4, c}, rng, true);
  const Dims3 win{2, 2, 4};  // two windows split along rows
  auto in_b = [](std::int64_t tok) { return (tok / 4) % 4 >= 2; };  // row of token

  auto base = window_attention(tokens.detach(), w, win, 2);
  auto perturbed_in = tokens.detach();
  perturbed_in.storage()[(0 * 16 + 1 * 4 + 2) * c + 1] += 3.0;  // token in window A (row 1)
  auto perturbed = window_attention(perturbed_in, w, win, 2);
  bool a_changed = false;
  for (std::int64_t i = 0; i < base.numel(); ++i) {
    const auto tok = i / c;
    if (in_b(tok)) {
      CHECK(base.storage()[i] == perturbed.storage()[i]);
    } else {
      a_changed |= base.storage()[i] != perturbed.storage()[i];
    }
  }
  CHECK(a_changed);

  // gradient of window-B outputs w.r.t. window-A tokens is exactly zero
  auto out = window_attention(tokens, w, win, 2);
  std::vector<double> mask(static_cast<std::size_t>(out.numel()));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = in_b(static_cast<std::int64_t>(i) / c) ? 1.0 : 0.0;
  backward(sum(mul(out, TD::from_data(out.shape(), mask))));
  auto g = tokens.grad();
  double outside = 0, inside = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    (in_b(static_cast<std::int64_t>(i) / c) ? inside : outside) += std::abs(g[i]);
  CHECK(outside == 0.0);
  CHECK(inside > 0.0);
}

TEST_CASE("window attention errors") {
  Rng rng(5);
  auto w = random_attention(4, rng);
  CHECK_THROWS_AS(window_attention(TD::zeros({2, 4, 4, 4}), w, {2, 3, 4}, 1), ConfigError);
  CHECK_THROWS_AS(window_attention(TD::zeros({2, 4, 4, 4}), w, {2, 2, 2}, 3), ConfigError);
}

TEST_CASE("patch merge: selector projection and locality") {
  Rng rng(6);
  const std::int64_t c = 3;
  auto x = random_tensor({2, 4, 6, c}, rng);
  std::vector<double> sel(static_cast<std::size_t>(2 * c * 4 * c), 0.0);
  for (std::int64_t i = 0; i < c; ++i) sel[static_cast<std::size_t>(i * 4 * c + i)] = 1.0;
  auto y = patch_merge(x, TD::from_data({2 * c, 4 * c}, sel));
  REQUIRE(y.shape() == Shape{2, 2, 3, 2 * c});
  for (int t = 0; t < 2; ++t)
    for (int r = 0; r < 2; ++r)
      for (int q = 0; q < 3; ++q)
        for (int k = 0; k < c; ++k) {
          CHECK(y.storage()[((t * 2 + r) * 3 + q) * 2 * c + k] == x.storage()[((t * 4 + 2 * r) * 6 + 2 * q) * c + k]);
          CHECK(y.storage()[((t * 2 + r) * 3 + q) * 2 * c + c + k] == 0.0);
        }

  auto w = random_tensor({2 * c, 4 * c}, rng);
  auto base = patch_merge(x, w);
  for (int probe = 0; probe < 10; ++probe) {
    const int t = probe % 2, r = probe % 4, q = (probe * 5) % 6;
    auto xp = x.detach();
    xp.storage()[((t * 4 + r) * 6 + q) * c + probe % c] += 1.0;
    auto yp = patch_merge(xp, w);
    for (int tt = 0; tt < 2; ++tt)
      for (int rr = 0; rr < 2; ++rr)
        for (int qq = 0; qq < 3; ++qq) {
          const bool owner = tt == t && rr == r / 2 && qq == q / 2;
          double d = 0;
          for (int k = 0; k < 2 * c; ++k) {
            const auto i = ((tt * 2 + rr) * 3 + qq) * 2 * c + k;
            d += std::abs(yp.storage()[i] - base.storage()[i]);
          }
          if (owner) {
            CHECK(d > 0.0);
          } else {
            CHECK(d == 0.0);
          }
        }
  }
  CHECK_THROWS_AS(patch_merge(TD::zeros({2, 3, 4, c}), w), ShapeError);
}

TEST_CASE("encode produces the pyramid shapes") {
  auto cfg = ModelConfig::toy().encoder;
  Rng rng(7);
  auto w = EncoderWeights<double>::init(cfg, rng);
  auto f = encode(random_tensor({8, 32, 64, 3}, rng), cfg, w);
  CHECK(f.levels[0].shape() == Shape{16, 4, 8, 16});
  CHECK(f.levels[1].shape() == Shape{32, 4, 4, 8});
  CHECK(f.levels[2].shape() == Shape{64, 4, 2, 4});
  CHECK(f.levels[3].shape() == Shape{128, 4, 1, 2});

  auto paper = ModelConfig::paper().encoder;
  CHECK(paper.feature_shape(0) == Shape{96, 16, 56, 96});
  CHECK(paper.feature_shape(1) == Shape{192, 16, 28, 48});
  CHECK(paper.feature_shape(2) == Shape{384, 16, 14, 24});
  CHECK(paper.feature_shape(3) == Shape{768, 16, 7, 12});
}

TEST_CASE("shape contract holds across configs") {
  for (auto [t, h, wd, c] : std::vector<std::array<std::int64_t, 4>>{{2, 32, 32, 4}, {4, 64, 32, 8}, {8, 32, 128, 4}}) {
    EncoderConfig cfg;
    cfg.frames = t;
    cfg.height = h;
    cfg.width = wd;
    cfg.embed_dim = c;
    cfg.heads = {1, 1, 2, 2};
    cfg.depths = {1, 1, 1, 1};
    Rng rng(8);
    auto w = EncoderWeights<double>::init(cfg, rng);
    auto f = encode(random_tensor({t, h, wd, 3}, rng), cfg, w);
    for (int s = 0; s < 4; ++s) {
      const Shape want{c << s, t / 2, h >> (s + 2), wd >> (s + 2)};
      CHECK(f.levels[s].shape() == want);
      CHECK(f.levels[s].dim(1) == t / 2);
    }
  }
}

TEST_CASE("zero attention and mlp output weights leave only the norm path") {
  auto cfg = ModelConfig::toy().encoder;
  Rng rng(9);
  auto w = EncoderWeights<double>::init(cfg, rng);
  for (auto& b : w.stages[0].blocks) {
    for (TD* p : {&b.attn.wq, &b.attn.bq, &b.attn.wk, &b.attn.bk, &b.attn.wv, &b.attn.bv, &b.attn.wo, &b.attn.bo,
                  &b.fc2_w, &b.fc2_b})
      std::fill(p->storage().begin(), p->storage().end(), 0.0);
  }
  auto clip = random_tensor({8, 32, 64, 3}, rng);
  auto f = encode(clip, cfg, w);
  auto tok = patch_embed(clip, w.embed_w, w.embed_b);
  auto ref = permute(layer_norm(tok, w.stages[0].out_norm_gamma, w.stages[0].out_norm_beta), {3, 0, 1, 2});
  CHECK(max_abs_diff(f.levels[0].storage(), ref.storage()) == 0.0);
}

TEST_CASE("config validation") {
  auto cfg = ModelConfig::toy().encoder;
  cfg.frames = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig::toy().encoder;
  cfg.height = 48;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig::toy().encoder;
  cfg.heads[0] = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::profile("huge"), ConfigError);
}
