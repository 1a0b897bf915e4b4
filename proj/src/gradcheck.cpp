#include "thtd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <type_traits>

#include "thtd/decoder.hpp"
#include "thtd/encoder.hpp"
#include "thtd/fusion.hpp"
#include "thtd/model.hpp"
#include "thtd/objectives.hpp"
#include "thtd/ops.hpp"
#include "thtd/random.hpp"

namespace thtd {

template <typename T>
GradcheckStats gradcheck(const LossFn<T>& f, const std::vector<Tensor<T>>& inputs, const GradcheckOptions& opts,
                         const std::vector<std::vector<double>>* analytic) {
  if (inputs.empty()) throw GraphError("gradcheck: no inputs");
  std::vector<std::vector<double>> grads;
  if (analytic) {
    if (analytic->size() != inputs.size()) throw ShapeError("gradcheck: analytic gradient count mismatch");
    grads = *analytic;
  } else {
    for (const auto& x : inputs) {
      if (!x.requires_grad()) throw GraphError("gradcheck: every input must require grad");
      const_cast<Tensor<T>&>(x).zero_grad();
    }
    backward(f(inputs));
    for (const auto& x : inputs) {
      const auto g = x.grad();
      grads.emplace_back(g.begin(), g.end());
    }
  }

  auto eval = [&] {
    NoGradGuard guard;
    return static_cast<double>(f(inputs).item());
  };
  auto central = [&](std::vector<T>& data, std::size_t i, double h) {
    const T saved = data[i];
    data[i] = static_cast<T>(saved + h);
    const double up = eval();
    data[i] = static_cast<T>(saved - h);
    const double down = eval();
    data[i] = saved;
    return (up - down) / (2.0 * h);
  };

  struct Probe {
    std::size_t input;
    double analytic, numeric, numeric_half;
  };
  std::vector<Probe> probes;
  Rng rng(opts.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto x = inputs[k];
    auto& data = x.storage();
    if (grads[k].size() != data.size()) throw ShapeError("gradcheck: analytic gradient size mismatch");
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords > 0 && static_cast<std::int64_t>(coords.size()) > opts.max_coords) {
      for (std::int64_t i = 0; i < opts.max_coords; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(coords.size() - static_cast<std::size_t>(i));
        std::swap(coords[static_cast<std::size_t>(i)], coords[j]);
      }
      coords.resize(static_cast<std::size_t>(opts.max_coords));
    }
    for (auto i : coords) {
      const double n = central(data, i, opts.step);
      const double n2 = opts.kink_tolerance > 0 ? central(data, i, opts.step / 2) : n;
      probes.push_back({k, grads[k][i], n, n2});
    }
  }

  GradcheckStats stats;
  double global = 0;
  for (const auto& p : probes) global = std::max(global, std::abs(p.numeric));
  const double floor = std::max(opts.scale_floor * global, 1e-12);
  std::vector<double> max_diff(inputs.size(), 0.0), max_num(inputs.size(), 0.0);
  for (const auto& p : probes) {
    // Halving the step moves a smooth central difference by O(h^2) only; a
    // larger shift means a kink lies within the stencil.
    if (opts.kink_tolerance > 0 &&
        std::abs(p.numeric - p.numeric_half) > opts.kink_tolerance * std::max(std::abs(p.numeric), floor)) {
      ++stats.skipped;
      continue;
    }
    ++stats.coords;
    max_diff[p.input] = std::max(max_diff[p.input], std::abs(p.numeric - p.analytic));
    max_num[p.input] = std::max(max_num[p.input], std::abs(p.numeric));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const double rel = max_diff[k] / std::max(max_num[k], floor);
    if (k == 0 || rel > stats.rel_error) {
      stats.rel_error = rel;
      stats.worst_input = k;
    }
  }
  stats.max_abs_diff = std::move(max_diff);
  stats.max_abs_numeric = std::move(max_num);
  return stats;
}

namespace {

template <typename T>
Tensor<T> randn(Shape shape, Rng& rng, double std = 1.0, bool grad = true) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.normal() * std);
  return Tensor<T>::from_data(std::move(shape), std::move(v), grad);
}

template <typename T>
Tensor<T> uniform(Shape shape, Rng& rng, double lo, double hi, bool grad = true) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return Tensor<T>::from_data(std::move(shape), std::move(v), grad);
}

/// sum(y * r) for a fixed random r, so every output coordinate matters.
template <typename T>
Tensor<T> project(const Tensor<T>& y, const Tensor<T>& r) {
  return sum(mul(y, r));
}

template <typename T>
struct Problem {
  LossFn<T> fn;
  std::vector<Tensor<T>> inputs;
  std::int64_t max_coords = 0;
  double tolerance_scale = 1.0;  // relative to the primitive tolerance
  /// Overrides the default 64-bit step. ReLU stacks use a smaller step so that
  /// perturbations rarely move a pre-activation across zero.
  double step = 0.0;
  /// Attention biases of the key projection have an exactly zero gradient;
  /// modules are compared against a coarser fraction of the gradient scale.
  double scale_floor = 1e-6;
  double kink_tolerance = 0.0;
};

template <typename T>
Problem<T> elementwise(Rng& rng, Tensor<T> (*op)(const Tensor<T>&), bool keep_from_zero = false) {
  auto x = randn<T>({3, 5}, rng);
  if (keep_from_zero)
    for (auto& v : x.storage()) v = static_cast<T>((v < 0 ? -0.1 : 0.1) + v);
  auto r = randn<T>({3, 5}, rng, 1.0, false);
  return {[op, r](const auto& in) { return project(op(in[0]), r); }, {x}};
}

template <typename T>
Problem<T> binary(Rng& rng, Tensor<T> (*op)(const Tensor<T>&, const Tensor<T>&)) {
  auto a = randn<T>({3, 4}, rng), b = randn<T>({3, 4}, rng);
  auto r = randn<T>({3, 4}, rng, 1.0, false);
  return {[op, r](const auto& in) { return project(op(in[0], in[1]), r); }, {a, b}};
}

template <typename T>
AttentionWeights<T> attention_from(const std::vector<Tensor<T>>& in, std::size_t at) {
  return {in[at], in[at + 1], in[at + 2], in[at + 3], in[at + 4], in[at + 5], in[at + 6], in[at + 7]};
}

template <typename T>
void push_attention(std::vector<Tensor<T>>& v, Rng& rng, std::int64_t c) {
  for (int i = 0; i < 4; ++i) {
    v.push_back(randn<T>({c, c}, rng, 0.3));
    v.push_back(randn<T>({c}, rng, 0.1));
  }
}

template <typename T>
Problem<T> conv_problem(Rng& rng, ConvSpec spec, Shape input) {
  auto x = randn<T>(input, rng);
  auto w = randn<T>(spec.weight_shape(), rng, 0.3);
  auto b = randn<T>({spec.out_channels}, rng, 0.1);
  auto probe = conv3d(x.detach(), spec, w.detach(), b.detach());
  auto r = randn<T>(probe.shape(), rng, 1.0, false);
  return {[spec, r](const auto& in) { return project(conv3d(in[0], spec, in[1], in[2]), r); }, {x, w, b}};
}

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.frames = 4;
  e.height = 32;
  e.width = 32;
  e.embed_dim = 4;
  e.window = {2, 2, 2};
  e.heads = {1, 1, 2, 2};
  e.depths = {1, 1, 1, 1};
  e.mlp_ratio = 2;
  return e;
}

template <typename T>
Problem<T> make_problem(const std::string& name, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6c, std::hash<std::string>{}(name) & 0xffff));
  if (name == "add") return binary<T>(rng, &add<T>);
  if (name == "sub") return binary<T>(rng, &sub<T>);
  if (name == "mul") return binary<T>(rng, &mul<T>);
  if (name == "scale") {
    auto x = randn<T>({3, 4}, rng);
    auto r = randn<T>({3, 4}, rng, 1.0, false);
    return {[r](const auto& in) { return project(scale(in[0], T(-1.7)), r); }, {x}};
  }
  if (name == "relu") return elementwise<T>(rng, &relu<T>, true);
  if (name == "sigmoid") return elementwise<T>(rng, &sigmoid<T>);
  if (name == "gelu") return elementwise<T>(rng, &gelu<T>);
  if (name == "sum") return {[](const auto& in) { return sum(in[0]); }, {randn<T>({2, 3, 4}, rng)}};
  if (name == "mean") return {[](const auto& in) { return mean(in[0]); }, {randn<T>({2, 3, 4}, rng)}};
  if (name == "reshape") {
    auto r = randn<T>({4, 6}, rng, 1.0, false);
    return {[r](const auto& in) { return project(reshape(in[0], {4, 6}), r); }, {randn<T>({2, 3, 4}, rng)}};
  }
  if (name == "permute") {
    auto r = randn<T>({4, 2, 3}, rng, 1.0, false);
    return {[r](const auto& in) { return project(permute(in[0], {2, 0, 1}), r); }, {randn<T>({2, 3, 4}, rng)}};
  }
  if (name == "linear") {
    auto r = randn<T>({2, 3, 4}, rng, 1.0, false);
    return {[r](const auto& in) { return project(linear(in[0], in[1], in[2]), r); },
            {randn<T>({2, 3, 5}, rng), randn<T>({4, 5}, rng), randn<T>({4}, rng)}};
  }
  if (name == "linear_nobias") {
    auto r = randn<T>({3, 4}, rng, 1.0, false);
    return {[r](const auto& in) { return project(linear(in[0], in[1], Tensor<T>()), r); },
            {randn<T>({3, 5}, rng), randn<T>({4, 5}, rng)}};
  }
  if (name == "bmm") {
    auto r = randn<T>({2, 3, 5}, rng, 1.0, false);
    return {[r](const auto& in) { return project(bmm(in[0], in[1]), r); },
            {randn<T>({2, 3, 4}, rng), randn<T>({2, 4, 5}, rng)}};
  }
  if (name == "bmm_transpose") {
    auto r = randn<T>({2, 3, 5}, rng, 1.0, false);
    return {[r](const auto& in) { return project(bmm(in[0], in[1], true), r); },
            {randn<T>({2, 3, 4}, rng), randn<T>({2, 5, 4}, rng)}};
  }
  if (name == "softmax_last" || name == "softmax_first") {
    const int axis = name == "softmax_last" ? -1 : 0;
    auto r = randn<T>({3, 5}, rng, 1.0, false);
    return {[r, axis](const auto& in) { return project(softmax(in[0], axis), r); }, {randn<T>({3, 5}, rng, 2.0)}};
  }
  if (name == "layer_norm") {
    auto r = randn<T>({3, 6}, rng, 1.0, false);
    return {[r](const auto& in) { return project(layer_norm(in[0], in[1], in[2]), r); },
            {randn<T>({3, 6}, rng), randn<T>({6}, rng), randn<T>({6}, rng)}};
  }
  if (name == "conv3d_reduce") {
    ConvSpec s;
    s.kernel = {2, 3, 3};
    s.stride = {2, 1, 1};
    s.padding = {0, 1, 1};
    s.in_channels = 2;
    s.out_channels = 3;
    return conv_problem<T>(rng, s, {1, 2, 4, 5, 5});
  }
  if (name == "conv3d_strided") {
    ConvSpec s;
    s.kernel = {3, 3, 3};
    s.stride = {1, 2, 2};
    s.padding = {1, 1, 1};
    s.in_channels = 2;
    s.out_channels = 2;
    return conv_problem<T>(rng, s, {2, 2, 3, 5, 6});
  }
  if (name == "conv3d_depthwise") {
    ConvSpec s;
    s.kernel = {2, 3, 3};
    s.padding = {0, 1, 1};
    s.in_channels = s.out_channels = s.groups = 3;
    return conv_problem<T>(rng, s, {1, 3, 3, 4, 4});
  }
  if (name == "upsample") {
    auto r = randn<T>({1, 2, 2, 6, 6}, rng, 1.0, false);
    return {[r](const auto& in) { return project(upsample_spatial(in[0], 2), r); }, {randn<T>({1, 2, 2, 3, 3}, rng)}};
  }
  if (name == "avg_pool_temporal") {
    auto r = randn<T>({1, 2, 2, 3, 3}, rng, 1.0, false);
    return {[r](const auto& in) { return project(avg_pool_temporal(in[0], 2), r); },
            {randn<T>({1, 2, 4, 3, 3}, rng)}};
  }
  if (name == "cc_loss") {
    auto g = uniform<T>({1, 1, 6, 7}, rng, 0.0, 1.0, false);
    return {[g](const auto& in) { return cc_loss(in[0], g); }, {randn<T>({1, 1, 6, 7}, rng)}};
  }
  if (name == "kl_loss") {
    auto g = uniform<T>({1, 1, 6, 7}, rng, 0.0, 1.0, false);
    return {[g](const auto& in) { return kl_loss(in[0], g); }, {uniform<T>({1, 1, 6, 7}, rng, 0.05, 1.0)}};
  }
  if (name == "total_loss") {
    auto g = uniform<T>({1, 1, 6, 7}, rng, 0.0, 1.0, false);
    return {[g](const auto& in) { return total_loss(sigmoid(in[0]), g).loss; }, {randn<T>({1, 1, 6, 7}, rng)}};
  }
  if (name == "window_attention") {
    std::vector<Tensor<T>> in{randn<T>({2, 4, 4, 8}, rng)};
    push_attention(in, rng, 8);
    auto r = randn<T>({2, 4, 4, 8}, rng, 1.0, false);
    return {[r](const auto& v) { return project(window_attention(v[0], attention_from(v, 1), {2, 2, 2}, 2), r); },
            in, 0, 1.0, 0.0, 1e-4};
  }
  if (name == "patch_embed") {
    auto r = randn<T>({2, 2, 2, 4}, rng, 1.0, false);
    return {[r](const auto& v) { return project(patch_embed(v[0], v[1], v[2]), r); },
            {uniform<T>({4, 8, 8, 3}, rng, 0.0, 1.0), randn<T>({4, 96}, rng, 0.1), randn<T>({4}, rng, 0.1)},
            24};
  }
  if (name == "patch_merge") {
    auto r = randn<T>({2, 2, 2, 6}, rng, 1.0, false);
    return {[r](const auto& v) { return project(patch_merge(v[0], v[1]), r); },
            {randn<T>({2, 4, 4, 3}, rng), randn<T>({6, 12}, rng, 0.3)}};
  }
  if (name == "transformer_block") {
    const std::int64_t c = 8;
    std::vector<Tensor<T>> in{randn<T>({2, 4, 4, c}, rng)};
    in.push_back(Tensor<T>::from_data({c}, std::vector<T>(c, T(1)), true));
    in.push_back(randn<T>({c}, rng, 0.1));
    push_attention(in, rng, c);
    in.push_back(Tensor<T>::from_data({c}, std::vector<T>(c, T(1)), true));
    in.push_back(randn<T>({c}, rng, 0.1));
    in.push_back(randn<T>({2 * c, c}, rng, 0.3));
    in.push_back(randn<T>({2 * c}, rng, 0.1));
    in.push_back(randn<T>({c, 2 * c}, rng, 0.3));
    in.push_back(randn<T>({c}, rng, 0.1));
    auto r = randn<T>({2, 4, 4, c}, rng, 1.0, false);
    return {[r](const auto& v) {
              BlockWeights<T> w{v[1], v[2], attention_from(v, 3), v[11], v[12], v[13], v[14], v[15], v[16]};
              return project(transformer_block(v[0], w, {2, 2, 2}, 2), r);
            },
            in, 24, 1.0, 0.0, 1e-4};
  }
  if (name == "fusion") {
    const auto e = tiny_encoder();
    auto w = FusionWeights<T>::init(e, rng);
    std::vector<Tensor<T>> in;
    for (int s = 0; s < 4; ++s) in.push_back(randn<T>(e.feature_shape(s), rng));
    for (int s = 0; s < 4; ++s) {
      in.push_back(w.weight[s]);
      in.push_back(randn<T>({2 * e.embed_dim}, rng, 0.1));
    }
    ModelConfig mc;
    mc.encoder = e;
    auto r = randn<T>(mc.fused_shape(), rng, 1.0, false);
    return {[r](const auto& v) {
              StageFeatures<T> f{{v[0], v[1], v[2], v[3]}};
              FusionWeights<T> fw;
              for (int s = 0; s < 4; ++s) {
                fw.weight[s] = v[4 + 2 * s];
                fw.bias[s] = v[5 + 2 * s];
              }
              return project(fuse(f, fw), r);
            },
            in, 24};
  }
  if (name == "decoder" || name == "decoder_mobilenet") {
    ModelConfig mc;
    mc.encoder = tiny_encoder();
    const auto schedule =
        build_schedule(mc, name == "decoder" ? DecoderVariant::baseline : DecoderVariant::mobilenet);
    auto w = DecoderWeights<T>::init(schedule, rng);
    std::vector<Tensor<T>> in{randn<T>(mc.fused_shape(), rng)};
    std::vector<std::size_t> counts;
    for (auto& layer : w.layers) {
      counts.push_back(layer.size());
      for (auto& c : layer) {
        in.push_back(c.weight);
        in.push_back(randn<T>(c.bias.shape(), rng, 0.1));
      }
    }
    auto r = randn<T>({1, 1, mc.encoder.height, mc.encoder.width}, rng, 1.0, false);
    return {[r, schedule, counts](const auto& v) {
              DecoderWeights<T> dw;
              std::size_t at = 1;
              for (auto n : counts) {
                std::vector<typename DecoderWeights<T>::Conv> layer;
                for (std::size_t i = 0; i < n; ++i, at += 2) layer.push_back({v[at], v[at + 1]});
                dw.layers.push_back(std::move(layer));
              }
              return project(decode(v[0], schedule, dw), r);
            },
            in, 16, 1.0, 1e-6, 1e-4, 1e-5};
  }
  if (name == "model") {
    const auto cfg = ModelConfig::toy();
    ThtdNet<T> net(cfg, seed);
    // Zero-initialised biases put whole regions of ReLU inputs exactly on the
    // kink; check at a generic point instead.
    for (auto& p : net.named_parameters())
      if (p.name.ends_with("bias") || p.name.ends_with("beta"))
        for (auto& v : p.tensor.storage()) v = static_cast<T>(0.05 * rng.normal());
    const auto& e = cfg.encoder;
    auto clip = uniform<T>({e.frames, e.height, e.width, 3}, rng, 0.0, 1.0, false);
    auto g = uniform<T>({1, 1, e.height, e.width}, rng, 0.0, 1.0, false);
    return {[net, clip, g](const auto&) { return total_loss(net.forward(clip), g).loss; }, net.parameters(), 2, 10.0, 1e-6, 1e-4, 5e-4};
  }
  throw ConfigError("unknown gradcheck suite '" + name + "'");
}

}  // namespace

const std::vector<std::string>& gradcheck_suite_names() {
  static const std::vector<std::string> names{
      "add",        "sub",           "mul",           "scale",          "relu",          "sigmoid",
      "gelu",       "sum",           "mean",          "reshape",        "permute",       "linear",
      "linear_nobias", "bmm",        "bmm_transpose", "softmax_last",   "softmax_first", "layer_norm",
      "conv3d_reduce", "conv3d_strided", "conv3d_depthwise", "upsample", "avg_pool_temporal", "cc_loss",
      "kl_loss",    "total_loss",    "window_attention", "patch_embed", "patch_merge",  "transformer_block",
      "fusion",     "decoder",       "decoder_mobilenet"};
  return names;
}

template <typename T>
GradcheckResult run_gradcheck_suite(const std::string& name, std::uint64_t seed) {
  // The numeric side always runs in double. For float, the analytic float
  // gradients are compared against double differences taken at the same
  // (float-representable) point.
  auto p = make_problem<double>(name, seed);
  GradcheckOptions opts;
  opts.step = p.step > 0 ? p.step : 1e-5;
  opts.max_coords = p.max_coords;
  opts.seed = mix_seed(seed, 0x6d);
  opts.scale_floor = p.scale_floor;
  opts.kink_tolerance = p.kink_tolerance;
  GradcheckStats stats;
  double tol = 1e-4;
  if constexpr (std::is_same_v<T, double>) {
    stats = gradcheck<double>(p.fn, p.inputs, opts);
  } else {
    auto pf = make_problem<T>(name, seed);
    for (auto& x : pf.inputs) x.zero_grad();
    backward(pf.fn(pf.inputs));
    std::vector<std::vector<double>> analytic;
    for (std::size_t k = 0; k < pf.inputs.size(); ++k) {
      const auto g = pf.inputs[k].grad();
      analytic.emplace_back(g.begin(), g.end());
      auto& dst = p.inputs[k].storage();
      const auto& src = pf.inputs[k].storage();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(src[i]);
    }
    stats = gradcheck<double>(p.fn, p.inputs, opts, &analytic);
    tol = 1e-3;
  }
  GradcheckResult r{name, seed, stats.rel_error, tol * p.tolerance_scale, stats.coords};
  r.skipped = stats.skipped;
  return r;
}

std::vector<GradcheckResult> run_gradcheck(const GradcheckPlan& plan,
                                           const std::function<void(const GradcheckResult&)>& on_result) {
  std::vector<GradcheckResult> out;
  auto run = [&](const std::string& name, std::uint64_t seed) {
    auto r = plan.f64 ? run_gradcheck_suite<double>(name, seed) : run_gradcheck_suite<float>(name, seed);
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  for (const auto& name : gradcheck_suite_names())
    for (std::int64_t s = 0; s < plan.seeds; ++s) run(name, plan.seed + static_cast<std::uint64_t>(s));
  if (plan.include_model)
    for (std::int64_t s = 0; s < plan.seeds; ++s) run("model", plan.seed + static_cast<std::uint64_t>(s));
  return out;
}

template GradcheckStats gradcheck(const LossFn<float>&, const std::vector<Tensor<float>>&, const GradcheckOptions&,
                                  const std::vector<std::vector<double>>*);
template GradcheckStats gradcheck(const LossFn<double>&, const std::vector<Tensor<double>>&, const GradcheckOptions&,
                                  const std::vector<std::vector<double>>*);
template GradcheckResult run_gradcheck_suite<float>(const std::string&, std::uint64_t);
template GradcheckResult run_gradcheck_suite<double>(const std::string&, std::uint64_t);

}  // namespace thtd
