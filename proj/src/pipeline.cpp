#include "thtd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "json.hpp"

#include "thtd/objectives.hpp"
#include "thtd/random.hpp"

namespace thtd {

std::vector<ClipWindow> make_clip_windows(std::int64_t frames, std::int64_t clip_length) {
  if (clip_length < 1) throw ConfigError("clip length must be >= 1");
  if (frames < clip_length)
    throw ConfigError("video has " + std::to_string(frames) + " frames but the clip length is " +
                      std::to_string(clip_length) + "; pad the video or use a shorter clip length");
  std::vector<ClipWindow> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (std::int64_t t = 0; t < frames; ++t) {
    ClipWindow w;
    w.target = t;
    w.reversed = t < clip_length - 1;
    for (std::int64_t k = 0; k < clip_length; ++k)
      w.indices.push_back(w.reversed ? std::min(t + clip_length - 1 - k, frames - 1) : t - clip_length + 1 + k);
    out.push_back(std::move(w));
  }
  return out;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.lr = 1e-5;
  c.clip_length = 32;
  return c;
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::profile(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or toy)");
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (val_every < 1) throw ConfigError("validation interval must be >= 1");
  if (max_iterations < 0) throw ConfigError("max iterations must be >= 0");
  if (val_windows < 0) throw ConfigError("validation window count must be >= 0");
  if (clip_length != model.encoder.frames)
    throw ConfigError("clip length " + std::to_string(clip_length) + " does not match model frames " +
                      std::to_string(model.encoder.frames));
  if (dtype != "f32" && dtype != "f64") throw ConfigError("dtype must be f32 or f64, got '" + dtype + "'");
}

namespace {

enum : std::uint64_t { kSampleStream = 21 };

struct Sample {
  std::size_t video;
  ClipWindow window;
};

std::vector<Sample> all_samples(const Dataset& data, std::int64_t clip_length) {
  std::vector<Sample> out;
  for (std::size_t v = 0; v < data.videos.size(); ++v)
    for (auto& w : make_clip_windows(data.videos[v].frames, clip_length)) out.push_back({v, std::move(w)});
  return out;
}

std::vector<Sample> spaced(std::vector<Sample> all, std::int64_t max_count) {
  if (max_count <= 0 || static_cast<std::int64_t>(all.size()) <= max_count) return all;
  std::vector<Sample> out;
  const auto n = static_cast<std::int64_t>(all.size());
  for (std::int64_t i = 0; i < max_count; ++i) out.push_back(all[static_cast<std::size_t>(i * n / max_count)]);
  return out;
}

void check_dataset(const Dataset& data, const ModelConfig& cfg, const char* what) {
  for (const auto& v : data.videos) {
    v.validate();
    if (v.rows != cfg.encoder.height || v.cols != cfg.encoder.width)
      throw ShapeError(std::string(what) + " video '" + v.name + "' is " + std::to_string(v.rows) + "x" +
                       std::to_string(v.cols) + ", model expects " + std::to_string(cfg.encoder.height) + "x" +
                       std::to_string(cfg.encoder.width));
  }
}

template <typename T>
Map2D to_map(const Tensor<T>& out) {
  const auto& s = out.shape();
  std::vector<double> v(out.data().begin(), out.data().end());
  return Map2D(s[s.size() - 2], s[s.size() - 1], std::move(v));
}

template <typename T>
void dump_diagnostics(const std::string& path, const ThtdNet<T>& model, std::int64_t iteration,
                      const Dataset& data, const Sample& s, const LossReport& r) {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["video"] = data.videos[s.video].name;
  j["target_frame"] = s.window.target;
  j["indices"] = s.window.indices;
  j["cc_term"] = r.cc_term;
  j["kl_term"] = r.kl_term;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.named_parameters()) {
    double mx = 0;
    bool finite = true;
    for (auto x : p.tensor.data()) {
      finite = finite && std::isfinite(static_cast<double>(x));
      mx = std::max(mx, std::abs(static_cast<double>(x)));
    }
    params.push_back({{"name", p.name}, {"max_abs", mx}, {"finite", finite}});
  }
  j["parameters"] = params;
  std::ofstream(path) << j.dump(2) << "\n";
}

}  // namespace

template <typename T>
double validation_loss(const ThtdNet<T>& model, const Dataset& val_set, std::int64_t max_windows) {
  const auto samples = spaced(all_samples(val_set, model.config().encoder.frames), max_windows);
  if (samples.empty()) throw ConfigError("validation set is empty");
  NoGradGuard guard;
  double acc = 0;
  for (const auto& s : samples) {
    const auto& vid = val_set.videos[s.video];
    auto out = model.forward(vid.template clip<T>(s.window.indices));
    acc += total_loss(out, vid.template density_tensor<T>(s.window.target), true).report.total;
  }
  return acc / static_cast<double>(samples.size());
}

template <typename T>
TrainResult<T> train(const ThtdNet<T>& model, const Dataset& train_set, const Dataset& val_set,
                     const TrainConfig& config, const TrainState<T>* resume, const ThtdNet<T>* resume_best,
                     const TrainHooks<T>& hooks) {
  const auto& mcfg = model.config();
  config.validate(mcfg);
  check_dataset(train_set, mcfg, "training");
  check_dataset(val_set, mcfg, "validation");
  const auto samples = all_samples(train_set, config.clip_length);
  if (samples.empty()) throw ConfigError("training set is empty");
  const bool validate = !val_set.videos.empty();

  TrainResult<T> result{model.clone(), model.clone(), {}, {}, false};
  auto params = result.last.parameters();
  AdamOptions opts;
  opts.lr = config.lr;
  if (resume) {
    result.state = *resume;
    result.state.adam.options = opts;
    if (result.state.adam.m.size() != params.size())
      throw ConfigError("resume state has " + std::to_string(result.state.adam.m.size()) +
                        " moment buffers, model has " + std::to_string(params.size()) + " parameters");
    if (resume_best) result.best = resume_best->clone();
  } else {
    result.state.adam = AdamState<T>::zeros_like(params, opts);
  }
  auto& st = result.state;

  while (st.iteration < config.max_iterations) {
    const std::int64_t it = st.iteration + 1;
    Rng rng(mix_seed(config.seed, kSampleStream, static_cast<std::uint64_t>(it)));
    for (auto& p : params) p.zero_grad();
    TrainLogRow row;
    row.iteration = it;
    for (std::int64_t b = 0; b < config.batch_size; ++b) {
      const auto& s = samples[static_cast<std::size_t>(rng.below(samples.size()))];
      const auto& vid = train_set.videos[s.video];
      auto out = result.last.forward(vid.template clip<T>(s.window.indices));
      const bool finite_out = std::all_of(out.data().begin(), out.data().end(),
                                          [](T x) { return std::isfinite(static_cast<double>(x)); });
      TotalLoss<T> tl;
      if (finite_out) {
        tl = total_loss(out, vid.template density_tensor<T>(s.window.target), true);
      } else {
        tl.report.cc_term = tl.report.kl_term = tl.report.total = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(tl.report.total)) {
        std::string msg = "non-finite loss at iteration " + std::to_string(it) + " (video '" + vid.name +
                          "', target frame " + std::to_string(s.window.target) +
                          ", cc_term " + std::to_string(tl.report.cc_term) + ", kl_term " +
                          std::to_string(tl.report.kl_term) + ")";
        if (!hooks.diagnostic_path.empty()) {
          dump_diagnostics(hooks.diagnostic_path, result.last, it, train_set, s, tl.report);
          msg += "; state dumped to " + hooks.diagnostic_path;
        }
        throw TrainingDiverged(msg);
      }
      auto loss = config.batch_size == 1 ? tl.loss : scale(tl.loss, T(1) / static_cast<T>(config.batch_size));
      backward(loss);
      row.cc_term += tl.report.cc_term;
      row.kl_term += tl.report.kl_term;
      row.total += tl.report.total;
    }
    const auto nb = static_cast<double>(config.batch_size);
    row.cc_term /= nb;
    row.kl_term /= nb;
    row.total /= nb;
    adam_step(params, st.adam);
    st.iteration = it;

    if (validate && (it % config.val_every == 0 || it == config.max_iterations)) {
      const double v = validation_loss(result.last, val_set, config.val_windows);
      row.val_total = v;
      if (v < st.best_val) {
        st.best_val = v;
        st.best_iteration = it;
        st.evals_since_best = 0;
        result.best = result.last.clone();
      } else {
        ++st.evals_since_best;
      }
    }
    result.log.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (validate && st.evals_since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (!validate) result.best = result.last.clone();
  return result;
}

template <typename T>
std::vector<Map2D> infer_video(const ThtdNet<T>& model, const VideoData& video, const WindowObserver& observer) {
  const auto& cfg = model.config().encoder;
  if (video.rows != cfg.height || video.cols != cfg.width)
    throw ShapeError("video '" + video.name + "' is " + std::to_string(video.rows) + "x" +
                     std::to_string(video.cols) + ", model expects " + std::to_string(cfg.height) + "x" +
                     std::to_string(cfg.width));
  NoGradGuard guard;
  std::vector<Map2D> maps;
  for (const auto& w : make_clip_windows(video.frames, cfg.frames)) {
    if (observer) observer(w);
    maps.push_back(to_map(model.forward(video.template clip<T>(w.indices))));
  }
  return maps;
}

template <typename T>
std::vector<MetricsReport> evaluate_dataset(const ThtdNet<T>& model, const Dataset& data, std::uint64_t seed) {
  std::vector<MetricsReport> reports;
  for (std::size_t v = 0; v < data.videos.size(); ++v) {
    const auto& vid = data.videos[v];
    auto preds = infer_video(model, vid);
    std::vector<Map2D> gts;
    for (std::int64_t f = 0; f < vid.frames; ++f) gts.push_back(vid.density_map(f));
    reports.push_back(evaluate_video(vid.name, preds, gts, vid.fixations, data.fixations_except(v),
                                     mix_seed(seed, 0x7e, v)));
  }
  return reports;
}

template <typename T>
std::vector<AblationRow> run_ablation(const ModelConfig& base, const std::vector<std::string>& variant_tags,
                                      const Dataset& train_set, const Dataset& val_set, const Dataset& eval_set,
                                      const TrainConfig& config,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<DecoderVariant> variants;
  for (const auto& tag : variant_tags) variants.push_back(parse_variant(tag));
  std::vector<AblationRow> rows;
  for (auto v : variants) {
    ModelConfig cfg = base;
    cfg.variant = v;
    ThtdNet<T> net(cfg, config.seed);
    auto trained = train(net, train_set, val_set, config);
    auto report = combine_reports("all", evaluate_dataset(trained.best, eval_set, config.seed));
    AblationRow row{std::string(variant_tag(v)), trained.best.parameter_count(), report.cc, report.nss,
                    report.sim, report.auc_j};
    if (on_row) on_row(row);
    rows.push_back(row);
  }
  return rows;
}

#define THTD_INSTANTIATE(T)                                                                                    \
  template double validation_loss(const ThtdNet<T>&, const Dataset&, std::int64_t);                            \
  template TrainResult<T> train(const ThtdNet<T>&, const Dataset&, const Dataset&, const TrainConfig&,         \
                                const TrainState<T>*, const ThtdNet<T>*, const TrainHooks<T>&);                \
  template std::vector<Map2D> infer_video(const ThtdNet<T>&, const VideoData&, const WindowObserver&);         \
  template std::vector<MetricsReport> evaluate_dataset(const ThtdNet<T>&, const Dataset&, std::uint64_t);      \
  template std::vector<AblationRow> run_ablation<T>(const ModelConfig&, const std::vector<std::string>&,       \
                                                    const Dataset&, const Dataset&, const Dataset&,            \
                                                    const TrainConfig&,                                        \
                                                    const std::function<void(const AblationRow&)>&);
THTD_INSTANTIATE(float)
THTD_INSTANTIATE(double)
#undef THTD_INSTANTIATE

}  // namespace thtd
