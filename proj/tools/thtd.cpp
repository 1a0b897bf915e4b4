#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "thtd/dataset.hpp"
#include "thtd/errors.hpp"
#include "thtd/gradcheck.hpp"
#include "thtd/io.hpp"
#include "thtd/model.hpp"
#include "thtd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace thtd;

namespace {

struct Common {
  std::string config;
  std::string profile = "toy";
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::string dtype;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "Flat JSON config file")->check(CLI::ExistingFile);
  app->add_option("--profile", c.profile, "Default profile")->check(CLI::IsMember({"paper", "toy"}));
  app->add_option("--variant", c.variant, "Decoder variant tag");
  app->add_option("--seed", c.seed, "Seed");
  app->add_option("--dtype", c.dtype, "Element type")->check(CLI::IsMember({"f32", "f64"}));
  if (with_out) app->add_option("--out", c.out, "Output path");
}

LoadedConfig resolve(const Common& c) {
  LoadedConfig cfg = c.config.empty()
                         ? LoadedConfig{ModelConfig::profile(c.profile), TrainConfig::profile(c.profile)}
                         : load_config(c.config);
  if (!c.variant.empty()) cfg.model.variant = parse_variant(c.variant);
  if (c.seed) cfg.train.seed = *c.seed;
  if (!c.dtype.empty()) cfg.train.dtype = c.dtype;
  cfg.model.validate();
  return cfg;
}

void print_metrics(const MetricsReport& r) {
  std::printf("%-12s auc_j %.4f  s_auc %.4f  nss %.4f  cc %.4f  sim %.4f\n", r.video.c_str(), r.auc_j, r.s_auc,
              r.nss, r.cc, r.sim);
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data, val, resume;
  std::optional<std::int64_t> max_iters;
  std::optional<double> lr;
};

template <typename T>
int run_train(const LoadedConfig& cfg, const TrainArgs& a, const fs::path& out) {
  const auto train_set = load_dataset(a.data);
  const Dataset val_set = a.val.empty() ? Dataset{} : load_dataset(a.val);
  TrainConfig tc = cfg.train;
  if (a.max_iters) tc.max_iterations = *a.max_iters;
  if (a.lr) tc.lr = *a.lr;
  ThtdNet<T> net(cfg.model, tc.seed);
  std::optional<TrainState<T>> state;
  std::optional<ThtdNet<T>> best;
  if (!a.resume.empty()) {
    state = load_checkpoint(fs::path(a.resume) / "last.json", net);
    if (!state) throw FormatError(a.resume + "/last.json: checkpoint carries no training state");
    if (fs::exists(fs::path(a.resume) / "best.json")) {
      best.emplace(cfg.model, tc.seed);
      load_checkpoint(fs::path(a.resume) / "best.json", *best);
    }
  }
  fs::create_directories(out);
  std::ofstream(out / "config.json") << config_to_json(cfg.model, tc).dump(2) << "\n";
  TrainHooks<T> hooks;
  hooks.diagnostic_path = (out / "divergence.json").string();
  hooks.on_row = [](const TrainLogRow& r) {
    if (r.val_total) std::printf("iter %6lld  train %.5f  val %.5f\n", static_cast<long long>(r.iteration), r.total, *r.val_total);
  };
  auto result = train(net, train_set, val_set, tc, state ? &*state : nullptr, best ? &*best : nullptr, hooks);
  std::vector<TrainLogRow> log;
  if (!a.resume.empty() && fs::exists(fs::path(a.resume) / "train_log.csv")) {
    for (const auto& r : read_training_log(fs::path(a.resume) / "train_log.csv"))
      if (r.iteration <= state->iteration) log.push_back(r);
  }
  log.insert(log.end(), result.log.begin(), result.log.end());
  write_training_log(out / "train_log.csv", log);
  save_checkpoint(out / "best.json", result.best);
  save_checkpoint(out / "last.json", result.last, &result.state);
  std::printf("%s after %lld iterations; best validation loss %s at iteration %lld\n",
              result.early_stopped ? "early stop" : "done", static_cast<long long>(result.state.iteration),
              std::isfinite(result.state.best_val) ? std::to_string(result.state.best_val).c_str() : "n/a",
              static_cast<long long>(result.state.best_iteration));
  return 0;
}

// ---- infer ----------------------------------------------------------------

template <typename T>
int run_infer(const std::string& checkpoint, const std::string& data, const fs::path& out, bool pgm) {
  const auto cfg = checkpoint_config(checkpoint);
  ThtdNet<T> net(cfg, 0);
  load_checkpoint(checkpoint, net);
  const auto ds = load_dataset(data);
  for (const auto& v : ds.videos) {
    const auto maps = infer_video(net, v);
    for (std::size_t f = 0; f < maps.size(); ++f) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "frame_%04zu", f);
      const auto dir = out / v.name;
      std::vector<float> values(maps[f].values.begin(), maps[f].values.end());
      save_bundle(dir / (std::string(stem) + ".json"),
                  Bundle{{BundleTensor::from("saliency", {maps[f].rows, maps[f].cols}, std::move(values))}, {}});
      if (pgm) export_pgm(dir / (std::string(stem) + ".pgm"), maps[f]);
    }
    std::printf("%s: %zu maps\n", v.name.c_str(), maps.size());
  }
  return 0;
}

int run_eval(const std::string& pred, const std::string& data, const fs::path& out, std::uint64_t seed) {
  const auto ds = load_dataset(data);
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    const auto& v = ds.videos[i];
    std::vector<Map2D> preds, gts;
    for (std::int64_t f = 0; f < v.frames; ++f) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "frame_%04lld.json", static_cast<long long>(f));
      const auto b = load_bundle(fs::path(pred) / v.name / stem).at("saliency");
      if (b.shape != Shape{v.rows, v.cols})
        throw ShapeError(v.name + "/" + stem + ": prediction " + shape_str(b.shape) + " vs frame " +
                         std::to_string(v.rows) + "x" + std::to_string(v.cols));
      preds.emplace_back(v.rows, v.cols, b.values<double>());
      gts.push_back(v.density_map(f));
    }
    reports.push_back(evaluate_video(v.name, preds, gts, v.fixations, ds.fixations_except(i), mix_seed(seed, 0x7e, i)));
    print_metrics(reports.back());
  }
  print_metrics(combine_reports("all", reports));
  write_metrics_csv(out / "metrics.csv", reports);
  write_metrics_json(out / "metrics.json", reports);
  return 0;
}

template <typename T>
int run_ablate(const LoadedConfig& cfg, const TrainArgs& a, const std::string& eval_dir,
               const std::vector<std::string>& variants, const fs::path& out) {
  const auto train_set = load_dataset(a.data);
  const Dataset val_set = a.val.empty() ? Dataset{} : load_dataset(a.val);
  const Dataset eval_set = eval_dir.empty() ? train_set : load_dataset(eval_dir);
  TrainConfig tc = cfg.train;
  if (a.max_iters) tc.max_iterations = *a.max_iters;
  if (a.lr) tc.lr = *a.lr;
  std::vector<std::string> tags = variants;
  if (tags.empty())
    for (auto v : all_variants()) tags.emplace_back(variant_tag(v));
  auto rows = run_ablation<T>(cfg.model, tags, train_set, val_set, eval_set, tc, [](const AblationRow& r) {
    std::printf("%-14s params %9lld  cc %.4f  nss %.4f  sim %.4f  auc_j %.4f\n", r.variant.c_str(),
                static_cast<long long>(r.params), r.cc, r.nss, r.sim, r.auc_j);
    std::fflush(stdout);
  });
  write_ablation_csv(out, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video saliency network: synthetic data, training, inference and evaluation"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common synth_c;
  SyntheticSpec spec;
  auto* synth = app.add_subcommand("synth", "Generate a moving-blob dataset");
  add_common(synth, synth_c);
  synth->add_option("--videos", spec.videos, "Number of videos");
  synth->add_option("--frames", spec.frames, "Frames per video");
  auto* rows_opt = synth->add_option("--rows", spec.rows, "Frame height");
  synth->add_option("--cols", spec.cols, "Frame width");
  synth->add_option("--blobs", spec.blobs, "Blobs per video");
  synth->add_option("--sigma", spec.blob_sigma, "Blob sigma in pixels");
  synth->add_option("--step", spec.step_sigma, "Random-walk step sigma in pixels per frame");
  synth->add_option("--fixations", spec.fixations_per_frame, "Fixations per frame");

  Common train_c;
  TrainArgs train_a;
  auto* train_cmd = app.add_subcommand("train", "Train and write best/last checkpoints plus the log");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--data", train_a.data, "Training dataset directory")->required();
  train_cmd->add_option("--val", train_a.val, "Validation dataset directory");
  train_cmd->add_option("--resume", train_a.resume, "Continue from a previous --out directory");
  train_cmd->add_option("--max-iters", train_a.max_iters, "Iteration budget");
  train_cmd->add_option("--lr", train_a.lr, "Learning rate");

  Common infer_c;
  std::string infer_ckpt, infer_data;
  bool infer_pgm = false;
  auto* infer = app.add_subcommand("infer", "Per-frame saliency bundles for every video");
  add_common(infer, infer_c);
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint manifest")->required();
  infer->add_option("--data", infer_data, "Dataset directory")->required();
  infer->add_flag("--pgm", infer_pgm, "Also write PGM previews");

  Common eval_c;
  std::string eval_pred, eval_data;
  auto* eval = app.add_subcommand("eval", "Score predictions against a dataset");
  add_common(eval, eval_c);
  eval->add_option("--pred", eval_pred, "Prediction directory written by infer")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();

  Common ablate_c;
  TrainArgs ablate_a;
  std::string ablate_eval;
  std::vector<std::string> ablate_variants;
  auto* ablate = app.add_subcommand("ablate", "Train and score decoder variants under one budget");
  add_common(ablate, ablate_c);
  ablate->add_option("--data", ablate_a.data, "Training dataset directory")->required();
  ablate->add_option("--val", ablate_a.val, "Validation dataset directory");
  ablate->add_option("--eval", ablate_eval, "Evaluation dataset directory (default: training set)");
  ablate->add_option("--variants", ablate_variants, "Variant tags (default: all)")->delimiter(',');
  ablate->add_option("--max-iters", ablate_a.max_iters, "Iteration budget per variant");
  ablate->add_option("--lr", ablate_a.lr, "Learning rate");

  Common grad_c;
  std::int64_t grad_seeds = 10;
  bool grad_no_model = false;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  add_common(grad, grad_c, false);
  grad->add_option("--seeds", grad_seeds, "Seeds per suite")->check(CLI::PositiveNumber);
  grad->add_flag("--no-model", grad_no_model, "Skip the full-network check");

  Common shapes_c;
  auto* shapes = app.add_subcommand("shapes", "Print feature pyramid and decoder trace (no weights)");
  add_common(shapes, shapes_c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      const auto cfg = resolve(synth_c);
      if (rows_opt->count() == 0) {
        spec.rows = cfg.model.encoder.height;
        if (synth->get_option("--cols")->count() == 0) spec.cols = cfg.model.encoder.width;
      }
      spec.seed = cfg.train.seed;
      if (spec.frames < cfg.model.encoder.frames)
        throw ConfigError("--frames " + std::to_string(spec.frames) + " is shorter than the clip length " +
                          std::to_string(cfg.model.encoder.frames));
      const auto ds = generate_synthetic(spec);
      const fs::path out = synth_c.out.empty() ? "data" : synth_c.out;
      save_dataset(out, ds,
                   {{"generator", "moving_blobs"}, {"videos", spec.videos}, {"frames", spec.frames},
                    {"rows", spec.rows}, {"cols", spec.cols}, {"blobs", spec.blobs}, {"blob_sigma", spec.blob_sigma},
                    {"step_sigma", spec.step_sigma}, {"fixations_per_frame", spec.fixations_per_frame},
                    {"seed", spec.seed}});
      std::printf("wrote %lld videos to %s\n", static_cast<long long>(spec.videos), out.string().c_str());
      return 0;
    }
    if (train_cmd->parsed()) {
      const auto cfg = resolve(train_c);
      const fs::path out = train_c.out.empty() ? "run" : train_c.out;
      return cfg.train.dtype == "f64" ? run_train<double>(cfg, train_a, out) : run_train<float>(cfg, train_a, out);
    }
    if (infer->parsed()) {
      const fs::path out = infer_c.out.empty() ? "pred" : infer_c.out;
      return infer_c.dtype == "f64" ? run_infer<double>(infer_ckpt, infer_data, out, infer_pgm)
                                    : run_infer<float>(infer_ckpt, infer_data, out, infer_pgm);
    }
    if (eval->parsed()) {
      const fs::path out = eval_c.out.empty() ? "eval" : eval_c.out;
      return run_eval(eval_pred, eval_data, out, eval_c.seed.value_or(0));
    }
    if (ablate->parsed()) {
      const auto cfg = resolve(ablate_c);
      const fs::path out = ablate_c.out.empty() ? "ablation.csv" : ablate_c.out;
      for (const auto& tag : ablate_variants) parse_variant(tag);
      return cfg.train.dtype == "f64" ? run_ablate<double>(cfg, ablate_a, ablate_eval, ablate_variants, out)
                                      : run_ablate<float>(cfg, ablate_a, ablate_eval, ablate_variants, out);
    }
    if (grad->parsed()) {
      GradcheckPlan plan;
      plan.f64 = grad_c.dtype != "f32";
      plan.seeds = grad_seeds;
      plan.include_model = !grad_no_model;
      plan.seed = grad_c.seed.value_or(0);
      std::string current;
      double worst = 0, tol = 0;
      std::int64_t coords = 0, skipped = 0;
      bool ok = true, suite_ok = true;
      auto flush = [&] {
        if (!current.empty())
          std::printf("%-4s %-20s max rel err %.3e (tol %.0e)  %lld coords, %lld skipped at kinks\n",
                      suite_ok ? "PASS" : "FAIL", current.c_str(), worst, tol, static_cast<long long>(coords),
                      static_cast<long long>(skipped));
      };
      run_gradcheck(plan, [&](const GradcheckResult& r) {
        if (r.suite != current) {
          flush();
          current = r.suite;
          worst = 0;
          coords = skipped = 0;
          suite_ok = true;
        }
        worst = std::max(worst, r.rel_error);
        tol = r.tolerance;
        coords += r.coords;
        skipped += r.skipped;
        suite_ok = suite_ok && r.passed();
        ok = ok && r.passed();
        std::fflush(stdout);
      });
      flush();
      std::printf("%s\n", ok ? "all suites passed" : "gradient check FAILED");
      return ok ? 0 : 1;
    }
    if (shapes->parsed()) {
      const auto cfg = resolve(shapes_c);
      std::fputs(format_shape_report(cfg.model, dry_run_shapes(cfg.model)).c_str(), stdout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
