#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "thtd/adam.hpp"
#include "thtd/dataset.hpp"
#include "thtd/metrics.hpp"
#include "thtd/model.hpp"

namespace thtd {

struct ClipWindow {
  std::int64_t target = 0;
  std::vector<std::int64_t> indices;  // target is the last entry
  bool reversed = false;
};

/// One window per frame. Frames t >= T-1 use [t-T+1 .. t]; earlier frames use
/// the reversed forward clip [t+T-1, ..., t], with indices past the end of a
/// short video (N < 2T-2) clamped to the last frame.
std::vector<ClipWindow> make_clip_windows(std::int64_t frames, std::int64_t clip_length);

struct TrainConfig {
  double lr = 1e-3;
  std::int64_t batch_size = 1;
  std::int64_t clip_length = 8;
  std::int64_t max_iterations = 2000;
  std::int64_t patience = 5;
  std::int64_t val_every = 100;
  /// Validation windows per evaluation, evenly spaced over all windows (0 = all).
  std::int64_t val_windows = 32;
  std::uint64_t seed = 0;
  std::string dtype = "f32";

  static TrainConfig paper();
  static TrainConfig toy();
  static TrainConfig profile(std::string_view name);
  void validate(const ModelConfig& model) const;
};

struct TrainLogRow {
  std::int64_t iteration = 0;  // 1-based
  double cc_term = 0.0;
  double kl_term = 0.0;
  double total = 0.0;
  std::optional<double> val_total;
};

/// Everything needed to continue a run exactly where it stopped.
template <typename T>
struct TrainState {
  AdamState<T> adam;
  std::int64_t iteration = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::int64_t best_iteration = 0;
  std::int64_t evals_since_best = 0;
};

template <typename T>
struct TrainResult {
  ThtdNet<T> best;
  ThtdNet<T> last;
  TrainState<T> state;
  std::vector<TrainLogRow> log;
  bool early_stopped = false;
};

/// Raised when the loss turns non-finite. what() carries the iteration state.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optional hooks; `on_row` fires after every logged iteration.
template <typename T>
struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_row;
  /// Where a JSON dump of the failing iteration is written on divergence.
  std::string diagnostic_path;
};

/// Trains `model` on every clip window of `train`. Each iteration draws its
/// windows from a generator seeded by (seed, iteration), so a resumed run
/// replays the same sample stream. Validation runs every `val_every`
/// iterations and at the final one; the returned `best` holds the weights with
/// the lowest validation loss (the final weights when `val` is empty).
/// With `resume`, `model` must hold the resumed weights and `resume_best`
/// (optional) the best weights seen so far.
template <typename T>
TrainResult<T> train(const ThtdNet<T>& model, const Dataset& train_set, const Dataset& val_set,
                     const TrainConfig& config, const TrainState<T>* resume = nullptr,
                     const ThtdNet<T>* resume_best = nullptr, const TrainHooks<T>& hooks = {});

/// Mean total loss over the evenly spaced validation windows.
template <typename T>
double validation_loss(const ThtdNet<T>& model, const Dataset& val_set, std::int64_t max_windows);

using WindowObserver = std::function<void(const ClipWindow&)>;

/// One saliency map per frame, in frame order.
template <typename T>
std::vector<Map2D> infer_video(const ThtdNet<T>& model, const VideoData& video, const WindowObserver& observer = {});

/// Infers every video and scores it; S-AUC negatives come from the other videos.
template <typename T>
std::vector<MetricsReport> evaluate_dataset(const ThtdNet<T>& model, const Dataset& data, std::uint64_t seed);

struct AblationRow {
  std::string variant;
  std::int64_t params = 0;
  double cc = 0.0, nss = 0.0, sim = 0.0, auc_j = 0.0;
};

/// Trains each variant from the same seed and budget, then scores it on
/// `eval_set`. Tags are validated before any training starts.
template <typename T>
std::vector<AblationRow> run_ablation(const ModelConfig& base, const std::vector<std::string>& variant_tags,
                                      const Dataset& train_set, const Dataset& val_set, const Dataset& eval_set,
                                      const TrainConfig& config,
                                      const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace thtd
