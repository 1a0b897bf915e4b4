#pragma once

// Saliency evaluation: distribution-based (CC, SIM) and location-based
// (AUC-Judd, shuffled AUC, NSS) scores.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace thtd {

struct Map2D {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;  // row-major

  Map2D() = default;
  Map2D(std::int64_t r, std::int64_t c, std::vector<double> v);
  double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
  std::size_t size() const { return values.size(); }
};

struct Fixation {
  std::int64_t row = 0;
  std::int64_t col = 0;
  friend bool operator==(const Fixation&, const Fixation&) = default;
};

struct FixationRecord {
  std::int64_t frame = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<Fixation> points;

  /// Throws std::out_of_range when a point lies outside rows x cols.
  void validate() const;
};

double cc_metric(const Map2D& s, const Map2D& g);
double sim(const Map2D& s, const Map2D& g);

/// nullopt when the record has no fixations.
std::optional<double> nss(const Map2D& s, const FixationRecord& fix);
std::optional<double> auc_judd(const Map2D& s, const FixationRecord& fix);

/// Negatives are fixation locations pooled from `negatives`, minus locations
/// fixated in `fix`, subsampled (seeded) to at most 10x the positive count.
std::optional<double> shuffled_auc(const Map2D& s, const FixationRecord& fix,
                                   const std::vector<FixationRecord>& negatives, std::uint64_t seed);

inline constexpr std::size_t kShuffledNegativeCap = 10;

/// ROC area with thresholds at every distinct positive score, ">=" counting as
/// classified positive, trapezoids between (0,0) ... (1,1).
double roc_auc_at_positive_thresholds(std::vector<double> positives, std::vector<double> negatives);

struct FrameMetrics {
  std::int64_t frame = 0;
  std::optional<double> auc_j, s_auc, nss;
  double cc = 0.0;
  double sim = 0.0;
};

struct MetricsReport {
  std::string video;
  std::vector<FrameMetrics> frames;
  double auc_j = 0.0, s_auc = 0.0, nss = 0.0, cc = 0.0, sim = 0.0;
  std::int64_t skipped_frames = 0;     // frames without fixations (no AUC/NSS)
  std::int64_t degenerate_frames = 0;  // constant predictions scored as cc = nss = 0

  /// Recomputes the means over the non-skipped frames.
  void aggregate();
};

/// Scores a video frame by frame. `negative_pool` supplies S-AUC negatives
/// (fixations from other videos); when empty, S-AUC is left unset.
MetricsReport evaluate_video(const std::string& video, const std::vector<Map2D>& predictions,
                             const std::vector<Map2D>& ground_truth, const std::vector<FixationRecord>& fixations,
                             const std::vector<FixationRecord>& negative_pool, std::uint64_t seed);

/// Means over every frame of several videos.
MetricsReport combine_reports(const std::string& name, const std::vector<MetricsReport>& reports);

}  // namespace thtd
