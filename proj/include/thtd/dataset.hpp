#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thtd/metrics.hpp"
#include "thtd/tensor.hpp"

namespace thtd {

/// One video: RGB frames in [0, 1], per-frame ground-truth densities (unit
/// sum) and discrete fixations.
struct VideoData {
  std::string name;
  std::int64_t frames = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<float> pixels;   // [N, H, W, 3]
  std::vector<float> density;  // [N, H, W]
  std::vector<FixationRecord> fixations;  // one record per frame

  void validate() const;
  /// Gathers frames by index into a [len, H, W, 3] clip.
  template <typename T>
  Tensor<T> clip(const std::vector<std::int64_t>& indices) const;
  template <typename T>
  Tensor<T> density_tensor(std::int64_t frame) const;  // [1, 1, H, W]
  Map2D density_map(std::int64_t frame) const;
};

struct Dataset {
  std::vector<VideoData> videos;

  std::int64_t total_frames() const;
  /// Fixation records of every video except `exclude` (shuffled-AUC negatives).
  std::vector<FixationRecord> fixations_except(std::size_t exclude) const;
};

/// Parameters of the moving-blob generator.
struct SyntheticSpec {
  std::int64_t videos = 8;
  std::int64_t frames = 16;
  std::int64_t rows = 32;
  std::int64_t cols = 64;
  std::int64_t blobs = 1;
  double blob_sigma = 3.0;  // pixels
  double step_sigma = 2.0;  // pixels per frame
  std::int64_t fixations_per_frame = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Blob centres follow a reflected Gaussian random walk. Frames render the
/// blobs as grey Gaussians replicated on three channels; the density is the
/// same mixture normalized to unit sum; fixations are the top half of the
/// budget by density plus seeded draws from it.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Blob centres used for one video, [frame][blob] = (row, col). Exposed for tests.
std::vector<std::vector<std::pair<double, double>>> synthetic_walk(const SyntheticSpec& spec, std::int64_t video);

}  // namespace thtd
