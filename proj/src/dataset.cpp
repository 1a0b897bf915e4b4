#include "thtd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "thtd/random.hpp"

namespace thtd {

void VideoData::validate() const {
  const auto plane = rows * cols;
  if (frames < 1 || rows < 1 || cols < 1) throw ShapeError("video '" + name + "': empty dimensions");
  if (static_cast<std::int64_t>(pixels.size()) != frames * plane * 3)
    throw ShapeError("video '" + name + "': pixel buffer does not match " + std::to_string(frames) + "x" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "x3");
  if (static_cast<std::int64_t>(density.size()) != frames * plane)
    throw ShapeError("video '" + name + "': density buffer size mismatch");
  if (static_cast<std::int64_t>(fixations.size()) != frames)
    throw ShapeError("video '" + name + "': expected one fixation record per frame");
  for (const auto& f : fixations) f.validate();
}

template <typename T>
Tensor<T> VideoData::clip(const std::vector<std::int64_t>& indices) const {
  const auto frame_size = rows * cols * 3;
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(frame_size) * indices.size());
  for (auto idx : indices) {
    if (idx < 0 || idx >= frames) throw ShapeError("clip: frame index " + std::to_string(idx) + " out of range");
    const float* src = pixels.data() + idx * frame_size;
    for (std::int64_t i = 0; i < frame_size; ++i) data.push_back(static_cast<T>(src[i]));
  }
  return Tensor<T>::from_data({static_cast<std::int64_t>(indices.size()), rows, cols, 3}, std::move(data));
}

template <typename T>
Tensor<T> VideoData::density_tensor(std::int64_t frame) const {
  const auto plane = rows * cols;
  std::vector<T> data(density.begin() + frame * plane, density.begin() + (frame + 1) * plane);
  return Tensor<T>::from_data({1, 1, rows, cols}, std::move(data));
}

Map2D VideoData::density_map(std::int64_t frame) const {
  const auto plane = rows * cols;
  return Map2D(rows, cols, std::vector<double>(density.begin() + frame * plane, density.begin() + (frame + 1) * plane));
}

std::int64_t Dataset::total_frames() const {
  std::int64_t n = 0;
  for (const auto& v : videos) n += v.frames;
  return n;
}

std::vector<FixationRecord> Dataset::fixations_except(std::size_t exclude) const {
  std::vector<FixationRecord> out;
  for (std::size_t i = 0; i < videos.size(); ++i)
    if (i != exclude) out.insert(out.end(), videos[i].fixations.begin(), videos[i].fixations.end());
  return out;
}

void SyntheticSpec::validate() const {
  if (videos < 1 || frames < 1) throw ConfigError("synthetic: need at least one video and one frame");
  if (rows < 1 || cols < 1) throw ConfigError("synthetic: frame dims must be positive");
  if (blobs < 1) throw ConfigError("synthetic: need at least one blob");
  if (!(blob_sigma > 0) || !(step_sigma >= 0)) throw ConfigError("synthetic: sigma must be > 0");
  if (6.0 * blob_sigma > static_cast<double>(std::min(rows, cols)))
    throw ConfigError("synthetic: frame " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " too small for blob sigma " + std::to_string(blob_sigma) + " (needs >= 6 sigma)");
  if (fixations_per_frame < 0) throw ConfigError("synthetic: negative fixation count");
}

namespace {

enum : std::uint64_t { kWalkStream = 11, kFixationStream = 12 };

double reflect(double x, double hi) {
  // Fold into [0, hi].
  if (hi <= 0) return 0;
  const double period = 2 * hi;
  x = std::fmod(x, period);
  if (x < 0) x += period;
  return x > hi ? period - x : x;
}

}  // namespace

std::vector<std::vector<std::pair<double, double>>> synthetic_walk(const SyntheticSpec& spec, std::int64_t video) {
  Rng rng(mix_seed(spec.seed, kWalkStream, static_cast<std::uint64_t>(video)));
  const double margin = 2.0 * spec.blob_sigma;
  const double hr = static_cast<double>(spec.rows - 1), hc = static_cast<double>(spec.cols - 1);
  std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(spec.blobs));
  for (auto& p : pos) {
    p.first = margin + rng.uniform() * std::max(0.0, hr - 2 * margin);
    p.second = margin + rng.uniform() * std::max(0.0, hc - 2 * margin);
  }
  std::vector<std::vector<std::pair<double, double>>> walk;
  for (std::int64_t f = 0; f < spec.frames; ++f) {
    if (f > 0)
      for (auto& p : pos) {
        p.first = reflect(p.first + rng.normal() * spec.step_sigma, hr);
        p.second = reflect(p.second + rng.normal() * spec.step_sigma, hc);
      }
    walk.push_back(pos);
  }
  return walk;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  const auto plane = spec.rows * spec.cols;
  const double inv2s2 = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
  for (std::int64_t v = 0; v < spec.videos; ++v) {
    VideoData vid;
    char name[32];
    std::snprintf(name, sizeof name, "video_%03lld", static_cast<long long>(v));
    vid.name = name;
    vid.frames = spec.frames;
    vid.rows = spec.rows;
    vid.cols = spec.cols;
    vid.pixels.resize(static_cast<std::size_t>(spec.frames * plane * 3));
    vid.density.resize(static_cast<std::size_t>(spec.frames * plane));
    const auto walk = synthetic_walk(spec, v);
    Rng fix_rng(mix_seed(spec.seed, kFixationStream, static_cast<std::uint64_t>(v)));
    std::vector<double> field(static_cast<std::size_t>(plane));
    for (std::int64_t f = 0; f < spec.frames; ++f) {
      double total = 0;
      for (std::int64_t r = 0; r < spec.rows; ++r)
        for (std::int64_t c = 0; c < spec.cols; ++c) {
          double val = 0;
          for (const auto& [br, bc] : walk[f]) {
            const double dr = static_cast<double>(r) - br, dc = static_cast<double>(c) - bc;
            val += std::exp(-(dr * dr + dc * dc) * inv2s2);
          }
          field[r * spec.cols + c] = val;
          total += val;
        }
      for (std::int64_t i = 0; i < plane; ++i) {
        const float px = static_cast<float>(std::min(1.0, field[i]));
        float* dst = vid.pixels.data() + (f * plane + i) * 3;
        dst[0] = dst[1] = dst[2] = px;
        vid.density[f * plane + i] = static_cast<float>(field[i] / total);
      }

      FixationRecord rec;
      rec.frame = f;
      rec.rows = spec.rows;
      rec.cols = spec.cols;
      const std::int64_t n_top = (spec.fixations_per_frame + 1) / 2;
      const std::int64_t n_sampled = spec.fixations_per_frame - n_top;
      std::vector<std::int64_t> order(static_cast<std::size_t>(plane));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return field[a] > field[b]; });
      for (std::int64_t k = 0; k < std::min(n_top, plane); ++k)
        rec.points.push_back({order[k] / spec.cols, order[k] % spec.cols});
      for (std::int64_t k = 0; k < n_sampled; ++k) {
        double u = fix_rng.uniform() * total, acc = 0;
        std::int64_t idx = plane - 1;
        for (std::int64_t i = 0; i < plane; ++i) {
          acc += field[i];
          if (acc > u) {
            idx = i;
            break;
          }
        }
        rec.points.push_back({idx / spec.cols, idx % spec.cols});
      }
      vid.fixations.push_back(std::move(rec));
    }
    ds.videos.push_back(std::move(vid));
  }
  return ds;
}

template Tensor<float> VideoData::clip<float>(const std::vector<std::int64_t>&) const;
template Tensor<double> VideoData::clip<double>(const std::vector<std::int64_t>&) const;
template Tensor<float> VideoData::density_tensor<float>(std::int64_t) const;
template Tensor<double> VideoData::density_tensor<double>(std::int64_t) const;

}  // namespace thtd
