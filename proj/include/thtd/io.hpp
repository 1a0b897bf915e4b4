#pragma once

// On-disk formats: tensor bundles (JSON manifest + little-endian payload),
// checkpoints, datasets, CSV/JSON reports and PGM previews.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "thtd/dataset.hpp"
#include "thtd/metrics.hpp"
#include "thtd/model.hpp"
#include "thtd/pipeline.hpp"

namespace thtd {

namespace fs = std::filesystem;

struct BundleTensor {
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> data;

  std::string dtype() const { return data.index() == 0 ? "f32" : "f64"; }
  std::size_t element_size() const { return data.index() == 0 ? 4 : 8; }
  template <typename T>
  static BundleTensor from(std::string name, Shape shape, std::vector<T> values) {
    return {std::move(name), std::move(shape), std::move(values)};
  }
  /// Values converted to T.
  template <typename T>
  std::vector<T> values() const;
};

struct Bundle {
  std::vector<BundleTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const BundleTensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

/// Writes `<manifest>` (JSON) and the payload next to it (same stem, ".bin").
void save_bundle(const fs::path& manifest, const Bundle& bundle);
/// Throws FormatError naming the file and the offending field or byte range.
Bundle load_bundle(const fs::path& manifest);

/// Parameters (and optionally optimizer/training state) plus a config echo.
template <typename T>
void save_checkpoint(const fs::path& manifest, const ThtdNet<T>& net, const TrainState<T>* state = nullptr);
ModelConfig checkpoint_config(const fs::path& manifest);
/// Copies stored parameters into `net`; ConfigError if the configs differ.
/// Returns the stored training state when present.
template <typename T>
std::optional<TrainState<T>> load_checkpoint(const fs::path& manifest, ThtdNet<T>& net);

nlohmann::json config_to_json(const ModelConfig& model, const TrainConfig& train);
struct LoadedConfig {
  ModelConfig model;
  TrainConfig train;
};
/// Flat JSON object. "profile" (paper|toy, default toy) selects the defaults,
/// other keys override them; unknown keys are rejected.
LoadedConfig config_from_json(const nlohmann::json& j, const std::string& source = "<config>");
LoadedConfig load_config(const fs::path& path);

/// CSV with header video,frame,row,col. `dims` maps each video to
/// (frames, rows, cols); every listed video gets one record per frame.
std::map<std::string, std::vector<FixationRecord>> load_fixations(
    const fs::path& path, const std::map<std::string, std::array<std::int64_t, 3>>& dims);
void save_fixations(const fs::path& path, const Dataset& data);

/// Dataset directory: dataset.json, <video>.frames.{json,bin},
/// <video>.density.{json,bin}, fixations.csv.
void save_dataset(const fs::path& dir, const Dataset& data, const nlohmann::json& extra = {});
Dataset load_dataset(const fs::path& dir);

void write_metrics_csv(const fs::path& path, const std::vector<MetricsReport>& reports);
void write_metrics_json(const fs::path& path, const std::vector<MetricsReport>& reports);
void write_training_log(const fs::path& path, const std::vector<TrainLogRow>& rows);
std::vector<TrainLogRow> read_training_log(const fs::path& path);
void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows);

/// 8-bit binary PGM; values clamped to [0, 1] and scaled with round-half-up.
void export_pgm(const fs::path& path, const Map2D& map);
std::uint8_t pgm_level(double v);

}  // namespace thtd
