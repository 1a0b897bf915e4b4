#include "thtd/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace thtd {

using nlohmann::json;

namespace {

[[noreturn]] void format_error(const fs::path& file, const std::string& msg) {
  throw FormatError(file.string() + ": " + msg);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) format_error(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) format_error(path, "cannot open for writing");
  return out;
}

json parse_json(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    format_error(path, std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
}

template <typename T>
void append_le(std::string& out, const std::vector<T>& values) {
  const auto start = out.size();
  out.resize(start + values.size() * sizeof(T));
  std::memcpy(out.data() + start, values.data(), values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = start; i < out.size(); i += sizeof(T)) std::reverse(out.begin() + i, out.begin() + i + sizeof(T));
  }
}

template <typename T>
std::vector<T> read_le(const std::string& payload, std::size_t offset, std::size_t count) {
  std::vector<T> v(count);
  std::memcpy(v.data(), payload.data() + offset, count * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<char*>(v.data());
    for (std::size_t i = 0; i < count * sizeof(T); i += sizeof(T)) std::reverse(bytes + i, bytes + i + sizeof(T));
  }
  return v;
}

fs::path payload_path(const fs::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

template <typename V>
V get_field(const json& j, const char* key, const fs::path& file, const std::string& where) {
  if (!j.contains(key)) format_error(file, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception&) {
    format_error(file, where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

template <typename T>
std::vector<T> BundleTensor::values() const {
  return std::visit([](const auto& v) { return std::vector<T>(v.begin(), v.end()); }, data);
}
template std::vector<float> BundleTensor::values<float>() const;
template std::vector<double> BundleTensor::values<double>() const;

const BundleTensor& Bundle::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("bundle has no tensor named '" + name + "'");
}

bool Bundle::contains(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void save_bundle(const fs::path& manifest, const Bundle& bundle) {
  std::string payload;
  json entries = json::array();
  std::set<std::string> names;
  for (const auto& t : bundle.tensors) {
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
    const auto n = static_cast<std::size_t>(numel(t.shape));
    const auto offset = payload.size();
    std::visit(
        [&](const auto& v) {
          if (v.size() != n)
            throw ShapeError("tensor '" + t.name + "': " + std::to_string(v.size()) + " values for shape " +
                             shape_str(t.shape));
          append_le(payload, v);
        },
        t.data);
    entries.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"dtype", t.dtype()},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  }
  const auto bin = payload_path(manifest);
  json j = {{"format", "thtd.bundle"},
            {"version", 1},
            {"byte_order", "little"},
            {"payload", bin.filename().string()},
            {"payload_bytes", payload.size()},
            {"tensors", entries},
            {"meta", bundle.meta}};
  auto out = open_out(manifest);
  out << j.dump(2) << "\n";
  auto bout = open_out(bin, true);
  bout.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out || !bout) format_error(manifest, "write failed");
}

Bundle load_bundle(const fs::path& manifest) {
  const json j = parse_json(manifest);
  if (!j.is_object()) format_error(manifest, "manifest must be a JSON object");
  if (get_field<std::string>(j, "format", manifest, "manifest") != "thtd.bundle")
    format_error(manifest, "manifest: 'format' is not thtd.bundle");
  if (get_field<std::string>(j, "byte_order", manifest, "manifest") != "little")
    format_error(manifest, "manifest: only little-endian payloads are supported");
  const auto bin = manifest.parent_path() / get_field<std::string>(j, "payload", manifest, "manifest");
  const auto payload = read_file(bin);
  const auto declared = get_field<std::size_t>(j, "payload_bytes", manifest, "manifest");
  if (payload.size() != declared)
    format_error(bin, "payload is " + std::to_string(payload.size()) + " bytes, manifest declares " +
                          std::to_string(declared));
  if (!j.contains("tensors") || !j["tensors"].is_array()) format_error(manifest, "manifest: 'tensors' must be an array");
  Bundle b;
  if (j.contains("meta")) b.meta = j["meta"];
  std::size_t index = 0;
  for (const auto& e : j["tensors"]) {
    const std::string where = "tensors[" + std::to_string(index++) + "]";
    BundleTensor t;
    t.name = get_field<std::string>(e, "name", manifest, where);
    t.shape = get_field<Shape>(e, "shape", manifest, where);
    for (auto d : t.shape)
      if (d < 0) format_error(manifest, where + " ('" + t.name + "'): negative dimension");
    const auto dtype = get_field<std::string>(e, "dtype", manifest, where);
    const auto offset = get_field<std::size_t>(e, "offset", manifest, where);
    const auto nbytes = get_field<std::size_t>(e, "nbytes", manifest, where);
    const std::size_t elem = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (!elem) format_error(manifest, where + " ('" + t.name + "'): unknown dtype '" + dtype + "'");
    const auto n = static_cast<std::size_t>(numel(t.shape));
    if (nbytes != n * elem)
      format_error(manifest, where + " ('" + t.name + "'): shape " + shape_str(t.shape) + " x " +
                                 std::to_string(elem) + " bytes != nbytes " + std::to_string(nbytes));
    if (offset > payload.size() || nbytes > payload.size() - offset)
      format_error(manifest, where + " ('" + t.name + "'): bytes [" + std::to_string(offset) + ", " +
                                 std::to_string(offset + nbytes) + ") exceed payload of " +
                                 std::to_string(payload.size()));
    if (elem == 4)
      t.data = read_le<float>(payload, offset, n);
    else
      t.data = read_le<double>(payload, offset, n);
    b.tensors.push_back(std::move(t));
  }
  return b;
}

// ---- config ---------------------------------------------------------------

namespace {

json model_json(const ModelConfig& m) {
  const auto& e = m.encoder;
  return {{"frames", e.frames},     {"height", e.height}, {"width", e.width},
          {"embed_dim", e.embed_dim}, {"window", e.window}, {"heads", e.heads},
          {"depths", e.depths},     {"mlp_ratio", e.mlp_ratio}, {"variant", std::string(variant_tag(m.variant))}};
}

}  // namespace

json config_to_json(const ModelConfig& model, const TrainConfig& train) {
  json j = model_json(model);
  j["lr"] = train.lr;
  j["batch_size"] = train.batch_size;
  j["max_iterations"] = train.max_iterations;
  j["patience"] = train.patience;
  j["val_every"] = train.val_every;
  j["val_windows"] = train.val_windows;
  j["seed"] = train.seed;
  j["dtype"] = train.dtype;
  return j;
}

LoadedConfig config_from_json(const json& j, const std::string& source) {
  if (!j.is_object()) throw FormatError(source + ": config must be a flat JSON object");
  const std::string profile = j.contains("profile") ? j["profile"].get<std::string>() : "toy";
  LoadedConfig c{ModelConfig::profile(profile), TrainConfig::profile(profile)};
  auto& e = c.model.encoder;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "profile") continue;
      else if (key == "frames") e.frames = value.get<std::int64_t>();
      else if (key == "height") e.height = value.get<std::int64_t>();
      else if (key == "width") e.width = value.get<std::int64_t>();
      else if (key == "embed_dim") e.embed_dim = value.get<std::int64_t>();
      else if (key == "window") e.window = value.get<Dims3>();
      else if (key == "heads") e.heads = value.get<std::array<std::int64_t, 4>>();
      else if (key == "depths") e.depths = value.get<std::array<std::int64_t, 4>>();
      else if (key == "mlp_ratio") e.mlp_ratio = value.get<std::int64_t>();
      else if (key == "variant") c.model.variant = parse_variant(value.get<std::string>());
      else if (key == "lr") c.train.lr = value.get<double>();
      else if (key == "batch_size") c.train.batch_size = value.get<std::int64_t>();
      else if (key == "max_iterations") c.train.max_iterations = value.get<std::int64_t>();
      else if (key == "patience") c.train.patience = value.get<std::int64_t>();
      else if (key == "val_every") c.train.val_every = value.get<std::int64_t>();
      else if (key == "val_windows") c.train.val_windows = value.get<std::int64_t>();
      else if (key == "seed") c.train.seed = value.get<std::uint64_t>();
      else if (key == "dtype") c.train.dtype = value.get<std::string>();
      else throw FormatError(source + ": unknown config key '" + key + "'");
    } catch (const json::exception&) {
      throw FormatError(source + ": config key '" + key + "' has the wrong type");
    }
  }
  c.train.clip_length = e.frames;
  c.model.validate();
  c.train.validate(c.model);
  return c;
}

LoadedConfig load_config(const fs::path& path) { return config_from_json(parse_json(path), path.string()); }

// ---- checkpoints ------------------------------------------------------------

template <typename T>
void save_checkpoint(const fs::path& manifest, const ThtdNet<T>& net, const TrainState<T>* state) {
  Bundle b;
  const auto params = net.named_parameters();
  for (const auto& p : params) b.tensors.push_back(BundleTensor::from("param/" + p.name, p.tensor.shape(), p.tensor.storage()));
  b.meta["kind"] = "checkpoint";
  b.meta["config"] = model_json(net.config());
  if (state) {
    const auto& a = state->adam;
    if (a.m.size() != params.size() || a.v.size() != params.size())
      throw ConfigError("optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
      b.tensors.push_back(BundleTensor::from("adam.m/" + params[i].name, params[i].tensor.shape(), a.m[i]));
      b.tensors.push_back(BundleTensor::from("adam.v/" + params[i].name, params[i].tensor.shape(), a.v[i]));
    }
    b.meta["state"] = {{"iteration", state->iteration},
                       {"best_val", std::isfinite(state->best_val) ? json(state->best_val) : json(nullptr)},
                       {"best_iteration", state->best_iteration},
                       {"evals_since_best", state->evals_since_best},
                       {"adam_step", a.step},
                       {"lr", a.options.lr},
                       {"beta1", a.options.beta1},
                       {"beta2", a.options.beta2},
                       {"eps", a.options.eps}};
  }
  save_bundle(manifest, b);
}

ModelConfig checkpoint_config(const fs::path& manifest) {
  const auto b = load_bundle(manifest);
  if (b.meta.value("kind", "") != "checkpoint") format_error(manifest, "not a checkpoint bundle");
  json cfg = b.meta.at("config");
  cfg["profile"] = "toy";
  ModelConfig m = config_from_json(cfg, manifest.string()).model;
  return m;
}

template <typename T>
std::optional<TrainState<T>> load_checkpoint(const fs::path& manifest, ThtdNet<T>& net) {
  const auto b = load_bundle(manifest);
  if (b.meta.value("kind", "") != "checkpoint") format_error(manifest, "not a checkpoint bundle");
  json cfg = b.meta.at("config");
  cfg["profile"] = "toy";
  const auto stored = config_from_json(cfg, manifest.string()).model;
  if (!(stored == net.config()))
    throw ConfigError(manifest.string() + ": checkpoint config " + model_json(stored).dump() +
                      " does not match model config " + model_json(net.config()).dump());
  auto params = net.named_parameters();
  auto copy_into = [&](const std::string& key, const Shape& shape, std::vector<T>& dst) {
    if (!b.contains(key)) format_error(manifest, "missing tensor '" + key + "'");
    const auto& t = b.at(key);
    if (t.shape != shape)
      format_error(manifest, "tensor '" + key + "' has shape " + shape_str(t.shape) + ", expected " + shape_str(shape));
    dst = t.values<T>();
  };
  for (auto& p : params) copy_into("param/" + p.name, p.tensor.shape(), p.tensor.storage());
  if (!b.meta.contains("state")) return std::nullopt;
  const auto& s = b.meta["state"];
  TrainState<T> st;
  st.iteration = s.at("iteration").get<std::int64_t>();
  st.best_val = s.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : s.at("best_val").get<double>();
  st.best_iteration = s.at("best_iteration").get<std::int64_t>();
  st.evals_since_best = s.at("evals_since_best").get<std::int64_t>();
  st.adam.step = s.at("adam_step").get<std::int64_t>();
  st.adam.options = {s.at("lr").get<double>(), s.at("beta1").get<double>(), s.at("beta2").get<double>(),
                     s.at("eps").get<double>()};
  st.adam.m.resize(params.size());
  st.adam.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    copy_into("adam.m/" + params[i].name, params[i].tensor.shape(), st.adam.m[i]);
    copy_into("adam.v/" + params[i].name, params[i].tensor.shape(), st.adam.v[i]);
  }
  return st;
}

template void save_checkpoint(const fs::path&, const ThtdNet<float>&, const TrainState<float>*);
template void save_checkpoint(const fs::path&, const ThtdNet<double>&, const TrainState<double>*);
template std::optional<TrainState<float>> load_checkpoint(const fs::path&, ThtdNet<float>&);
template std::optional<TrainState<double>> load_checkpoint(const fs::path&, ThtdNet<double>&);

// ---- fixations and datasets -------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::int64_t parse_int(const std::string& s, const fs::path& file, std::size_t line, const char* column) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size())
    format_error(file, "line " + std::to_string(line) + ": column '" + column + "' is not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::map<std::string, std::vector<FixationRecord>> load_fixations(
    const fs::path& path, const std::map<std::string, std::array<std::int64_t, 3>>& dims) {
  std::ifstream in(path);
  if (!in) format_error(path, "cannot open for reading");
  std::map<std::string, std::vector<FixationRecord>> out;
  for (const auto& [name, d] : dims) {
    auto& recs = out[name];
    for (std::int64_t f = 0; f < d[0]; ++f) recs.push_back(FixationRecord{f, d[1], d[2], {}});
  }
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (!header) {
      if (cells != std::vector<std::string>{"video", "frame", "row", "col"})
        format_error(path, "line " + std::to_string(lineno) + ": expected header 'video,frame,row,col'");
      header = true;
      continue;
    }
    if (cells.size() != 4)
      format_error(path, "line " + std::to_string(lineno) + ": expected 4 columns, found " + std::to_string(cells.size()));
    const auto it = dims.find(cells[0]);
    if (it == dims.end()) format_error(path, "line " + std::to_string(lineno) + ": unknown video '" + cells[0] + "'");
    const auto frame = parse_int(cells[1], path, lineno, "frame");
    const auto row = parse_int(cells[2], path, lineno, "row");
    const auto col = parse_int(cells[3], path, lineno, "col");
    const auto& [nf, nr, nc] = it->second;
    if (frame < 0 || frame >= nf)
      format_error(path, "line " + std::to_string(lineno) + ": frame " + std::to_string(frame) + " outside [0, " +
                             std::to_string(nf) + ")");
    if (row < 0 || row >= nr)
      format_error(path, "line " + std::to_string(lineno) + ": row " + std::to_string(row) + " outside [0, " +
                             std::to_string(nr) + ")");
    if (col < 0 || col >= nc)
      format_error(path, "line " + std::to_string(lineno) + ": col " + std::to_string(col) + " outside [0, " +
                             std::to_string(nc) + ")");
    out[cells[0]][static_cast<std::size_t>(frame)].points.push_back({row, col});
  }
  if (!header) format_error(path, "empty file (missing header)");
  return out;
}

void save_fixations(const fs::path& path, const Dataset& data) {
  auto out = open_out(path);
  out << "video,frame,row,col\n";
  for (const auto& v : data.videos)
    for (const auto& rec : v.fixations)
      for (const auto& p : rec.points) out << v.name << ',' << rec.frame << ',' << p.row << ',' << p.col << '\n';
}

void save_dataset(const fs::path& dir, const Dataset& data, const json& extra) {
  fs::create_directories(dir);
  json videos = json::array();
  for (const auto& v : data.videos) {
    v.validate();
    videos.push_back({{"name", v.name}, {"frames", v.frames}, {"rows", v.rows}, {"cols", v.cols}});
    save_bundle(dir / (v.name + ".frames.json"),
                Bundle{{BundleTensor::from("frames", {v.frames, v.rows, v.cols, 3}, v.pixels)}, json::object()});
    save_bundle(dir / (v.name + ".density.json"),
                Bundle{{BundleTensor::from("density", {v.frames, v.rows, v.cols}, v.density)}, json::object()});
  }
  save_fixations(dir / "fixations.csv", data);
  json j = {{"format", "thtd.dataset"}, {"version", 1}, {"videos", videos}};
  if (!extra.is_null()) j["source"] = extra;
  auto out = open_out(dir / "dataset.json");
  out << j.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
  const auto index_path = dir / "dataset.json";
  const json j = parse_json(index_path);
  if (!j.contains("videos") || !j["videos"].is_array()) format_error(index_path, "missing 'videos' array");
  Dataset ds;
  std::map<std::string, std::array<std::int64_t, 3>> dims;
  std::size_t index = 0;
  for (const auto& e : j["videos"]) {
    const std::string where = "videos[" + std::to_string(index++) + "]";
    VideoData v;
    v.name = get_field<std::string>(e, "name", index_path, where);
    v.frames = get_field<std::int64_t>(e, "frames", index_path, where);
    v.rows = get_field<std::int64_t>(e, "rows", index_path, where);
    v.cols = get_field<std::int64_t>(e, "cols", index_path, where);
    const auto fpath = dir / (v.name + ".frames.json");
    const auto frames = load_bundle(fpath).at("frames");
    if (frames.shape != Shape{v.frames, v.rows, v.cols, 3})
      format_error(fpath, "frames have shape " + shape_str(frames.shape) + ", index declares " +
                              std::to_string(v.frames) + "x" + std::to_string(v.rows) + "x" + std::to_string(v.cols) + "x3");
    v.pixels = frames.values<float>();
    const auto dpath = dir / (v.name + ".density.json");
    const auto density = load_bundle(dpath).at("density");
    if (density.shape != Shape{v.frames, v.rows, v.cols})
      format_error(dpath, "density has shape " + shape_str(density.shape));
    v.density = density.values<float>();
    dims[v.name] = {v.frames, v.rows, v.cols};
    ds.videos.push_back(std::move(v));
  }
  auto fix = load_fixations(dir / "fixations.csv", dims);
  for (auto& v : ds.videos) v.fixations = std::move(fix[v.name]);
  return ds;
}

// ---- reports ----------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : ""; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void write_metrics_csv(const fs::path& path, const std::vector<MetricsReport>& reports) {
  auto out = open_out(path);
  out << "video,frame,auc_j,s_auc,nss,cc,sim\n";
  for (const auto& r : reports) {
    for (const auto& f : r.frames)
      out << r.video << ',' << f.frame << ',' << opt(f.auc_j) << ',' << opt(f.s_auc) << ',' << opt(f.nss) << ','
          << num(f.cc) << ',' << num(f.sim) << '\n';
    out << r.video << ",mean," << num(r.auc_j) << ',' << num(r.s_auc) << ',' << num(r.nss) << ',' << num(r.cc)
        << ',' << num(r.sim) << '\n';
  }
}

void write_metrics_json(const fs::path& path, const std::vector<MetricsReport>& reports) {
  json videos = json::array();
  for (const auto& r : reports) {
    json frames = json::array();
    for (const auto& f : r.frames)
      frames.push_back({{"frame", f.frame},
                        {"auc_j", opt_json(f.auc_j)},
                        {"s_auc", opt_json(f.s_auc)},
                        {"nss", opt_json(f.nss)},
                        {"cc", f.cc},
                        {"sim", f.sim}});
    videos.push_back({{"video", r.video},
                      {"frames", frames},
                      {"mean", {{"auc_j", r.auc_j}, {"s_auc", r.s_auc}, {"nss", r.nss}, {"cc", r.cc}, {"sim", r.sim}}},
                      {"skipped_frames", r.skipped_frames},
                      {"degenerate_frames", r.degenerate_frames}});
  }
  const auto all = combine_reports("all", reports);
  json j = {{"videos", videos},
            {"mean", {{"auc_j", all.auc_j}, {"s_auc", all.s_auc}, {"nss", all.nss}, {"cc", all.cc}, {"sim", all.sim}}}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_training_log(const fs::path& path, const std::vector<TrainLogRow>& rows) {
  auto out = open_out(path);
  out << "iteration,cc_term,kl_term,total,val_total\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << num(r.cc_term) << ',' << num(r.kl_term) << ',' << num(r.total) << ','
        << opt(r.val_total) << '\n';
}

std::vector<TrainLogRow> read_training_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) format_error(path, "cannot open for reading");
  std::vector<TrainLogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1) continue;
    const auto c = split_csv(line);
    if (c.size() != 5) format_error(path, "line " + std::to_string(lineno) + ": expected 5 columns");
    try {
      TrainLogRow r;
      r.iteration = std::stoll(c[0]);
      r.cc_term = std::stod(c[1]);
      r.kl_term = std::stod(c[2]);
      r.total = std::stod(c[3]);
      if (!c[4].empty()) r.val_total = std::stod(c[4]);
      rows.push_back(r);
    } catch (const std::exception&) {
      format_error(path, "line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_out(path);
  out << "variant,params,cc,nss,sim,auc_j\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.params << ',' << num(r.cc) << ',' << num(r.nss) << ',' << num(r.sim) << ','
        << num(r.auc_j) << '\n';
}

std::uint8_t pgm_level(double v) {
  if (!(v > 0)) return 0;
  if (v >= 1) return 255;
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

void export_pgm(const fs::path& path, const Map2D& map) {
  auto out = open_out(path, true);
  out << "P5\n" << map.cols << ' ' << map.rows << "\n255\n";
  std::string bytes(map.size(), '\0');
  for (std::size_t i = 0; i < map.size(); ++i) bytes[i] = static_cast<char>(pgm_level(map.values[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace thtd
