#include <cstring>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "thtd/io.hpp"

using namespace thtd;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / "thtd_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

ModelConfig tiny_model() {
  auto m = ModelConfig::toy();
  m.encoder.frames = 4;
  m.encoder.height = 32;
  m.encoder.width = 32;
  m.encoder.embed_dim = 4;
  m.encoder.heads = {1, 1, 1, 1};
  m.encoder.depths = {1, 1, 1, 1};
  return m;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_CASE("bundle round trip is bit-exact") {
  auto dir = scratch("bundle");
  Rng rng(1);
  std::vector<double> d(60);
  for (auto& x : d) x = rng.normal() * 1e10;
  d[0] = -0.0;
  d[1] = std::numeric_limits<double>::denorm_min();
  std::vector<float> f(7);
  for (auto& x : f) x = static_cast<float>(rng.normal());
  Bundle b{{BundleTensor::from("a", {3, 4, 5}, d), BundleTensor::from("b", {7}, f),
            BundleTensor::from("empty", {0, 3}, std::vector<float>{})},
           {{"note", "x"}}};
  save_bundle(dir / "t.json", b);
  auto r = load_bundle(dir / "t.json");
  REQUIRE(r.tensors.size() == 3);
  CHECK(r.at("a").shape == Shape{3, 4, 5});
  CHECK(r.at("a").dtype() == "f64");
  CHECK(bit_equal(std::get<1>(r.at("a").data), d));
  CHECK(bit_equal(std::get<0>(r.at("b").data), f));
  CHECK(r.meta["note"] == "x");
  CHECK(fs::file_size(dir / "t.bin") == 60 * 8 + 7 * 4);
  CHECK_THROWS_AS(r.at("zzz"), FormatError);
}

TEST_CASE("malformed bundles are rejected with the file name") {
  auto dir = scratch("bad_bundle");
  Bundle b{{BundleTensor::from("a", {4}, std::vector<float>{1, 2, 3, 4})}, {}};
  save_bundle(dir / "t.json", b);
  auto manifest = slurp(dir / "t.json");

  // truncated payload
  fs::resize_file(dir / "t.bin", 12);
  auto msg = error_of([&] { load_bundle(dir / "t.json"); });
  CHECK(msg.find("t.bin") != std::string::npos);
  CHECK(msg.find("16") != std::string::npos);

  save_bundle(dir / "t.json", b);
  auto j = nlohmann::json::parse(manifest);
  j["tensors"][0]["shape"] = {5};
  std::ofstream(dir / "t.json") << j.dump();
  msg = error_of([&] { load_bundle(dir / "t.json"); });
  CHECK(msg.find("tensors[0]") != std::string::npos);

  std::ofstream(dir / "t.json") << "{ \"format\": ";
  msg = error_of([&] { load_bundle(dir / "t.json"); });
  CHECK(msg.find("t.json") != std::string::npos);
  CHECK_THROWS_AS(load_bundle(dir / "t.json"), FormatError);

  j = nlohmann::json::parse(manifest);
  j["byte_order"] = "big";
  std::ofstream(dir / "t.json") << j.dump();
  CHECK_THROWS_AS(load_bundle(dir / "t.json"), FormatError);
}

TEST_CASE("checkpoint round trip and config mismatch") {
  auto dir = scratch("ckpt");
  ThtdNet<float> net(tiny_model(), 11);
  TrainState<float> st;
  st.adam = AdamState<float>::zeros_like(net.parameters(), {});
  st.adam.step = 7;
  st.adam.m[0][0] = 0.25f;
  st.adam.v[3][1] = 1e-9f;
  st.iteration = 7;
  st.best_val = 0.5;
  st.best_iteration = 6;
  st.evals_since_best = 1;
  save_checkpoint(dir / "c.json", net, &st);

  ThtdNet<float> other(tiny_model(), 99);
  auto loaded = load_checkpoint(dir / "c.json", other);
  auto pa = net.parameters(), pb = other.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bit_equal(pa[i].storage(), pb[i].storage()));
  REQUIRE(loaded.has_value());
  CHECK(loaded->iteration == 7);
  CHECK(loaded->best_val == 0.5);
  CHECK(loaded->best_iteration == 6);
  CHECK(loaded->evals_since_best == 1);
  CHECK(loaded->adam.step == 7);
  for (std::size_t i = 0; i < st.adam.m.size(); ++i) {
    CHECK(bit_equal(loaded->adam.m[i], st.adam.m[i]));
    CHECK(bit_equal(loaded->adam.v[i], st.adam.v[i]));
  }
  CHECK(checkpoint_config(dir / "c.json") == tiny_model());

  save_checkpoint(dir / "plain.json", net);
  CHECK_FALSE(load_checkpoint(dir / "plain.json", other).has_value());

  auto wider = tiny_model();
  wider.encoder.embed_dim = 8;
  ThtdNet<float> w(wider, 0);
  CHECK_THROWS_AS(load_checkpoint(dir / "c.json", w), ConfigError);
  auto half = tiny_model();
  half.variant = DecoderVariant::half_temporal;
  ThtdNet<float> h(half, 0);
  CHECK_THROWS_AS(load_checkpoint(dir / "c.json", h), ConfigError);
}

TEST_CASE("config json") {
  auto dir = scratch("config");
  auto m = ModelConfig::toy();
  m.variant = DecoderVariant::mobilenet;
  auto t = TrainConfig::toy();
  t.lr = 5e-4;
  t.seed = 9;
  auto back = config_from_json(config_to_json(m, t));
  CHECK(back.model == m);
  CHECK(back.train.lr == 5e-4);
  CHECK(back.train.seed == 9);

  auto paper = config_from_json(nlohmann::json{{"profile", "paper"}});
  CHECK(paper.model == ModelConfig::paper());
  CHECK(paper.train.lr == 1e-5);
  auto partial = config_from_json(nlohmann::json{{"frames", 4}, {"variant", "double"}});
  CHECK(partial.model.encoder.frames == 4);
  CHECK(partial.train.clip_length == 4);
  CHECK(partial.model.variant == DecoderVariant::double_layers);

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"frame", 4}}), FormatError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"frames", "four"}}), FormatError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"variant", "quad"}}), ConfigError);

  std::ofstream(dir / "c.json") << R"({"profile": "toy", "lr": 0.002})";
  CHECK(load_config(dir / "c.json").train.lr == 0.002);
}

TEST_CASE("fixation csv") {
  auto dir = scratch("fix");
  std::map<std::string, std::array<std::int64_t, 3>> dims{{"a", {3, 4, 5}}, {"b", {2, 4, 5}}};
  std::ofstream(dir / "ok.csv") << "video,frame,row,col\na,0,1,2\na,2,3,4\nb,1,0,0\n\n";
  auto f = load_fixations(dir / "ok.csv", dims);
  CHECK(f["a"].size() == 3);
  CHECK(f["a"][0].points == std::vector<Fixation>{{1, 2}});
  CHECK(f["a"][1].points.empty());
  CHECK(f["b"][1].points == std::vector<Fixation>{{0, 0}});

  std::ofstream(dir / "bad.csv") << "video,frame,row,col\na,0,1,2\na,1,3,5\n";
  auto msg = error_of([&] { load_fixations(dir / "bad.csv", dims); });
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("col") != std::string::npos);
  CHECK(msg.find("bad.csv") != std::string::npos);

  std::ofstream(dir / "hdr.csv") << "v,f,r,c\n";
  CHECK(error_of([&] { load_fixations(dir / "hdr.csv", dims); }).find("line 1") != std::string::npos);
  std::ofstream(dir / "num.csv") << "video,frame,row,col\na,x,1,2\n";
  CHECK(error_of([&] { load_fixations(dir / "num.csv", dims); }).find("line 2") != std::string::npos);
}

TEST_CASE("dataset round trip") {
  auto dir = scratch("dataset");
  SyntheticSpec spec;
  spec.videos = 2;
  spec.frames = 5;
  spec.rows = 32;
  spec.cols = 32;
  auto d = generate_synthetic(spec);
  save_dataset(dir, d);
  auto r = load_dataset(dir);
  REQUIRE(r.videos.size() == 2);
  for (std::size_t v = 0; v < 2; ++v) {
    CHECK(r.videos[v].name == d.videos[v].name);
    CHECK(bit_equal(r.videos[v].pixels, d.videos[v].pixels));
    CHECK(bit_equal(r.videos[v].density, d.videos[v].density));
    for (std::size_t f = 0; f < 5; ++f) CHECK(r.videos[v].fixations[f].points == d.videos[v].fixations[f].points);
  }
  // same seed twice gives byte-identical files
  auto dir2 = scratch("dataset2");
  save_dataset(dir2, generate_synthetic(spec));
  for (const auto& e : fs::directory_iterator(dir))
    CHECK(slurp(e.path()) == slurp(dir2 / e.path().filename()));
}

TEST_CASE("reports") {
  auto dir = scratch("reports");
  std::vector<TrainLogRow> rows{{1, -0.5, 1.25, 0.75, std::nullopt}, {2, -0.1 / 3, 0.3, 0.3 - 0.1 / 3, 0.125}};
  write_training_log(dir / "log.csv", rows);
  CHECK(slurp(dir / "log.csv").rfind("iteration,cc_term,kl_term,total,val_total\n", 0) == 0);
  auto back = read_training_log(dir / "log.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].cc_term == rows[1].cc_term);
  CHECK(back[1].total == rows[1].total);
  CHECK_FALSE(back[0].val_total.has_value());
  CHECK(*back[1].val_total == 0.125);

  MetricsReport rep;
  rep.video = "v";
  rep.frames.push_back({0, 0.9, std::nullopt, 2.0, 0.5, 0.4});
  rep.aggregate();
  write_metrics_csv(dir / "m.csv", {rep});
  auto csv = slurp(dir / "m.csv");
  CHECK(csv.rfind("video,frame,auc_j,s_auc,nss,cc,sim\n", 0) == 0);
  CHECK(csv.find("v,0,0.9") != std::string::npos);
  write_metrics_json(dir / "m.json", {rep});
  auto j = nlohmann::json::parse(slurp(dir / "m.json"));
  CHECK(j["videos"][0]["frames"][0]["cc"] == 0.5);

  write_ablation_csv(dir / "a.csv", {AblationRow{"baseline", 10, 0.5, 1.0, 0.3, 0.9}});
  CHECK(slurp(dir / "a.csv").rfind("variant,params,cc,nss,sim,auc_j\n", 0) == 0);
}

TEST_CASE("pgm export") {
  auto dir = scratch("pgm");
  CHECK(pgm_level(0.5) == 128);
  CHECK(pgm_level(0.0) == 0);
  CHECK(pgm_level(1.0) == 255);
  CHECK(pgm_level(-3.0) == 0);
  CHECK(pgm_level(7.0) == 255);
  export_pgm(dir / "h.pgm", Map2D(2, 3, std::vector<double>(6, 0.5)));
  auto s = slurp(dir / "h.pgm");
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(s.size() == header.size() + 6);
  CHECK(s.substr(0, header.size()) == header);
  for (std::size_t i = header.size(); i < s.size(); ++i) CHECK(static_cast<unsigned char>(s[i]) == 128);
}
