#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypergeo/errors.hpp"
#include "hypergeo/io.hpp"
#include "hypergeo/version.hpp"

using namespace hypergeo;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hypergeo_io_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void dump(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump();
}

trainer::SyntheticDataset small_dataset(std::uint64_t seed = 7) {
  trainer::DatasetConfig cfg;
  cfg.depth = 2;
  cfg.branching = 2;
  cfg.dim = 5;
  cfg.per_class = 4;
  cfg.noise_scale = 0.05;
  cfg.kappa = 0.8;
  cfg.seed = seed;
  return trainer::generate_tree_dataset(cfg);
}

trainer::TrainConfig small_train() {
  trainer::TrainConfig cfg;
  cfg.ways = 2;
  cfg.shots = 2;
  cfg.queries = 3;
  cfg.rank = 2;
  cfg.steps = 4;
  cfg.seed = 11;
  return cfg;
}

ghdm::GhdmConfig gen_config(const trainer::TrainConfig& t, int dim) {
  ghdm::GhdmConfig g;
  g.dim = dim;
  g.rank = t.rank;
  g.hidden = t.hidden;
  g.c_min = t.c_min;
  g.c_max = t.c_max;
  g.residual_enabled = t.residual_enabled;
  return g;
}

}  // namespace

TEST_CASE("dataset save/load round-trips every field exactly") {
  const auto ds = small_dataset();
  const std::string path = temp_path("ds_roundtrip.json");
  io::save_dataset(path, ds);
  const auto back = io::load_dataset(path);

  CHECK(back.config.depth == ds.config.depth);
  CHECK(back.config.branching == ds.config.branching);
  CHECK(back.config.classes == ds.config.classes);
  CHECK(back.config.dim == ds.config.dim);
  CHECK(back.config.per_class == ds.config.per_class);
  CHECK(back.config.noise_scale == ds.config.noise_scale);
  CHECK(back.config.kappa == ds.config.kappa);
  CHECK(back.config.seed == ds.config.seed);
  CHECK(back.labels == ds.labels);
  CHECK(back.tree == ds.tree);
  REQUIRE(back.points.size() == ds.points.size());
  for (std::size_t i = 0; i < ds.points.size(); ++i) {
    CHECK(back.points[i].coords() == ds.points[i].coords());
  }
}

TEST_CASE("dataset re-save is byte-identical") {
  const auto ds = small_dataset(13);
  const std::string p1 = temp_path("ds_a.json");
  const std::string p2 = temp_path("ds_b.json");
  io::save_dataset(p1, ds);
  io::save_dataset(p2, io::load_dataset(p1));
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("dataset file layout is frozen") {
  const auto ds = small_dataset();
  const std::string path = temp_path("ds_layout.json");
  io::save_dataset(path, ds);
  const json j = json::parse(slurp(path));

  for (const char* key : {"dim", "kappa", "points", "labels", "tree", "config"}) {
    CHECK_MESSAGE(j.contains(key), "missing key " << key);
  }
  CHECK(j["dim"].get<int>() == ds.config.dim);
  CHECK(j["kappa"].get<double>() == ds.config.kappa);
  CHECK(j["points"].size() == ds.points.size());
  CHECK(j["points"][0].size() == static_cast<std::size_t>(ds.config.dim));
  for (const char* key : {"depth", "branching", "classes", "dim", "per_class",
                          "noise_scale", "kappa", "seed"}) {
    CHECK_MESSAGE(j["config"].contains(key), "missing config key " << key);
  }
}

TEST_CASE("dataset loader rejects malformed files") {
  const auto ds = small_dataset();
  const std::string path = temp_path("ds_ok.json");
  io::save_dataset(path, ds);
  const json good = json::parse(slurp(path));
  const std::string bad = temp_path("ds_bad.json");

  SUBCASE("missing file") {
    CHECK_THROWS_AS(io::load_dataset(temp_path("absent.json")), ValidationError);
  }
  SUBCASE("not JSON") {
    std::ofstream(bad, std::ios::binary) << "not json";
    CHECK_THROWS_AS(io::load_dataset(bad), ValidationError);
  }
  SUBCASE("missing field") {
    json j = good;
    j.erase("labels");
    dump(bad, j);
    CHECK_THROWS_AS(io::load_dataset(bad), ValidationError);
  }
  SUBCASE("label out of range") {
    json j = good;
    j["labels"][0] = 999;
    dump(bad, j);
    CHECK_THROWS_AS(io::load_dataset(bad), ValidationError);
  }
  SUBCASE("point row width") {
    json j = good;
    j["points"][0].push_back(0.0);
    dump(bad, j);
    CHECK_THROWS_AS(io::load_dataset(bad), ValidationError);
  }
  SUBCASE("tree parent out of order") {
    json j = good;
    j["tree"][1] = 5;
    dump(bad, j);
    CHECK_THROWS_AS(io::load_dataset(bad), ValidationError);
  }
  SUBCASE("point outside the ball") {
    json j = good;
    for (auto& v : j["points"][0]) v = 100.0;
    dump(bad, j);
    CHECK_THROWS_AS(io::load_dataset(bad), ValidationError);
  }
}

TEST_CASE("checkpoint save/load restores parameters and config") {
  const auto train = small_train();
  ghdm::GhdmConfig gcfg = gen_config(train, 8);
  const auto params = ghdm::GeneratorParams::random_init(gcfg, 3);
  const std::string path = temp_path("ckpt.json");
  io::save_checkpoint(path, params, train);

  const io::Checkpoint back = io::load_checkpoint(path);
  CHECK(back.train.ways == train.ways);
  CHECK(back.train.shots == train.shots);
  CHECK(back.train.queries == train.queries);
  CHECK(back.train.threshold == train.threshold);
  CHECK(back.train.rank == train.rank);
  CHECK(back.train.hidden == train.hidden);
  CHECK(back.train.c_min == train.c_min);
  CHECK(back.train.c_max == train.c_max);
  CHECK(back.train.lr == train.lr);
  CHECK(back.train.momentum == train.momentum);
  CHECK(back.train.steps == train.steps);
  CHECK(back.train.loss_kind == train.loss_kind);
  CHECK(back.train.margin == train.margin);
  CHECK(back.train.residual_enabled == train.residual_enabled);
  CHECK(back.train.seed == train.seed);
  CHECK(back.params.config().dim == gcfg.dim);
  CHECK(back.params.config().base_kappa == gcfg.base_kappa);

  auto it = back.params.store().begin();
  for (const diff::Param& p : params.store()) {
    REQUIRE(it != back.params.store().end());
    CHECK(it->name == p.name);
    CHECK(it->shape == p.shape);
    CHECK(it->value == p.value);
    ++it;
  }
  CHECK(it == back.params.store().end());
}

TEST_CASE("checkpoint re-save is byte-identical") {
  const auto train = small_train();
  const auto params =
      ghdm::GeneratorParams::random_init(gen_config(train, 8), 5);
  const std::string p1 = temp_path("ckpt_a.json");
  const std::string p2 = temp_path("ckpt_b.json");
  io::save_checkpoint(p1, params, train);
  const auto back = io::load_checkpoint(p1);
  io::save_checkpoint(p2, back.params, back.train);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("checkpoint file layout is frozen") {
  const auto train = small_train();
  const auto params =
      ghdm::GeneratorParams::random_init(gen_config(train, 8), 5);
  const std::string path = temp_path("ckpt_layout.json");
  io::save_checkpoint(path, params, train);
  const json j = json::parse(slurp(path));

  CHECK(j["format_version"].get<int>() == 1);
  for (const char* key :
       {"ways", "shots", "queries", "threshold", "rank", "hidden", "c_min",
        "c_max", "lr", "momentum", "steps", "loss", "margin", "residual",
        "seed", "dim", "base_kappa"}) {
    CHECK_MESSAGE(j["config"].contains(key), "missing config key " << key);
  }
  CHECK(j["config"]["loss"].get<std::string>() == "cross_entropy");
  CHECK(j["config"]["residual"].is_boolean());
  REQUIRE(j["params"].is_object());
  CHECK(j["params"].size() == params.store().size());
  for (const diff::Param& p : params.store()) {
    REQUIRE_MESSAGE(j["params"].contains(p.name), "missing param " << p.name);
    CHECK(j["params"][p.name]["shape"].get<std::vector<int>>() == p.shape);
    CHECK(j["params"][p.name]["data"].size() == p.value.size());
  }
}

TEST_CASE("checkpoint loader rejects incompatible files") {
  const auto train = small_train();
  const auto params =
      ghdm::GeneratorParams::random_init(gen_config(train, 8), 9);
  const std::string path = temp_path("ckpt_ok.json");
  io::save_checkpoint(path, params, train);
  const json good = json::parse(slurp(path));
  const std::string bad = temp_path("ckpt_bad.json");

  auto expect_versioned_format = [&](const json& j) {
    dump(bad, j);
    CHECK_THROWS_WITH_AS(io::load_checkpoint(bad),
                         doctest::Contains("versioned-format"), ValidationError);
  };

  SUBCASE("unsupported format_version") {
    json j = good;
    j["format_version"] = 2;
    expect_versioned_format(j);
  }
  SUBCASE("missing format_version") {
    json j = good;
    j.erase("format_version");
    expect_versioned_format(j);
  }
  SUBCASE("missing parameter") {
    json j = good;
    j["params"].erase("f_a_w2");
    expect_versioned_format(j);
  }
  SUBCASE("unexpected extra parameter") {
    json j = good;
    j["params"]["f_c_w1"] = j["params"]["f_1_b"];
    expect_versioned_format(j);
  }
  SUBCASE("shape disagrees with config") {
    json j = good;
    j["params"]["f_1_b"]["shape"] = {4};
    expect_versioned_format(j);
  }
  SUBCASE("data length disagrees with shape") {
    json j = good;
    j["params"]["f_1_b"]["data"].push_back(0.0);
    expect_versioned_format(j);
  }
  SUBCASE("non-finite parameter value") {
    json j = good;
    j["params"]["f_1_b"]["data"][0] = "bogus";
    dump(bad, j);
    CHECK_THROWS_AS(io::load_checkpoint(bad), ValidationError);
  }
  SUBCASE("unknown config key") {
    json j = good;
    j["config"]["learning_rate"] = 0.1;
    dump(bad, j);
    CHECK_THROWS_AS(io::load_checkpoint(bad), ValidationError);
  }
  SUBCASE("invalid config value") {
    json j = good;
    j["config"]["ways"] = 0;
    dump(bad, j);
    CHECK_THROWS_AS(io::load_checkpoint(bad), ValidationError);
  }
}

TEST_CASE("train config text applies onto a base config") {
  trainer::TrainConfig base;
  const auto cfg = io::parse_train_config(
      R"({"ways": 3, "lr": 0.01, "loss": "contrastive", "seed": 42})", base);
  CHECK(cfg.ways == 3);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.loss_kind == trainer::LossKind::kContrastive);
  CHECK(cfg.seed == 42);
  CHECK(cfg.shots == base.shots);
  CHECK(cfg.threshold == base.threshold);

  CHECK_THROWS_AS(io::parse_train_config(R"({"way": 3})"), ValidationError);
  CHECK_THROWS_AS(io::parse_train_config(R"({"loss": "hinge"})"),
                  ValidationError);
  CHECK_THROWS_AS(io::parse_train_config(R"([1, 2])"), ValidationError);
  CHECK_THROWS_AS(io::parse_train_config("{"), ValidationError);
  CHECK_THROWS_AS(io::parse_train_config(R"({"ways": "five"})"),
                  ValidationError);
}

TEST_CASE("config JSON snapshots parse back with the same keys") {
  const auto train = small_train();
  const json jt = json::parse(io::train_config_json(train));
  CHECK(jt["ways"].get<int>() == train.ways);
  CHECK_FALSE(jt.contains("dim"));
  const json jt2 = json::parse(io::train_config_json(train, 16, 0.5));
  CHECK(jt2["dim"].get<int>() == 16);
  CHECK(jt2["base_kappa"].get<double>() == 0.5);

  trainer::DatasetConfig dcfg;
  const json jd = json::parse(io::dataset_config_json(dcfg));
  CHECK(jd["depth"].get<int>() == dcfg.depth);
  CHECK(jd["noise_scale"].get<double>() == dcfg.noise_scale);

  const auto parsed = io::parse_train_config(io::train_config_json(train));
  CHECK(parsed.ways == train.ways);
  CHECK(parsed.seed == train.seed);
  CHECK(parsed.loss_kind == train.loss_kind);
}

TEST_CASE("doubles format to shortest lossless decimals") {
  CHECK(io::format_double(0.0) == "0.0");
  CHECK(io::format_double(1.0) == "1.0");
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(-2.5) == "-2.5");
  for (double v : {1.0 / 3.0, 1e-15, 123456.789, 0.96, 6.626e-34}) {
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK_THROWS_AS(io::format_double(std::nan("")), ValidationError);
}

TEST_CASE("CSV output quotes fields and uses CRLF rows") {
  const std::string path = temp_path("table.csv");
  io::write_csv(path, {"a", "b"},
                {{"1", "x,y"}, {"q\"t", "line\nbreak"}, {"plain", ""}});
  CHECK(slurp(path) ==
        "a,b\r\n"
        "1,\"x,y\"\r\n"
        "\"q\"\"t\",\"line\nbreak\"\r\n"
        "plain,\r\n");
  CHECK_THROWS_AS(io::write_csv(path, {"a", "b"}, {{"only-one"}}),
                  ValidationError);
  CHECK_THROWS_AS(io::write_csv(path, {}, {}), ValidationError);
}

TEST_CASE("run manifests carry command, config, seed, and timings") {
  const std::string out = temp_path("metrics.csv");
  const std::string path = io::manifest_path_for(out);
  CHECK(path == out + ".manifest.json");

  io::RunManifest m;
  m.command = "train";
  m.config_json = R"({"steps": 4})";
  m.seed = 99;
  m.phase_seconds = {{"train", 1.25}, {"load", 0.5}};
  io::write_manifest(path, m);

  const json j = json::parse(slurp(path));
  CHECK(j["command"].get<std::string>() == "train");
  CHECK(j["config"]["steps"].get<int>() == 4);
  CHECK(j["seed"].get<std::uint64_t>() == 99);
  CHECK(j["version"].get<std::string>() == kVersion);
  CHECK(j["timings"]["train"].get<double>() == 1.25);
  CHECK(j["timings"]["load"].get<double>() == 0.5);
}
