#include <doctest.h>

#include <filesystem>

#include "ipath/errors.hpp"
#include "ipath/experiment.hpp"

using namespace ipath;
namespace fs = std::filesystem;

TEST_CASE("config defaults and strict parsing") {
  const RunConfig d = RunConfig::from_json(nlohmann::json::object());
  CHECK(d.dataset.size == 40000);
  CHECK(d.dataset.m == 9);
  CHECK(d.dataset.noise == NoiseConfig{0.05, 0.2, 0.15, 1.0});
  CHECK(d.schedule.epochs == std::array<int, 3>{30, 30, 60});
  CHECK(d.model.latent_dim == 64);

  try {
    RunConfig::from_json(nlohmann::json::parse(R"({"dataset": {"noise": {"sigma_q": 1}}})"));
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dataset.noise.sigma_q") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"sedes": {}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"dataset": {"m": "nine"}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"model": {"backbone": "cnn"}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"model": {"heads": 5}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"metrics": {"fewshot_anchors": 0}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"ablation": {"disable_f_decoder": true}})")),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"dataset": {"noise": {"lambda": -1}}})")),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config round trip and hashes") {
  RunConfig c = RunConfig::from_json(nlohmann::json::parse(
      R"({"dataset": {"size": 4000, "test_lambda": 2.5}, "schedule": {"epochs": [10, 10, 20]},
          "model": {"backbone": "recurrent"}, "seeds": {"model": 9}})"));
  const RunConfig back = RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json().dump() == c.to_json().dump());
  CHECK(back.hash() == c.hash());
  CHECK(*back.dataset.test_lambda == 2.5);

  RunConfig other = c;
  other.seeds.model = 10;
  CHECK(other.hash() != c.hash());
  CHECK(other.data_hash() == c.data_hash());
  other.seeds.data = 10;
  CHECK(other.data_hash() != c.data_hash());

  c.apply_seed_override("eval=42");
  CHECK(c.seeds.eval == 42);
  CHECK_THROWS_AS(c.apply_seed_override("weather=1"), ConfigError);
  CHECK_THROWS_AS(c.apply_seed_override("data=abc"), ConfigError);
  CHECK_THROWS_AS(c.apply_seed_override("data"), ConfigError);

  const ModelConfig m = resolved_model(c);
  CHECK(m.trace_length == 9);
  CHECK(m.backbone == Backbone::recurrent);
}

TEST_CASE("sweep cells") {
  RunConfig base;
  base.output_dir = "out";
  const auto noise = sweep_cells(base, SweepKind::noise);
  REQUIRE(noise.size() == 6);
  CHECK(noise[0].config.dataset.noise.lambda == 0.0);
  CHECK(noise[5].config.dataset.noise.lambda == 2.5);

  const auto grid = sweep_cells(base, SweepKind::size_length);
  CHECK(grid.size() == 12);
  CHECK(grid.front().name == "m5_n4K");
  CHECK(grid.back().name == "m11_n40K");
  CHECK(grid.back().config.walks.length >= 11);

  const auto abl = sweep_cells(base, SweepKind::ablation);
  REQUIRE(abl.size() == 6);
  for (const SweepCell& c : abl) {
    CHECK(c.config.data_hash() == abl[0].config.data_hash());
    CHECK_NOTHROW(c.config.validate());
  }
  CHECK(abl[2].config.model.backbone == Backbone::feedforward);
  CHECK(abl[4].config.ablation.disable_f_decoder);
  CHECK(abl[5].config.model.d_codec == DCodecKind::nonlinear);
  CHECK(fs::path(abl[1].config.output_dir) == fs::path("out") / "recurrent");

  CHECK(filter_cells(abl, "full,nonlinear").size() == 2);
  CHECK(filter_cells(abl, "").size() == 6);
  CHECK_THROWS_AS(filter_cells(abl, "nothing"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_kind("grid"), ConfigError);

  MetricsReport r;
  r.de = {MetricValue{1.0, 1}, MetricValue{2.0, 2}, MetricValue{3.0, 3}};
  r.lcdr = {MetricValue{0.9, 1}, MetricValue{0.8, 2}, MetricValue{0.7, 3}};
  const std::string csv = sweep_csv(abl, {&r, nullptr, nullptr, nullptr, nullptr, nullptr});
  CHECK(csv.find("full,full,1,2,3,0.9,0.8,0.7,ok") != std::string::npos);
  CHECK(csv.find("recurrent,recurrent,,,,,,,missing") != std::string::npos);
}

TEST_CASE("report formatting is shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  for (double v : {1.0 / 3.0, 2.5e-17, -123456.789, 6.02214076e23}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("run manifest verification") {
  const fs::path dir = fs::temp_directory_path() / "ipath_test_manifest";
  fs::remove_all(dir);
  write_text(dir / "a.txt", "hello\n");
  RunManifest m;
  m.config_hash = "c";
  m.dataset_hash = "d";
  m.add(dir, "a.txt");
  m.save(dir);
  const RunManifest back = RunManifest::load(dir);
  CHECK(back.artifacts == m.artifacts);
  CHECK_FALSE(back.code_version.empty());
  CHECK(back.verify(dir));
  write_text(dir / "a.txt", "changed\n");
  CHECK_FALSE(back.verify(dir));
  fs::remove(dir / "a.txt");
  CHECK_FALSE(back.verify(dir));
  write_text(dir / kManifestFile, "{");
  CHECK_THROWS_AS(RunManifest::load(dir), IntegrityError);
  fs::remove_all(dir);
}
