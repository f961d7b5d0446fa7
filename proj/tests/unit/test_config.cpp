#include <doctest.h>

#include "mmsev/config.hpp"
#include "mmsev/errors.hpp"
#include "support.hpp"

using namespace mmsev;
using mmsev::testing::TempDir;

TEST_CASE("defaults validate and round-trip through JSON") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const auto back = run_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(cfg.dropout == 0.4);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.epochs == 100);
  CHECK(cfg.early_stop_patience == 10);
  CHECK(cfg.seeds.size() == 5);
}

TEST_CASE("enumeration parsing") {
  CHECK(parse_fusion("xattn") == FusionMode::kCrossAttention);
  CHECK(parse_fusion("cross_attention") == FusionMode::kCrossAttention);
  CHECK(parse_fusion("ae") == FusionMode::kAutoencoder);
  CHECK(parse_modality("visual") == ModalityMode::kVisual);
  CHECK(parse_loss("ce") == LossMode::kCrossEntropy);
  CHECK(parse_oversample("smote") == OversampleMode::kSmote);
  CHECK_THROWS_AS(parse_fusion("concat"), ConfigError);
  CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
  for (auto m : {OversampleMode::kNone, OversampleMode::kRos, OversampleMode::kSmote})
    CHECK(parse_oversample(to_string(m)) == m);
}

TEST_CASE("invalid values are rejected") {
  auto bad = [](const char* key, nlohmann::json v) {
    auto j = to_json(RunConfig{});
    j[key] = v;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  };
  bad("dropout", 1.0);
  bad("dropout", -0.1);
  bad("epochs", 0);
  bad("batch_size", 0);
  bad("fusion", "sum");
  bad("gate_temperature", 0.0);
  bad("learning_rate", 0.0);
  auto j = to_json(RunConfig{});
  j["no_such_key"] = 1;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("partial files keep defaults and resolve paths next to the file") {
  TempDir dir;
  dir.write("run.json", R"({"patients": "data/p.csv", "loss": "ce", "hidden": [8]})");
  const auto cfg = load_run_config(dir / "run.json");
  CHECK(cfg.loss == LossMode::kCrossEntropy);
  CHECK(cfg.hidden == std::vector<std::size_t>{8});
  CHECK(cfg.patients == dir / "data/p.csv");
  CHECK(cfg.d_model == RunConfig{}.d_model);
  save_run_config(dir / "copy.json", cfg);
  CHECK(to_json(load_run_config(dir / "copy.json")) == to_json(cfg));
  dir.write("broken.json", "{");
  CHECK_THROWS(load_run_config(dir / "broken.json"));
}
