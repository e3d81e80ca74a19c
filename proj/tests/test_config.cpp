#include <doctest.h>

#include "eegcap/config.hpp"
#include "helpers.hpp"

using namespace eegcap;

TEST_SUITE("config") {

TEST_CASE("defaults carry the pipeline hyperparameters") {
  RunConfig c;
  CHECK(c.stage1.alpha == 0.5);
  CHECK(c.stage1.batch_size == 16);
  CHECK(c.stage1.epochs == 100);
  CHECK(c.stage1.learning_rate == 1e-4);
  CHECK(c.stage2.epochs == 5);
  CHECK(c.stage2.learning_rate == 2e-5);
  CHECK(c.stage3.epochs == 5);
  CHECK(c.dataset.discard_count == 20);
  CHECK(c.dataset.target_length == 440);
  CHECK(c.dataset.embed_dim == 512);
  CHECK(c.inference.max_new_tokens == 32);
  CHECK(c.inference.greedy);
  CHECK(c.lm.blocks == 4);
  CHECK(c.lm.width == 128);
  CHECK(c.lm.heads == 4);
}

TEST_CASE("unknown keys are rejected at the root and inside sections") {
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"sead": 3})")), Error);
  CHECK_THROWS_AS(
      RunConfig::from_json(nlohmann::json::parse(R"({"stage1": {"aplha": 0.4}})")), Error);
  CHECK_THROWS_AS(
      RunConfig::from_json(nlohmann::json::parse(R"({"dataset": {"nclasses": 4}})")), Error);
}

TEST_CASE("alpha outside [0,1] is rejected") {
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::parse(R"({"stage1": {"alpha": 1.5}})")),
                  Error);
}

TEST_CASE("values round-trip through to_json/from_json and hash stably") {
  RunConfig c;
  c.seed = 1234;
  c.experiment = "roundtrip";
  c.stage1.alpha = 0.25;
  c.lm.width = 64;
  c.encoder.branches = {{8, 5, 1, 2}};
  auto back = RunConfig::from_json(c.to_json());
  CHECK(back.seed == 1234);
  CHECK(back.stage1.alpha == 0.25);
  CHECK(back.lm.width == 64);
  REQUIRE(back.encoder.branches.size() == 1);
  CHECK(back.encoder.branches[0].kernel == 5);
  CHECK(back.config_hash() == c.config_hash());
  c.stage1.alpha = 0.26;
  CHECK(back.config_hash() != c.config_hash());
}

TEST_CASE("config hash ignores the experiment name and output directory") {
  RunConfig a, b;
  b.experiment = "elsewhere";
  b.output_dir = "/some/other/place";
  CHECK(a.config_hash() == b.config_hash());
  b.seed = a.seed + 1;
  CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("config files load from disk with overrides applied in the caller") {
  testutil::TempDir tmp("config_io");
  write_text_file(tmp.path / "c.json",
                  R"({"experiment": "t", "seed": 5, "dataset": {"n_classes": 8}})");
  auto c = RunConfig::load(tmp.path / "c.json");
  CHECK(c.experiment == "t");
  CHECK(c.seed == 5);
  CHECK(c.dataset.n_classes == 8);
  CHECK(c.dataset.per_class == 50);  // untouched default
  write_text_file(tmp.path / "bad.json", "{not json");
  CHECK_THROWS_AS(RunConfig::load(tmp.path / "bad.json"), Error);
}

}  // TEST_SUITE
