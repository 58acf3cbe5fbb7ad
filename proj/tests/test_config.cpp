#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "dualstream/config.hpp"

using namespace dualstream;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dsfuse_cfg_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("defaults are the documented pipeline values") {
  PipelineConfig c = default_pipeline_config();
  CHECK(c.seed == 0);
  CHECK(c.preprocess.resize_to == 224);
  CHECK(c.preprocess.clahe_clip_limit == 2.0);
  CHECK(c.preprocess.clahe_tiles == 8);
  CHECK(c.preprocess.nlm_h == 10.0);
  CHECK(c.preprocess.nlm_template_window == 7);
  CHECK(c.preprocess.nlm_search_window == 21);
  CHECK(c.augment.flip_probability == 0.5);
  CHECK(c.augment.rotation_degrees == 10.0);
  CHECK(c.augment.contrast_alpha == 1.2);
  CHECK(c.augment.brightness_beta == 15.0);
  CHECK(c.augment.target_total == 6020);
  CHECK(c.group_by_source == false);
  CHECK(c.folds == 5);
  CHECK(c.train.epochs == 29);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.learning_rate == 0.05);
  CHECK(c.train.momentum == 0.9);
  CHECK(c.model.input_size == 224);
  CHECK(c.model.num_classes == 4);
  CHECK(c.model.mobile_stem_channels == 8);
  REQUIRE(c.model.mobile_blocks.size() == 3);
  CHECK(c.model.mobile_blocks[0].expansion == 4);
  CHECK(c.model.mobile_blocks[1].stride == 2);
  CHECK(c.model.mobile_blocks[2].out_channels == 16);
  REQUIRE(c.model.dense_blocks.size() == 2);
  CHECK(c.model.dense_blocks[0].layers == 2);
  CHECK(c.model.dense_blocks[0].growth == 12);
  CHECK(c.model.dense_compression == 0.5);
  CHECK(c.model.attention_reduction == 4);
}

TEST_CASE("config text round-trips exactly") {
  PipelineConfig c = default_pipeline_config();
  c.seed = 42;
  c.train.epochs = 7;
  c.model.mobile_blocks[1].out_channels = 24;
  const std::string text = pipeline_config_json(c);
  PipelineConfig back = parse_pipeline_config(text);
  CHECK(pipeline_config_json(back) == text);
  CHECK(back.seed == 42);
  CHECK(back.train.epochs == 7);
  CHECK(back.model.mobile_blocks[1].out_channels == 24);
}

TEST_CASE("unknown keys are rejected, not ignored") {
  CHECK_THROWS_AS(parse_pipeline_config(R"({"sede": 1})"), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"train": {"epoch": 5}})"), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"preprocess": {"resize": 128}})"), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"model": {"mobile_blocks": [{"strides": 2}]}})"),
                  UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"split": {"k": 5}})"), UsageError);
}

TEST_CASE("bad values and bad JSON fail loudly") {
  CHECK_THROWS_AS(parse_pipeline_config("{nope"), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"train": {"epochs": "five"}})"), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"({"seed": -3})"), UsageError);
  CHECK_THROWS_AS(parse_pipeline_config(R"([1,2,3])"), UsageError);
}

TEST_CASE("missing sections keep their defaults") {
  PipelineConfig c = parse_pipeline_config(R"({"train": {"epochs": 3}})");
  CHECK(c.train.epochs == 3);
  CHECK(c.train.batch_size == 16);
  CHECK(c.preprocess.resize_to == 224);
  CHECK(c.model.num_classes == 4);
}

TEST_CASE("config hash tracks content") {
  PipelineConfig a = default_pipeline_config();
  PipelineConfig b = default_pipeline_config();
  CHECK(pipeline_config_hash(a) == pipeline_config_hash(b));
  CHECK(pipeline_config_hash(a).size() == 16);
  b.train.learning_rate = 0.01;
  CHECK(pipeline_config_hash(a) != pipeline_config_hash(b));
  b = a;
  b.seed = 1;
  CHECK(pipeline_config_hash(a) != pipeline_config_hash(b));
}

TEST_CASE("model config serialization preserves block structure") {
  ModelConfig m;
  m.input_size = 96;
  m.mobile_blocks = {{2, 5, 1}, {6, 9, 2}};
  m.dense_blocks = {{3, 7}};
  m.dense_compression = 0.75;
  m.attention_reduction = 1;
  ModelConfig back = model_config_from_json(model_config_json(m));
  CHECK(back.input_size == 96);
  REQUIRE(back.mobile_blocks.size() == 2);
  CHECK(back.mobile_blocks[0].expansion == 2);
  CHECK(back.mobile_blocks[1].out_channels == 9);
  CHECK(back.mobile_blocks[1].stride == 2);
  REQUIRE(back.dense_blocks.size() == 1);
  CHECK(back.dense_blocks[0].layers == 3);
  CHECK(back.dense_blocks[0].growth == 7);
  CHECK(back.dense_compression == 0.75);
}

TEST_CASE("config files load and save") {
  auto path = temp_file("cfg.json");
  PipelineConfig c = default_pipeline_config();
  c.seed = 99;
  save_pipeline_config(c, path.string());
  PipelineConfig back = load_pipeline_config(path.string());
  CHECK(back.seed == 99);
  CHECK(pipeline_config_hash(back) == pipeline_config_hash(c));
  CHECK_THROWS_AS(load_pipeline_config((path.parent_path() / "absent.json").string()),
                  UsageError);
  fs::remove_all(path.parent_path());
}

TEST_CASE("stage seeds separate the pipeline stages") {
  const uint64_t master = 1234;
  CHECK(stage_seed(master, "augment") == stage_seed(master, "augment"));
  CHECK(stage_seed(master, "augment") != stage_seed(master, "train"));
  CHECK(stage_seed(master, "train") != stage_seed(master, "model-init"));
  CHECK(stage_seed(1, "train") != stage_seed(2, "train"));
}
