#include "dualstream/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dualstream {

using nlohmann::json;

namespace {

// Strict-mode guard: every object must contain only keys we know about.
void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw UsageError("config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw UsageError("config: unknown key '" + where + "." + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

json preprocess_to_json(const PreprocessConfig& p) {
  return json{{"resize_to", p.resize_to},
              {"clahe_clip_limit", p.clahe_clip_limit},
              {"clahe_tiles", p.clahe_tiles},
              {"nlm_h", p.nlm_h},
              {"nlm_template_window", p.nlm_template_window},
              {"nlm_search_window", p.nlm_search_window}};
}

void preprocess_from_json(const json& j, PreprocessConfig& p, const std::string& where) {
  check_keys(j, {"resize_to", "clahe_clip_limit", "clahe_tiles", "nlm_h",
                 "nlm_template_window", "nlm_search_window"}, where);
  read_field(j, "resize_to", p.resize_to, where);
  read_field(j, "clahe_clip_limit", p.clahe_clip_limit, where);
  read_field(j, "clahe_tiles", p.clahe_tiles, where);
  read_field(j, "nlm_h", p.nlm_h, where);
  read_field(j, "nlm_template_window", p.nlm_template_window, where);
  read_field(j, "nlm_search_window", p.nlm_search_window, where);
}

json augment_to_json(const AugmentConfig& a) {
  return json{{"flip_probability", a.flip_probability},
              {"rotation_degrees", a.rotation_degrees},
              {"contrast_alpha", a.contrast_alpha},
              {"brightness_beta", a.brightness_beta},
              {"target_total", a.target_total}};
}

void augment_from_json(const json& j, AugmentConfig& a, const std::string& where) {
  check_keys(j, {"flip_probability", "rotation_degrees", "contrast_alpha", "brightness_beta",
                 "target_total"}, where);
  read_field(j, "flip_probability", a.flip_probability, where);
  read_field(j, "rotation_degrees", a.rotation_degrees, where);
  read_field(j, "contrast_alpha", a.contrast_alpha, where);
  read_field(j, "brightness_beta", a.brightness_beta, where);
  read_field(j, "target_total", a.target_total, where);
}

json model_to_json(const ModelConfig& m) {
  json mobile = json::array();
  for (const auto& b : m.mobile_blocks)
    mobile.push_back(json{{"expansion", b.expansion},
                          {"out_channels", b.out_channels},
                          {"stride", b.stride}});
  json dense = json::array();
  for (const auto& b : m.dense_blocks)
    dense.push_back(json{{"layers", b.layers}, {"growth", b.growth}});
  return json{{"input_channels", m.input_channels},
              {"input_size", m.input_size},
              {"num_classes", m.num_classes},
              {"mobile_stem_channels", m.mobile_stem_channels},
              {"mobile_blocks", mobile},
              {"dense_stem_channels", m.dense_stem_channels},
              {"dense_blocks", dense},
              {"dense_compression", m.dense_compression},
              {"attention_reduction", m.attention_reduction}};
}

void model_from_json(const json& j, ModelConfig& m, const std::string& where) {
  check_keys(j, {"input_channels", "input_size", "num_classes", "mobile_stem_channels",
                 "mobile_blocks", "dense_stem_channels", "dense_blocks", "dense_compression",
                 "attention_reduction"}, where);
  read_field(j, "input_channels", m.input_channels, where);
  read_field(j, "input_size", m.input_size, where);
  read_field(j, "num_classes", m.num_classes, where);
  read_field(j, "mobile_stem_channels", m.mobile_stem_channels, where);
  read_field(j, "dense_stem_channels", m.dense_stem_channels, where);
  read_field(j, "dense_compression", m.dense_compression, where);
  read_field(j, "attention_reduction", m.attention_reduction, where);
  if (j.contains("mobile_blocks")) {
    if (!j.at("mobile_blocks").is_array())
      throw UsageError("config: '" + where + ".mobile_blocks' must be an array");
    m.mobile_blocks.clear();
    int i = 0;
    for (const auto& bj : j.at("mobile_blocks")) {
      const std::string bw = where + ".mobile_blocks[" + std::to_string(i++) + "]";
      check_keys(bj, {"expansion", "out_channels", "stride"}, bw);
      InvertedResidualSpec b;
      read_field(bj, "expansion", b.expansion, bw);
      read_field(bj, "out_channels", b.out_channels, bw);
      read_field(bj, "stride", b.stride, bw);
      m.mobile_blocks.push_back(b);
    }
  }
  if (j.contains("dense_blocks")) {
    if (!j.at("dense_blocks").is_array())
      throw UsageError("config: '" + where + ".dense_blocks' must be an array");
    m.dense_blocks.clear();
    int i = 0;
    for (const auto& bj : j.at("dense_blocks")) {
      const std::string bw = where + ".dense_blocks[" + std::to_string(i++) + "]";
      check_keys(bj, {"layers", "growth"}, bw);
      DenseBlockSpec b;
      read_field(bj, "layers", b.layers, bw);
      read_field(bj, "growth", b.growth, bw);
      m.dense_blocks.push_back(b);
    }
  }
}

json train_to_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"momentum", t.momentum}};
}

void train_from_json(const json& j, TrainConfig& t, const std::string& where) {
  check_keys(j, {"epochs", "batch_size", "learning_rate", "momentum"}, where);
  read_field(j, "epochs", t.epochs, where);
  read_field(j, "batch_size", t.batch_size, where);
  read_field(j, "learning_rate", t.learning_rate, where);
  read_field(j, "momentum", t.momentum, where);
}

json pipeline_to_json(const PipelineConfig& cfg) {
  return json{{"seed", cfg.seed},
              {"preprocess", preprocess_to_json(cfg.preprocess)},
              {"augment", augment_to_json(cfg.augment)},
              {"split", json{{"group_by_source", cfg.group_by_source}, {"folds", cfg.folds}}},
              {"model", model_to_json(cfg.model)},
              {"train", train_to_json(cfg.train)}};
}

}  // namespace

PipelineConfig default_pipeline_config() { return PipelineConfig{}; }

std::string pipeline_config_json(const PipelineConfig& cfg) {
  return pipeline_to_json(cfg).dump(2) + "\n";
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "preprocess", "augment", "split", "model", "train"}, "config");
  PipelineConfig cfg;
  if (j.contains("seed")) {
    // get<uint64_t> would quietly wrap a negative value around.
    if (!j.at("seed").is_number_unsigned())
      throw UsageError("config: 'config.seed' must be a non-negative integer");
    cfg.seed = j.at("seed").get<uint64_t>();
  }
  if (j.contains("preprocess")) preprocess_from_json(j.at("preprocess"), cfg.preprocess, "preprocess");
  if (j.contains("augment")) augment_from_json(j.at("augment"), cfg.augment, "augment");
  if (j.contains("split")) {
    check_keys(j.at("split"), {"group_by_source", "folds"}, "split");
    read_field(j.at("split"), "group_by_source", cfg.group_by_source, "split");
    read_field(j.at("split"), "folds", cfg.folds, "split");
  }
  if (j.contains("model")) model_from_json(j.at("model"), cfg.model, "model");
  if (j.contains("train")) train_from_json(j.at("train"), cfg.train, "train");
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str());
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("config: cannot write '" + path + "'");
  out << pipeline_config_json(cfg);
  if (!out) throw UsageError("config: write to '" + path + "' failed");
}

std::string pipeline_config_hash(const PipelineConfig& cfg) {
  const uint64_t h = fnv1a64(pipeline_to_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string model_config_json(const ModelConfig& cfg) { return model_to_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: invalid JSON: ") + e.what());
  }
  ModelConfig m;
  model_from_json(j, m, "model");
  return m;
}

uint64_t stage_seed(uint64_t master, const std::string& stage) {
  return mix_seed(master, fnv1a64(stage));
}

}  // namespace dualstream
