#pragma once

// Pipeline configuration: one JSON file drives preprocessing, augmentation,
// splitting, the model, and training. Parsing is strict: unknown keys are
// rejected so a typo cannot silently fall back to a default.

#include <cstdint>
#include <string>

#include "dualstream/image.hpp"
#include "dualstream/model.hpp"

namespace dualstream {

struct PipelineConfig {
  uint64_t seed = 0;
  PreprocessConfig preprocess;
  AugmentConfig augment;   // its seed is derived from the master seed at use
  bool group_by_source = false;
  int folds = 5;
  ModelConfig model;       // its seed is likewise derived, never stored
  TrainConfig train;
};

PipelineConfig default_pipeline_config();

// Canonical JSON (sorted keys, 2-space indent, trailing newline).
std::string pipeline_config_json(const PipelineConfig& cfg);

// Strict parse of the same shape; missing keys keep defaults, unknown keys
// throw UsageError naming the offending path.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);

// FNV-1a over the canonical JSON, as 16 hex digits. Stamped into every
// artifact so outputs can be traced to the exact configuration.
std::string pipeline_config_hash(const PipelineConfig& cfg);

// Model-config (de)serialization reused by checkpoints.
std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

// Derived per-stage seeds, so each stage draws from an independent stream.
uint64_t stage_seed(uint64_t master, const std::string& stage);

}  // namespace dualstream
