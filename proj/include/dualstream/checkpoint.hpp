#pragma once

// Model checkpoints: a fixed 12-byte prelude ("DSCK", format version, header
// length), a JSON header carrying the model config, run metadata and a tensor
// manifest, then every parameter and batchnorm buffer as raw little-endian
// float32 in manifest order. Loading rebuilds the model from the embedded
// config and restores each tensor by name, so a round trip is bitwise exact.

#include <string>
#include <vector>

#include "dualstream/model.hpp"

namespace dualstream {

struct CheckpointMeta {
  int epoch = 0;
  uint64_t seed = 0;
  std::string config_hash;
  NormalizationStats normalization;
  std::vector<std::string> class_names;
};

void save_checkpoint(const std::string& path, FusionModel& model, const CheckpointMeta& meta);

FusionModel load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace dualstream
