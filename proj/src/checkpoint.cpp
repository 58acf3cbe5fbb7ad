#include "dualstream/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "dualstream/config.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace dualstream {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("checkpoint '" + path + "': truncated header");
  return v;
}

// Parameters first, then buffers; both orders are fixed by the model.
std::vector<std::pair<std::string, Tensor*>> all_tensors(FusionModel& model) {
  auto ts = model.named_parameters();
  for (auto& nb : model.named_buffers()) ts.push_back(nb);
  return ts;
}

}  // namespace

void save_checkpoint(const std::string& path, FusionModel& model, const CheckpointMeta& meta) {
  auto tensors = all_tensors(model);

  json manifest = json::array();
  uint64_t offset = 0;
  for (auto& [name, t] : tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t->shape();
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += static_cast<uint64_t>(t->size()) * sizeof(float);
  }

  json header;
  header["config"] = json::parse(model_config_json(model.config));
  header["epoch"] = meta.epoch;
  header["seed"] = meta.seed;
  header["config_hash"] = meta.config_hash;
  header["normalization"] = {{"mean", meta.normalization.mean},
                             {"stddev", meta.normalization.stddev}};
  header["class_names"] = meta.class_names;
  header["tensors"] = manifest;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->values().data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  out.flush();
  if (!out) throw DataError("checkpoint: write to '" + path + "' failed");
}

FusionModel load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("checkpoint '" + path + "': not a checkpoint file (bad magic)");
  const uint32_t version = read_u32(in, path);
  if (version != kVersion)
    throw DataError("checkpoint '" + path + "': unsupported format version " +
                    std::to_string(version));
  const uint32_t header_len = read_u32(in, path);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  if (!in) throw DataError("checkpoint '" + path + "': truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path + "': corrupt header: " + e.what());
  }

  ModelConfig cfg = model_config_from_json(header.at("config").dump());
  FusionModel model = FusionModel::init(cfg);
  if (meta) {
    meta->epoch = header.value("epoch", 0);
    meta->seed = header.value("seed", uint64_t{0});
    meta->config_hash = header.value("config_hash", "");
    if (header.contains("normalization")) {
      meta->normalization.mean = header.at("normalization").value("mean", 0.0);
      meta->normalization.stddev = header.at("normalization").value("stddev", 1.0);
    }
    meta->class_names = header.value("class_names", std::vector<std::string>{});
  }
  model.epochs_completed = header.value("epoch", 0);

  struct Entry {
    Shape shape;
    uint64_t offset = 0;
  };
  std::unordered_map<std::string, Entry> entries;
  for (const auto& e : header.at("tensors"))
    entries[e.at("name").get<std::string>()] = {e.at("shape").get<Shape>(),
                                                e.at("offset").get<uint64_t>()};

  const std::streampos body_start = in.tellg();
  auto tensors = all_tensors(model);
  if (tensors.size() != entries.size())
    throw DataError("checkpoint '" + path + "': manifest lists " +
                    std::to_string(entries.size()) + " tensors, model has " +
                    std::to_string(tensors.size()));
  for (auto& [name, t] : tensors) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw DataError("checkpoint '" + path + "': missing tensor '" + name + "'");
    if (it->second.shape != t->shape())
      throw DataError("checkpoint '" + path + "': tensor '" + name + "' has shape " +
                      shape_str(it->second.shape) + ", model expects " + shape_str(t->shape()));
    in.seekg(body_start + static_cast<std::streamoff>(it->second.offset));
    in.read(reinterpret_cast<char*>(t->values().data()),
            static_cast<std::streamsize>(t->size() * sizeof(float)));
    if (!in) throw DataError("checkpoint '" + path + "': truncated body at '" + name + "'");
  }
  return model;
}

}  // namespace dualstream
