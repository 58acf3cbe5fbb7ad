#include "dualstream/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "dualstream/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dualstream {

std::vector<int64_t> LabeledCorpus::class_counts() const {
  std::vector<int64_t> counts(class_names.size(), 0);
  for (const auto& e : entries) counts[static_cast<size_t>(e.label)] += 1;
  return counts;
}

const CorpusEntry& LabeledCorpus::find(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw DataError("corpus: unknown sample id '" + id + "'");
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in '" + path + "': " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

LabeledCorpus scan_corpus(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("corpus root '" + root + "' is not a directory");

  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw DataError("corpus root '" + root + "' has no class directories");

  // Optional manifest carries augmentation provenance.
  std::unordered_map<std::string, std::pair<std::string, std::string>> provenance;
  const fs::path manifest_path = fs::path(root) / "manifest.json";
  if (fs::exists(manifest_path)) {
    json m = load_json_file(manifest_path.string());
    if (m.contains("samples"))
      for (const auto& s : m["samples"])
        provenance[s.at("id").get<std::string>()] = {
            s.value("source_id", ""), s.value("chain", "")};
  }

  LabeledCorpus corpus;
  corpus.class_names = classes;
  std::set<std::string> seen_ids;
  for (size_t label = 0; label < classes.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / classes[label]))
      if (entry.is_regular_file() && has_image_extension(entry.path()))
        files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    if (files.empty())
      throw DataError("class directory '" + classes[label] + "' contains no images");
    for (const auto& f : files) {
      CorpusEntry e;
      e.id = f.stem().string();
      e.label = static_cast<int>(label);
      e.path = f.string();
      if (!seen_ids.insert(e.id).second)
        throw DataError("duplicate sample id '" + e.id +
                        "': filename stems must be unique across the corpus");
      if (auto it = provenance.find(e.id); it != provenance.end()) {
        e.source_id = it->second.first.empty() ? e.id : it->second.first;
        e.chain = it->second.second.empty() ? "original" : it->second.second;
      } else {
        e.source_id = e.id;
        e.chain = "original";
      }
      corpus.entries.push_back(std::move(e));
    }
  }
  return corpus;
}

LoadedCorpus load_corpus(const std::string& root, bool permissive) {
  LabeledCorpus scanned = scan_corpus(root);
  LoadedCorpus out;
  out.corpus.class_names = scanned.class_names;
  for (const auto& e : scanned.entries) {
    Image img;
    try {
      img = load_image(e.path);
    } catch (const DataError& err) {
      if (!permissive) throw;
      std::cerr << "warning: skipping unreadable image: " << err.what() << '\n';
      continue;
    }
    ImageSample s;
    s.id = e.id;
    s.label = e.label;
    s.image = std::move(img);
    s.source_id = e.source_id;
    s.chain = e.chain;
    out.samples.push_back(std::move(s));
    out.corpus.entries.push_back(e);
  }
  if (out.samples.empty()) throw DataError("corpus '" + root + "' has no readable images");
  return out;
}

void write_corpus(const std::string& dir, const std::vector<ImageSample>& samples,
                  const std::vector<std::string>& class_names, uint64_t seed,
                  const std::string& config_hash) {
  if (samples.empty()) throw DataError("write_corpus: nothing to write");
  fs::create_directories(dir);
  json manifest;
  manifest["seed"] = seed;
  manifest["config_hash"] = config_hash;
  manifest["classes"] = class_names;
  json arr = json::array();
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= static_cast<int>(class_names.size()))
      throw DataError("write_corpus: sample '" + s.id + "' has label outside class list");
    const std::string cls = class_names[static_cast<size_t>(s.label)];
    fs::create_directories(fs::path(dir) / cls);
    const std::string rel = cls + "/" + s.id + ".png";
    save_png(s.image, (fs::path(dir) / rel).string());
    json e;
    e["id"] = s.id;
    e["class"] = cls;
    e["file"] = rel;
    e["source_id"] = s.source_id.empty() ? s.id : s.source_id;
    e["chain"] = s.chain.empty() ? "original" : s.chain;
    arr.push_back(std::move(e));
  }
  manifest["samples"] = std::move(arr);
  write_json_file(manifest, (fs::path(dir) / "manifest.json").string());
}

namespace {

// floor(0.8 n) and floor(0.1 n) in exact integer arithmetic.
inline int64_t train_count(int64_t n) { return 8 * n / 10; }
inline int64_t val_count(int64_t n) { return n / 10; }

}  // namespace

DatasetSplit split_80_10_10(const LabeledCorpus& corpus, uint64_t seed,
                            bool group_by_source) {
  DatasetSplit split;
  split.strategy = group_by_source ? "holdout-grouped" : "holdout";
  split.seed = seed;

  for (size_t label = 0; label < corpus.class_names.size(); ++label) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(label)));
    if (!group_by_source) {
      std::vector<std::string> ids;
      for (const auto& e : corpus.entries)
        if (e.label == static_cast<int>(label)) ids.push_back(e.id);
      if (ids.size() < 3)
        throw DataError("class '" + corpus.class_names[label] +
                        "' has fewer than 3 samples; cannot split 80-10-10");
      shuffle(ids, rng);
      const int64_t n = static_cast<int64_t>(ids.size());
      const int64_t tr = train_count(n), va = val_count(n);
      split.train.insert(split.train.end(), ids.begin(), ids.begin() + tr);
      split.validation.insert(split.validation.end(), ids.begin() + tr,
                              ids.begin() + tr + va);
      split.test.insert(split.test.end(), ids.begin() + tr + va, ids.end());
    } else {
      // Whole source groups move together; the floor rule is applied to the
      // group list, so per-sample counts are approximate.
      std::vector<std::string> group_order;
      std::map<std::string, std::vector<std::string>> groups;
      for (const auto& e : corpus.entries)
        if (e.label == static_cast<int>(label)) {
          auto [it, inserted] = groups.try_emplace(e.source_id);
          if (inserted) group_order.push_back(e.source_id);
          it->second.push_back(e.id);
        }
      if (group_order.size() < 3)
        throw DataError("class '" + corpus.class_names[label] +
                        "' has fewer than 3 source groups; cannot split 80-10-10");
      shuffle(group_order, rng);
      const int64_t g = static_cast<int64_t>(group_order.size());
      const int64_t tr = train_count(g), va = val_count(g);
      for (int64_t i = 0; i < g; ++i) {
        auto& dst = i < tr ? split.train : (i < tr + va ? split.validation : split.test);
        const auto& members = groups[group_order[static_cast<size_t>(i)]];
        dst.insert(dst.end(), members.begin(), members.end());
      }
    }
  }
  return split;
}

KFoldSplit stratified_kfold(const LabeledCorpus& corpus, int k, uint64_t seed) {
  if (k < 2) throw Error("stratified_kfold: k must be at least 2");
  KFoldSplit split;
  split.seed = seed;
  split.folds.assign(static_cast<size_t>(k), {});
  for (size_t label = 0; label < corpus.class_names.size(); ++label) {
    std::vector<std::string> ids;
    for (const auto& e : corpus.entries)
      if (e.label == static_cast<int>(label)) ids.push_back(e.id);
    if (static_cast<int>(ids.size()) < k)
      throw DataError("class '" + corpus.class_names[label] + "' has " +
                      std::to_string(ids.size()) + " samples, fewer than k=" +
                      std::to_string(k));
    Rng rng(mix_seed(seed, static_cast<uint64_t>(label)));
    shuffle(ids, rng);
    for (size_t i = 0; i < ids.size(); ++i)
      split.folds[i % static_cast<size_t>(k)].push_back(ids[i]);
  }
  return split;
}

void write_split_manifest(const DatasetSplit& split, const std::string& path,
                          const std::string& config_hash) {
  json j;
  j["strategy"] = split.strategy;
  j["seed"] = split.seed;
  j["config_hash"] = config_hash;
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  write_json_file(j, path);
}

DatasetSplit read_split_manifest(const std::string& path) {
  json j = load_json_file(path);
  DatasetSplit split;
  try {
    split.strategy = j.at("strategy").get<std::string>();
    split.seed = j.at("seed").get<uint64_t>();
    split.train = j.at("train").get<std::vector<std::string>>();
    split.validation = j.at("validation").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError("split manifest '" + path + "': " + e.what());
  }
  return split;
}

void write_kfold_manifest(const KFoldSplit& split, const std::string& path,
                          const std::string& config_hash) {
  json j;
  j["strategy"] = "kfold";
  j["seed"] = split.seed;
  j["k"] = split.folds.size();
  j["config_hash"] = config_hash;
  j["folds"] = split.folds;
  write_json_file(j, path);
}

KFoldSplit read_kfold_manifest(const std::string& path) {
  json j = load_json_file(path);
  KFoldSplit split;
  try {
    if (j.at("strategy").get<std::string>() != "kfold")
      throw DataError("manifest '" + path + "' is not a k-fold manifest");
    split.seed = j.at("seed").get<uint64_t>();
    split.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw DataError("kfold manifest '" + path + "': " + e.what());
  }
  return split;
}

}  // namespace dualstream
