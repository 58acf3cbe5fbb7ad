#pragma once

// Directory-per-class corpus ingestion, 80-10-10 split, stratified k-fold,
// and the JSON manifests that make every run replayable.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dualstream/image.hpp"

namespace dualstream {

struct CorpusEntry {
  std::string id;         // filename stem; unique across the whole corpus
  int label = -1;
  std::string path;       // image file on disk
  std::string source_id;  // augmentation source (the id itself for originals)
  std::string chain;      // transform chain ("original" when untransformed)
};

struct LabeledCorpus {
  std::vector<std::string> class_names;  // lexicographic directory order
  std::vector<CorpusEntry> entries;      // class-major, filename-sorted

  std::vector<int64_t> class_counts() const;
  const CorpusEntry& find(const std::string& id) const;
};

// Scans one subdirectory per class (lexicographic), collecting *.png/*.jpg/
// *.jpeg sorted by filename. Joins source_id/chain from <root>/manifest.json
// when present. Does not decode pixels.
LabeledCorpus scan_corpus(const std::string& root);

// scan_corpus plus image decoding. With permissive=false an unreadable file
// throws DataError naming the path; with permissive=true it is skipped with a
// note on stderr and excluded from the result.
struct LoadedCorpus {
  LabeledCorpus corpus;
  std::vector<ImageSample> samples;  // aligned with corpus.entries
};
LoadedCorpus load_corpus(const std::string& root, bool permissive = false);

// Writes samples as PNGs under <dir>/<class>/<id>.png plus <dir>/manifest.json
// recording ids, classes, files, source ids and transform chains.
void write_corpus(const std::string& dir, const std::vector<ImageSample>& samples,
                  const std::vector<std::string>& class_names, uint64_t seed,
                  const std::string& config_hash);

struct DatasetSplit {
  std::string strategy;  // "holdout" or "holdout-grouped"
  uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

struct KFoldSplit {
  uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;  // fold i = test set of split i
};

// Per class, after a seeded shuffle: train gets floor(0.8 n), validation
// floor(0.1 n), test the remainder. group_by_source instead applies the floor
// rule to whole source groups so siblings of one source never straddle
// partitions (per-sample counts are then only approximate).
DatasetSplit split_80_10_10(const LabeledCorpus& corpus, uint64_t seed,
                            bool group_by_source = false);

// Per class: seeded shuffle, then round-robin over folds; per-class fold
// counts differ by at most one.
KFoldSplit stratified_kfold(const LabeledCorpus& corpus, int k, uint64_t seed);

void write_split_manifest(const DatasetSplit& split, const std::string& path,
                          const std::string& config_hash);
DatasetSplit read_split_manifest(const std::string& path);

void write_kfold_manifest(const KFoldSplit& split, const std::string& path,
                          const std::string& config_hash);
KFoldSplit read_kfold_manifest(const std::string& path);

}  // namespace dualstream
