#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <doctest.h>

#include "dualstream/dataset.hpp"
#include "dualstream/image_io.hpp"

using namespace dualstream;
namespace fs = std::filesystem;

namespace {

// In-memory corpus with the given per-class totals; no files involved.
LabeledCorpus synthetic_corpus(const std::vector<int64_t>& per_class) {
  LabeledCorpus corpus;
  for (size_t c = 0; c < per_class.size(); ++c) {
    corpus.class_names.push_back("class" + std::to_string(c));
    for (int64_t i = 0; i < per_class[c]; ++i) {
      CorpusEntry e;
      e.id = "c" + std::to_string(c) + "_" + std::to_string(i);
      e.label = static_cast<int>(c);
      e.source_id = e.id;
      e.chain = "original";
      corpus.entries.push_back(std::move(e));
    }
  }
  return corpus;
}

std::map<int, int64_t> count_by_class(const LabeledCorpus& corpus,
                                      const std::vector<std::string>& ids) {
  std::map<int, int64_t> counts;
  for (const auto& id : ids) counts[corpus.find(id).label] += 1;
  return counts;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ds_test_" + std::to_string(Rng(std::random_device{}()).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Image tiny_image(uint8_t fill) { return make_image(6, 6, fill); }

}  // namespace

TEST_CASE("holdout split reproduces the reference per-class cell counts exactly") {
  // Totals 1492/1452/1492/1584 must give train 1193/1161/1193/1267,
  // validation 149/145/149/158, test 150/146/150/159.
  LabeledCorpus corpus = synthetic_corpus({1492, 1452, 1492, 1584});
  DatasetSplit split = split_80_10_10(corpus, 7);
  auto tr = count_by_class(corpus, split.train);
  auto va = count_by_class(corpus, split.validation);
  auto te = count_by_class(corpus, split.test);
  CHECK(tr[0] == 1193);
  CHECK(tr[1] == 1161);
  CHECK(tr[2] == 1193);
  CHECK(tr[3] == 1267);
  CHECK(va[0] == 149);
  CHECK(va[1] == 145);
  CHECK(va[2] == 149);
  CHECK(va[3] == 158);
  CHECK(te[0] == 150);
  CHECK(te[1] == 146);
  CHECK(te[2] == 150);
  CHECK(te[3] == 159);
}

TEST_CASE("holdout floor rule on small classes") {
  {
    LabeledCorpus corpus = synthetic_corpus({10});
    DatasetSplit s = split_80_10_10(corpus, 1);
    CHECK(s.train.size() == 8);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
  }
  {
    LabeledCorpus corpus = synthetic_corpus({5});
    DatasetSplit s = split_80_10_10(corpus, 1);
    CHECK(s.train.size() == 4);
    CHECK(s.validation.size() == 0);
    CHECK(s.test.size() == 1);
  }
  LabeledCorpus small = synthetic_corpus({2});
  CHECK_THROWS_AS(split_80_10_10(small, 1), DataError);
}

TEST_CASE("holdout split is a deterministic partition") {
  LabeledCorpus corpus = synthetic_corpus({40, 25, 33});
  DatasetSplit a = split_80_10_10(corpus, 99);
  DatasetSplit b = split_80_10_10(corpus, 99);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);

  std::set<std::string> all;
  for (const auto& id : a.train) CHECK(all.insert(id).second);
  for (const auto& id : a.validation) CHECK(all.insert(id).second);
  for (const auto& id : a.test) CHECK(all.insert(id).second);
  CHECK(all.size() == corpus.entries.size());

  DatasetSplit c = split_80_10_10(corpus, 100);
  CHECK(c.train != a.train);  // the seed reaches the shuffle
}

TEST_CASE("grouped holdout keeps augmentation siblings together") {
  LabeledCorpus corpus;
  corpus.class_names = {"k"};
  for (int g = 0; g < 12; ++g)
    for (int m = 0; m < 3; ++m) {
      CorpusEntry e;
      e.id = "src" + std::to_string(g) + "_v" + std::to_string(m);
      e.label = 0;
      e.source_id = "src" + std::to_string(g);
      e.chain = m == 0 ? "original" : "rotate(1.0)";
      corpus.entries.push_back(std::move(e));
    }
  DatasetSplit s = split_80_10_10(corpus, 5, true);
  CHECK(s.strategy == "holdout-grouped");
  auto partition_of = [&](const std::string& id) {
    if (std::count(s.train.begin(), s.train.end(), id)) return 0;
    if (std::count(s.validation.begin(), s.validation.end(), id)) return 1;
    return 2;
  };
  for (int g = 0; g < 12; ++g) {
    const int p0 = partition_of("src" + std::to_string(g) + "_v0");
    for (int m = 1; m < 3; ++m)
      CHECK(partition_of("src" + std::to_string(g) + "_v" + std::to_string(m)) == p0);
  }
  // Floor rule on the 12 groups: 9 train, 1 validation, 2 test (x3 samples).
  CHECK(s.train.size() == 27);
  CHECK(s.validation.size() == 3);
  CHECK(s.test.size() == 6);
}

TEST_CASE("stratified kfold: exact divisibility gives one per class per fold") {
  LabeledCorpus corpus = synthetic_corpus({5, 5, 5, 5});
  KFoldSplit kf = stratified_kfold(corpus, 5, 3);
  REQUIRE(kf.folds.size() == 5);
  for (const auto& fold : kf.folds) {
    CHECK(fold.size() == 4);
    auto counts = count_by_class(corpus, fold);
    for (int c = 0; c < 4; ++c) CHECK(counts[c] == 1);
  }
}

TEST_CASE("stratified kfold partitions the corpus with per-class balance") {
  Rng rng(88);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int64_t> sizes;
    for (int c = 0; c < 4; ++c) sizes.push_back(rng.uniform_int(7, 40));
    LabeledCorpus corpus = synthetic_corpus(sizes);
    const int k = 5;
    KFoldSplit kf = stratified_kfold(corpus, k, rng.next());
    std::set<std::string> all;
    for (const auto& fold : kf.folds)
      for (const auto& id : fold) CHECK(all.insert(id).second);
    CHECK(all.size() == corpus.entries.size());
    for (size_t c = 0; c < sizes.size(); ++c) {
      int64_t lo = corpus.entries.size(), hi = 0;
      for (const auto& fold : kf.folds) {
        auto counts = count_by_class(corpus, fold);
        lo = std::min(lo, counts[static_cast<int>(c)]);
        hi = std::max(hi, counts[static_cast<int>(c)]);
      }
      CHECK(hi - lo <= 1);
    }
  }
}

TEST_CASE("stratified kfold validation") {
  LabeledCorpus corpus = synthetic_corpus({4, 9});
  CHECK_THROWS_AS(stratified_kfold(corpus, 1, 0), Error);
  CHECK_THROWS_AS(stratified_kfold(corpus, 5, 0), DataError);  // class 0 has 4 < k
  CHECK_NOTHROW(stratified_kfold(corpus, 4, 0));
}

TEST_CASE("scan_corpus: layout, ordering, and validation") {
  TempDir tmp;
  for (const std::string cls : {"glioma", "meningioma", "normal", "pituitary"}) {
    fs::create_directories(tmp.path / cls);
    save_png(tiny_image(10), (tmp.path / cls / (cls + "_b.png")).string());
    save_png(tiny_image(20), (tmp.path / cls / (cls + "_a.png")).string());
  }
  LabeledCorpus corpus = scan_corpus(tmp.path.string());
  CHECK(corpus.class_names ==
        std::vector<std::string>{"glioma", "meningioma", "normal", "pituitary"});
  REQUIRE(corpus.entries.size() == 8);
  CHECK(corpus.class_counts() == std::vector<int64_t>{2, 2, 2, 2});
  // Filename-sorted within class: _a before _b.
  CHECK(corpus.entries[0].id == "glioma_a");
  CHECK(corpus.entries[1].id == "glioma_b");
  // Untracked samples are their own source.
  CHECK(corpus.entries[0].source_id == "glioma_a");
  CHECK(corpus.entries[0].chain == "original");

  LabeledCorpus again = scan_corpus(tmp.path.string());
  for (size_t i = 0; i < corpus.entries.size(); ++i)
    CHECK(again.entries[i].id == corpus.entries[i].id);
}

TEST_CASE("scan_corpus error cases") {
  TempDir tmp;
  CHECK_THROWS_AS(scan_corpus(tmp.path.string()), DataError);  // no class dirs
  fs::create_directories(tmp.path / "empty_class");
  CHECK_THROWS_AS(scan_corpus(tmp.path.string()), DataError);  // class with no images
  save_png(tiny_image(5), (tmp.path / "empty_class" / "x.png").string());
  fs::create_directories(tmp.path / "other");
  save_png(tiny_image(5), (tmp.path / "other" / "x.png").string());
  // Duplicate stem across classes.
  CHECK_THROWS_AS(scan_corpus(tmp.path.string()), DataError);
  CHECK_THROWS_AS(scan_corpus((tmp.path / "missing").string()), DataError);
}

TEST_CASE("write_corpus then load_corpus round-trips samples and provenance") {
  TempDir tmp;
  std::vector<ImageSample> samples;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i) {
      ImageSample s;
      s.id = "cls" + std::to_string(c) + "_img" + std::to_string(i);
      s.label = c;
      s.image = tiny_image(static_cast<uint8_t>(40 * c + i));
      s.source_id = i == 2 ? "cls" + std::to_string(c) + "_img0" : s.id;
      s.chain = i == 2 ? "rotate(3.500000)" : "original";
      samples.push_back(std::move(s));
    }
  const std::string dir = (tmp.path / "corpus").string();
  write_corpus(dir, samples, {"alpha", "beta"}, 42, "cafebabe");

  LoadedCorpus loaded = load_corpus(dir);
  CHECK(loaded.corpus.class_names == std::vector<std::string>{"alpha", "beta"});
  REQUIRE(loaded.samples.size() == 6);
  for (const auto& s : loaded.samples) {
    const auto& e = loaded.corpus.find(s.id);
    CHECK(e.source_id == (s.id.back() == '2' ? s.id.substr(0, s.id.size() - 1) + "0" : s.id));
    bool generated = s.id.back() == '2';
    CHECK(e.chain == (generated ? "rotate(3.500000)" : "original"));
  }
  // Pixels survive the PNG round trip exactly.
  const auto& first = loaded.samples.front();
  CHECK(first.image.pixels == samples.front().image.pixels);
}

TEST_CASE("load_corpus: unreadable file fails strict, skipped when permissive") {
  TempDir tmp;
  fs::create_directories(tmp.path / "k");
  save_png(tiny_image(9), (tmp.path / "k" / "good.png").string());
  std::ofstream(tmp.path / "k" / "broken.png") << "this is not a png";
  CHECK_THROWS_AS(load_corpus(tmp.path.string(), false), DataError);
  LoadedCorpus loaded = load_corpus(tmp.path.string(), true);
  REQUIRE(loaded.samples.size() == 1);
  CHECK(loaded.samples[0].id == "good");
}

TEST_CASE("split manifests round-trip through JSON") {
  TempDir tmp;
  DatasetSplit split;
  split.strategy = "holdout";
  split.seed = 31337;
  split.train = {"a", "b", "c"};
  split.validation = {"d"};
  split.test = {"e", "f"};
  const std::string path = (tmp.path / "split.json").string();
  write_split_manifest(split, path, "deadbeef");
  DatasetSplit back = read_split_manifest(path);
  CHECK(back.strategy == "holdout");
  CHECK(back.seed == 31337);
  CHECK(back.train == split.train);
  CHECK(back.validation == split.validation);
  CHECK(back.test == split.test);

  KFoldSplit kf;
  kf.seed = 11;
  kf.folds = {{"a", "b"}, {"c"}, {"d", "e"}};
  const std::string kpath = (tmp.path / "folds.json").string();
  write_kfold_manifest(kf, kpath, "deadbeef");
  KFoldSplit kback = read_kfold_manifest(kpath);
  CHECK(kback.seed == 11);
  CHECK(kback.folds == kf.folds);

  std::ofstream(tmp.path / "bad.json") << "{ not json";
  CHECK_THROWS_AS(read_split_manifest((tmp.path / "bad.json").string()), DataError);
  CHECK_THROWS_AS(read_split_manifest((tmp.path / "nothere.json").string()), DataError);
}
