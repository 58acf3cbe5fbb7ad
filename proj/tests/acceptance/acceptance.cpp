// Acceptance gate: one check per release criterion, each printed as a single
// PASS/FAIL line. Run as: acceptance <dsfuse-binary> <work-dir>. Exits 0 only
// when every criterion holds. Tolerances live next to their assertions.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualstream/config.hpp"
#include "dualstream/dataset.hpp"
#include "dualstream/gradcam.hpp"
#include "dualstream/image.hpp"
#include "dualstream/metrics.hpp"
#include "dualstream/model.hpp"
#include "dualstream/synthetic.hpp"
#include "dualstream/tensor.hpp"

namespace fs = std::filesystem;
using namespace dualstream;
using nlohmann::json;

namespace {

int failures = 0;

void criterion(int number, const std::string& label,
               const std::function<bool(std::string&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("criterion %2d  %-28s %s  (%.1fs)%s%s\n", number, label.c_str(),
              ok ? "PASS" : "FAIL", secs, detail.empty() ? "" : "  ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

LabeledCorpus corpus_with_counts(const std::vector<int64_t>& counts) {
  LabeledCorpus corpus;
  for (size_t c = 0; c < counts.size(); ++c)
    corpus.class_names.push_back("class" + std::to_string(c));
  for (size_t c = 0; c < counts.size(); ++c)
    for (int64_t i = 0; i < counts[c]; ++i) {
      CorpusEntry e;
      e.id = "c" + std::to_string(c) + "_" + std::to_string(i);
      e.label = static_cast<int>(c);
      e.source_id = e.id;
      e.chain = "original";
      corpus.entries.push_back(std::move(e));
    }
  return corpus;
}

std::vector<int64_t> partition_counts(const LabeledCorpus& corpus,
                                      const std::vector<std::string>& ids, int k) {
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (const auto& id : ids) ++counts[static_cast<size_t>(corpus.find(id).label)];
  return counts;
}

// The published confusion matrix this suite's metric oracles are pinned to
// (rows = actual, order glioma / meningioma / normal / pituitary).
ConfusionMatrix reference_matrix() {
  ConfusionMatrix cm(4);
  const int64_t cells[4][4] = {
      {143, 7, 0, 0}, {0, 146, 0, 0}, {0, 0, 159, 0}, {2, 1, 0, 147}};
  for (int a = 0; a < 4; ++a)
    for (int p = 0; p < 4; ++p) cm.at(a, p) = cells[a][p];
  return cm;
}

void realize_pairs(const ConfusionMatrix& cm, std::vector<int>& actual,
                   std::vector<int>& predicted) {
  for (int a = 0; a < cm.num_classes; ++a)
    for (int p = 0; p < cm.num_classes; ++p)
      for (int64_t i = 0; i < cm.at(a, p); ++i) {
        actual.push_back(a);
        predicted.push_back(p);
      }
}

// The model and schedule every desk-scale run uses; 64 px quadrant corpus.
ModelConfig desk_model_config(uint64_t master_seed) {
  ModelConfig mc;
  mc.input_channels = 1;
  mc.input_size = 64;
  mc.num_classes = 4;
  mc.mobile_stem_channels = 8;
  mc.mobile_blocks = {{4, 8, 1}, {6, 16, 2}, {6, 24, 1}, {6, 32, 1}};
  mc.dense_stem_channels = 8;
  mc.dense_blocks = {{2, 12}, {2, 12}};
  mc.dense_compression = 0.5;
  mc.attention_reduction = 4;
  mc.seed = stage_seed(master_seed, "model-init");
  return mc;
}

struct DeskRun {
  FusionModel model;
  TensorDataset train_set, val_set, test_set;
  std::vector<ImageSample> test_samples;
  double train_acc = 0, test_acc = 0;
};

DeskRun desk_scale_run(uint64_t master_seed) {
  SyntheticConfig sc;
  sc.classes = 4;
  sc.per_class = 50;
  sc.image_size = 64;
  sc.seed = master_seed;
  const std::vector<ImageSample> samples = make_synthetic_samples(sc);

  LabeledCorpus corpus;
  for (int c = 0; c < 4; ++c) corpus.class_names.push_back("class" + std::to_string(c));
  for (const auto& s : samples) {
    CorpusEntry e;
    e.id = s.id;
    e.label = s.label;
    e.source_id = s.source_id;
    e.chain = s.chain;
    corpus.entries.push_back(std::move(e));
  }
  const DatasetSplit split = split_80_10_10(corpus, stage_seed(master_seed, "split"));

  auto pick = [&](const std::vector<std::string>& ids) {
    std::vector<ImageSample> out;
    for (const auto& id : ids)
      for (const auto& s : samples)
        if (s.id == id) out.push_back(s);
    return out;
  };
  const std::vector<ImageSample> train_samples = pick(split.train);
  const std::vector<ImageSample> val_samples = pick(split.validation);
  DeskRun run;
  run.test_samples = pick(split.test);

  std::vector<Image> train_images;
  for (const auto& s : train_samples) train_images.push_back(s.image);
  const NormalizationStats stats = compute_normalization_stats(train_images);

  run.train_set = make_tensor_dataset(train_samples, stats);
  run.val_set = make_tensor_dataset(val_samples, stats);
  run.test_set = make_tensor_dataset(run.test_samples, stats);

  run.model = FusionModel::init(desk_model_config(master_seed));
  TrainConfig tc;
  tc.epochs = 29;
  tc.batch_size = 16;
  tc.learning_rate = 0.05;
  tc.momentum = 0.9;
  tc.seed = stage_seed(master_seed, "train");
  train_model(run.model, run.train_set, run.val_set, tc);

  run.train_acc = evaluate_loss_accuracy(run.model, run.train_set).second;
  run.test_acc = evaluate_loss_accuracy(run.model, run.test_set).second;
  return run;
}

std::vector<float> flatten_params(FusionModel& m) {
  std::vector<float> out;
  for (auto& [name, p] : m.named_parameters())
    out.insert(out.end(), p->values().begin(), p->values().end());
  return out;
}

int run_cmd(const std::string& cmd) { return std::system(cmd.c_str()); }

bool files_identical(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

bool trees_identical(const fs::path& a, const fs::path& b, std::string& detail) {
  std::vector<fs::path> rels;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), a));
  size_t b_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++b_count;
  if (b_count != rels.size()) {
    detail = "file counts differ";
    return false;
  }
  for (const auto& rel : rels)
    if (!files_identical(a / rel, b / rel)) {
      detail = "differs: " + rel.string();
      return false;
    }
  return true;
}

// Pipeline config for the CLI end-to-end run (64 px corpus, augment to 400).
std::string e2e_config_json() {
  PipelineConfig cfg;
  cfg.seed = 11;
  cfg.preprocess.resize_to = 64;
  cfg.preprocess.clahe_tiles = 2;
  cfg.augment.flip_probability = 0.0;  // quadrant identity is chirality-sensitive
  cfg.augment.target_total = 400;
  cfg.folds = 3;
  cfg.model = desk_model_config(11);
  cfg.model.seed = 0;  // the CLI derives the init seed from the master seed
  return pipeline_config_json(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <dsfuse-binary> <work-dir>\n");
    return 2;
  }
  const std::string dsfuse = argv[1];
  const fs::path work = argv[2];
  fs::remove_all(work);
  fs::create_directories(work);

  criterion(1, "split count oracle", [](std::string& detail) {
    const LabeledCorpus corpus = corpus_with_counts({1492, 1452, 1492, 1584});
    const std::vector<int64_t> want_train{1193, 1161, 1193, 1267};
    const std::vector<int64_t> want_val{149, 145, 149, 158};
    const std::vector<int64_t> want_test{150, 146, 150, 159};
    for (uint64_t seed : {0ULL, 7ULL, 123456789ULL}) {
      const DatasetSplit s = split_80_10_10(corpus, seed);
      if (partition_counts(corpus, s.train, 4) != want_train ||
          partition_counts(corpus, s.validation, 4) != want_val ||
          partition_counts(corpus, s.test, 4) != want_test) {
        detail = "cell mismatch at seed " + std::to_string(seed);
        return false;
      }
    }
    return true;
  });

  criterion(2, "aggregate metric oracle", [](std::string& detail) {
    const ClassificationReport r = classification_report(reference_matrix());
    auto near = [](double got, double want, double tol) {
      return std::abs(got - want) <= tol;
    };
    if (!near(r.accuracy, 0.98347, 0.0001)) {
      detail = "accuracy " + std::to_string(r.accuracy);
      return false;
    }
    if (!near(r.weighted_precision, 0.9840, 0.0005) ||
        !near(r.weighted_recall, 0.9835, 0.0005) || !near(r.weighted_f1, 0.9835, 0.0005)) {
      detail = "weighted P/R/F1 " + std::to_string(r.weighted_precision) + "/" +
               std::to_string(r.weighted_recall) + "/" + std::to_string(r.weighted_f1);
      return false;
    }
    return true;
  });

  criterion(3, "kappa oracle", [](std::string& detail) {
    // The source that published this matrix quotes a kappa of 0.9840 for it;
    // (p_o - p_e) / (1 - p_e) computed from the matrix itself gives 0.9780.
    // The formula value is asserted; the quoted figure does not match its own
    // cells and is recorded here rather than silently absorbed.
    const double kappa = cohens_kappa(reference_matrix());
    if (std::abs(kappa - 0.9780) > 0.0005) {
      detail = "kappa " + std::to_string(kappa);
      return false;
    }
    return true;
  });

  criterion(4, "bootstrap confidence interval", [](std::string& detail) {
    std::vector<int> actual, predicted;
    realize_pairs(reference_matrix(), actual, predicted);
    const BootstrapCi ci = bootstrap_accuracy_ci(actual, predicted, 1000, 4242);
    const double n = 605.0, p = 595.0 / 605.0;
    const double se = std::sqrt(p * (1.0 - p) / n);
    const double lo_ref = p - 1.96 * se, hi_ref = p + 1.96 * se;  // 0.9733, 0.9937
    if (std::abs(ci.lo - lo_ref) > 0.005 || std::abs(ci.hi - hi_ref) > 0.005) {
      detail = "ci [" + std::to_string(ci.lo) + ", " + std::to_string(ci.hi) + "]";
      return false;
    }
    // the reference interval (0.9743, 0.9920) must sit inside ours +/- 0.005
    if (ci.lo - 0.005 > 0.9743 || ci.hi + 0.005 < 0.9920) {
      detail = "reference interval not covered";
      return false;
    }
    return true;
  });

  criterion(5, "gradient suite", [](std::string& detail) {
    double worst = 0.0;
    for (const auto& r : gradient_check_suite(20, 0xACCE5501ULL)) {
      worst = std::max(worst, r.max_rel_error);
      if (!r.pass || r.max_rel_error >= 1e-4) {
        detail = r.name + " rel " + std::to_string(r.max_rel_error);
        return false;
      }
    }
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      const GradCheckResult r = gradient_check_fusion_model(seed);
      worst = std::max(worst, r.max_rel_error);
      if (!r.pass || r.max_rel_error >= 1e-4) {
        detail = "full model seed " + std::to_string(seed) + " rel " +
                 std::to_string(r.max_rel_error);
        return false;
      }
    }
    detail = "worst rel " + std::to_string(worst);
    return true;
  });

  criterion(6, "architecture invariants", [](std::string& detail) {
    Rng rng(0xA5C1);
    // dense growth arithmetic: out channels are exactly c0 + layers*growth
    for (const auto& [c0, layers, growth] :
         std::vector<std::tuple<int, int, int>>{{4, 1, 3}, {6, 3, 4}, {8, 2, 12}, {5, 4, 7}}) {
      auto block = DenseBlock<float>::init(c0, {layers, growth}, rng);
      Tensor x = dualstream::detail::random_tensor<float>({2, c0, 9, 9}, rng);
      const Tensor y = block.forward(nullptr, x, false);
      if (y.dim(1) != c0 + static_cast<int64_t>(layers) * growth) {
        detail = "dense channels " + std::to_string(y.dim(1));
        return false;
      }
    }
    // a zeroed projection makes a stride-1 block the identity
    auto block = InvertedResidual<float>::init(5, {3, 5, 1}, rng);
    if (!block.use_skip) {
      detail = "skip not engaged";
      return false;
    }
    std::fill(block.project.weight.values().begin(), block.project.weight.values().end(),
              0.0f);
    Tensor x = dualstream::detail::random_tensor<float>({2, 5, 6, 6}, rng);
    for (bool training : {false, true}) {
      const Tensor y = block.forward(nullptr, x, training);
      if (y.values() != x.values()) {
        detail = "identity violated";
        return false;
      }
    }
    // shape contract across randomized configs
    for (int i = 0; i < 10; ++i) {
      ModelConfig mc;
      mc.input_size = 16 + 8 * static_cast<int>(rng.uniform_int(0, 4));  // 16..48
      mc.num_classes = 2 + static_cast<int>(rng.uniform_int(0, 3));
      mc.mobile_stem_channels = 2 + static_cast<int>(rng.uniform_int(0, 3));
      mc.mobile_blocks.clear();
      const int n_mb = 1 + static_cast<int>(rng.uniform_int(0, 2));
      for (int b = 0; b < n_mb; ++b)
        mc.mobile_blocks.push_back({1 + static_cast<int>(rng.uniform_int(0, 3)),
                                    2 + static_cast<int>(rng.uniform_int(0, 5)),
                                    b == 0 ? 2 : 1});
      mc.dense_stem_channels = 2 + static_cast<int>(rng.uniform_int(0, 3));
      mc.dense_blocks = {{1 + static_cast<int>(rng.uniform_int(0, 2)),
                          1 + static_cast<int>(rng.uniform_int(0, 5))},
                         {1 + static_cast<int>(rng.uniform_int(0, 2)),
                          1 + static_cast<int>(rng.uniform_int(0, 5))}};
      mc.attention_reduction = 1;
      mc.seed = 100 + i;
      const ShapeReport want = expected_shapes(mc);
      auto model = FusionModel::init(mc);
      Tensor in = dualstream::detail::random_tensor<float>({2, 1, mc.input_size, mc.input_size}, rng);
      auto out = model.forward(nullptr, in, false);
      if (out.mobile_map.dim(1) != want.mobile_channels ||
          out.mobile_map.dim(2) != want.mobile_size ||
          out.mobile_map.dim(3) != want.mobile_size ||
          out.dense_map.dim(1) != want.dense_channels ||
          out.dense_map.dim(2) != want.dense_size ||
          out.dense_map.dim(3) != want.dense_size ||
          out.fused.dim(1) != want.fused_width || out.logits.dim(1) != mc.num_classes) {
        detail = "shape contract broken at config " + std::to_string(i);
        return false;
      }
    }
    return true;
  });

  // criteria 7 and 8 share one trained model; 7 also retrains for determinism
  DeskRun run;
  criterion(7, "desk-scale training", [&run](std::string& detail) {
    run = desk_scale_run(11);
    if (run.train_acc < 0.99 || run.test_acc < 0.95) {
      detail = "train " + std::to_string(run.train_acc) + " test " +
               std::to_string(run.test_acc);
      return false;
    }
    DeskRun rerun = desk_scale_run(11);
    if (flatten_params(run.model) != flatten_params(rerun.model)) {
      detail = "retraining with the same seed changed the weights";
      return false;
    }
    detail = "train " + std::to_string(run.train_acc) + " test " +
             std::to_string(run.test_acc);
    return true;
  });

  criterion(8, "heatmap localization", [&run](std::string& detail) {
    if (run.test_set.size() == 0) {
      detail = "no trained model (criterion 7 failed)";
      return false;
    }
    const PredictionSet pred = predict(run.model, run.test_set);
    int correct = 0, ok_both = 0;
    for (size_t i = 0; i < run.test_samples.size(); ++i) {
      if (pred.predicted[i] != pred.actual[i]) continue;
      ++correct;
      const Tensor x = run.test_set.gather({static_cast<int64_t>(i)});
      int qx0, qy0, qx1, qy1;
      synthetic_quadrant(pred.actual[i], run.test_samples[i].image.width, &qx0, &qy0, &qx1,
                         &qy1);
      bool both = true;
      for (Stream st : {Stream::mobile, Stream::dense}) {
        GradCam cam = compute_gradcam(run.model, x, st, pred.predicted[i]);
        double total = 0, inside = 0;
        float max_seen = 0.0f;
        for (int y = 0; y < cam.input_h; ++y)
          for (int xx = 0; xx < cam.input_w; ++xx) {
            const float v = cam.heat[static_cast<size_t>(y) * cam.input_w + xx];
            if (v < 0.0f) {
              detail = "negative heat";
              return false;
            }
            max_seen = std::max(max_seen, v);
            total += v;
            if (xx >= qx0 && xx < qx1 && y >= qy0 && y < qy1) inside += v;
          }
        // max-normalization: the map peaks at exactly 1 unless it is all zero
        float map_max = 0.0f;
        for (float v : cam.map) map_max = std::max(map_max, v);
        if (map_max > 0.0f && std::abs(map_max - 1.0f) > 1e-6f) {
          detail = "map max " + std::to_string(map_max);
          return false;
        }
        if (max_seen > 1.0f + 1e-6f) {
          detail = "heat above 1";
          return false;
        }
        if (total <= 0 || inside / total < 0.5) both = false;
      }
      if (both) ++ok_both;
    }
    const double rate = correct ? static_cast<double>(ok_both) / correct : 0.0;
    detail = std::to_string(ok_both) + "/" + std::to_string(correct) + " localized";
    return correct > 0 && rate >= 0.9;
  });

  criterion(9, "auc equivalence", [](std::string& detail) {
    // 4-point reference case first
    if (std::abs(roc_auc_binary({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) - 0.75) > 1e-15) {
      detail = "4-point case";
      return false;
    }
    Rng rng(0xA0C);
    for (int i = 0; i < 1000; ++i) {
      const int n = 2 + static_cast<int>(rng.uniform_int(0, 48));
      std::vector<double> scores(static_cast<size_t>(n));
      std::vector<int> labels(static_cast<size_t>(n));
      int pos = 0;
      for (int j = 0; j < n; ++j) {
        // quantized draws force frequent score ties
        const double raw = rng.uniform(0.0, 1.0);
        scores[static_cast<size_t>(j)] =
            rng.uniform(0.0, 1.0) < 0.5 ? std::round(raw * 8.0) / 8.0 : raw;
        labels[static_cast<size_t>(j)] = rng.uniform(0.0, 1.0) < 0.5 ? 1 : 0;
        pos += labels[static_cast<size_t>(j)];
      }
      if (pos == 0) labels[0] = 1;
      if (pos == n) labels[0] = 0;
      const double trapezoid = roc_auc_binary(scores, labels);
      double pairs = 0, wins = 0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          if (labels[static_cast<size_t>(a)] != 1 || labels[static_cast<size_t>(b)] != 0)
            continue;
          pairs += 1;
          if (scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]) wins += 1;
          else if (scores[static_cast<size_t>(a)] == scores[static_cast<size_t>(b)])
            wins += 0.5;
        }
      if (std::abs(trapezoid - wins / pairs) > 1e-12) {
        detail = "mismatch at instance " + std::to_string(i);
        return false;
      }
    }
    return true;
  });

  criterion(10, "pipeline properties", [](std::string& detail) {
    // augmentation determinism: identical seeds give a bitwise-equal corpus
    SyntheticConfig sc;
    sc.classes = 3;
    sc.per_class = 4;
    sc.image_size = 32;
    sc.seed = 5;
    const auto sources = make_synthetic_samples(sc);
    AugmentConfig ac;
    ac.target_total = 36;
    ac.seed = 99;
    const auto a = augment_dataset(sources, ac);
    const auto b = augment_dataset(sources, ac);
    if (a.size() != b.size() || a.size() != 36) {
      detail = "augment size " + std::to_string(a.size());
      return false;
    }
    for (size_t i = 0; i < a.size(); ++i)
      if (a[i].id != b[i].id || a[i].chain != b[i].chain ||
          a[i].image.pixels != b[i].image.pixels) {
        detail = "augment not deterministic at " + std::to_string(i);
        return false;
      }

    // brightness-contrast is exactly clip(1.2 x + 15) over every 8-bit value
    Image ramp = make_image(16, 16);
    for (int i = 0; i < 256; ++i) ramp.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(i);
    const Image bc = brightness_contrast(ramp, 1.2, 15.0);
    for (int i = 0; i < 256; ++i) {
      const double want = std::clamp(std::floor(1.2 * i + 15.0 + 0.5), 0.0, 255.0);
      if (bc.pixels[static_cast<size_t>(i)] != static_cast<uint8_t>(want)) {
        detail = "brightness-contrast differs at " + std::to_string(i);
        return false;
      }
    }

    // CLAHE per-tile map is monotone and stays in range
    Rng rng(31);
    std::array<double, 256> hist{};
    for (int i = 0; i < 4096; ++i) hist[rng.uniform_int(0, 255)] += 1.0;
    const auto map = dualstream::detail::clahe_equalization_map(hist, 4096, 2.0);
    for (int v = 1; v < 256; ++v)
      if (map[static_cast<size_t>(v)] < map[static_cast<size_t>(v - 1)]) {
        detail = "clahe map not monotone at " + std::to_string(v);
        return false;
      }
    Image noise_img = make_image(40, 40);
    for (auto& p : noise_img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
    const Image ce = clahe(noise_img, 2.0, 4, 4);
    if (ce.width != 40 || ce.height != 40) {
      detail = "clahe changed dimensions";
      return false;
    }

    // NL-means removes at least half the seeded noise variance
    Image flat = make_image(48, 48, 100);
    Rng nrng(2024);
    for (auto& p : flat.pixels) {
      const double v = 100.0 + nrng.normal() * 15.0;
      p = static_cast<uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
    auto variance = [](const Image& img) {
      double mean = 0;
      for (auto p : img.pixels) mean += p;
      mean /= static_cast<double>(img.pixels.size());
      double var = 0;
      for (auto p : img.pixels) var += (p - mean) * (p - mean);
      return var / static_cast<double>(img.pixels.size());
    };
    const Image den = nl_means_denoise(flat, 10.0, 7, 21);
    if (variance(den) >= 0.5 * variance(flat)) {
      detail = "variance " + std::to_string(variance(den)) + " vs " +
               std::to_string(variance(flat));
      return false;
    }

    // stratified 5-fold: disjoint, exhaustive, per-class counts within 1
    const LabeledCorpus corpus = corpus_with_counts({21, 17, 33});
    const KFoldSplit kf = stratified_kfold(corpus, 5, 12);
    std::vector<std::string> seen;
    for (const auto& fold : kf.folds) seen.insert(seen.end(), fold.begin(), fold.end());
    std::sort(seen.begin(), seen.end());
    if (seen.size() != 71 || std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
      detail = "folds not a partition";
      return false;
    }
    for (int c = 0; c < 3; ++c) {
      int64_t lo = INT64_MAX, hi = 0;
      for (const auto& fold : kf.folds) {
        const int64_t n = partition_counts(corpus, fold, 3)[static_cast<size_t>(c)];
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      if (hi - lo > 1) {
        detail = "class " + std::to_string(c) + " fold spread " + std::to_string(hi - lo);
        return false;
      }
    }
    return true;
  });

  criterion(11, "end-to-end cli", [&dsfuse, &work](std::string& detail) {
    const fs::path cfg_path = work / "config.json";
    std::ofstream(cfg_path) << e2e_config_json();
    auto stage_all = [&](const fs::path& root) -> std::string {
      fs::create_directories(root);
      const std::string c = " --config " + cfg_path.string();
      const std::vector<std::pair<std::string, std::string>> stages = {
          {"make-synthetic", dsfuse + " make-synthetic --out " + (root / "raw").string() +
                                 " --classes 4 --per-class 50 --size 64 --seed 11"},
          {"preprocess", dsfuse + " preprocess" + c + " --in " + (root / "raw").string() +
                             " --out " + (root / "prep").string()},
          {"augment", dsfuse + " augment" + c + " --in " + (root / "prep").string() +
                          " --out " + (root / "aug").string()},
          {"split", dsfuse + " split" + c + " --in " + (root / "aug").string() + " --out " +
                        (root / "split.json").string() + " --kfold-out " +
                        (root / "kfold.json").string()},
          {"train", dsfuse + " train" + c + " --data " + (root / "aug").string() +
                        " --split " + (root / "split.json").string() + " --out " +
                        (root / "run").string()},
          {"evaluate", dsfuse + " evaluate" + c + " --data " + (root / "aug").string() +
                           " --split " + (root / "split.json").string() + " --model " +
                           (root / "run" / "model.ckpt").string() + " --out " +
                           (root / "eval").string() + " --partition test --bootstrap 200"},
          {"explain", dsfuse + " explain" + c + " --data " + (root / "aug").string() +
                          " --model " + (root / "run" / "model.ckpt").string() + " --split " +
                          (root / "split.json").string() +
                          " --partition test --limit 8 --out " +
                          (root / "explain").string()}};
      for (const auto& [name, cmd] : stages)
        if (run_cmd(cmd + " > " + (root / (name + ".log")).string() + " 2>&1") != 0)
          return name + " exited nonzero";
      return "";
    };

    const std::string err_a = stage_all(work / "a");
    if (!err_a.empty()) {
      detail = err_a;
      return false;
    }
    for (const char* rel :
         {"raw/manifest.json", "prep/manifest.json", "aug/manifest.json", "split.json",
          "kfold.json", "run/model.ckpt", "run/curve.csv", "eval/predictions.csv",
          "eval/confusion.csv", "eval/metrics.csv", "eval/metrics.json",
          "eval/roc_curves.csv", "eval/pr_curves.csv", "explain/index.json"}) {
      if (!fs::exists(work / "a" / rel)) {
        detail = std::string("missing artifact ") + rel;
        return false;
      }
    }
    json metrics;
    std::ifstream(work / "a" / "eval" / "metrics.json") >> metrics;
    const double acc = metrics.at("accuracy").get<double>();
    if (acc < 0.95) {
      detail = "accuracy " + std::to_string(acc);
      return false;
    }

    const std::string err_b = stage_all(work / "b");
    if (!err_b.empty()) {
      detail = err_b;
      return false;
    }
    // logs carry no artifacts and may legitimately differ (timings); drop them
    for (const auto& root : {work / "a", work / "b"})
      for (const auto& e : fs::directory_iterator(root))
        if (e.path().extension() == ".log") fs::remove(e.path());
    std::string diff;
    if (!trees_identical(work / "a", work / "b", diff)) {
      detail = "rerun not bitwise identical: " + diff;
      return false;
    }
    detail = "accuracy " + std::to_string(acc);
    return true;
  });

  std::printf("%s\n", failures == 0 ? "acceptance: all criteria passed"
                                    : "acceptance: FAILURES PRESENT");
  return failures == 0 ? 0 : 1;
}
