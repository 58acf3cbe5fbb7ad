// dsfuse: the pipeline as subcommands. Every stage reads one JSON config and
// derives its randomness from the master seed, so a rerun with the same
// config and inputs reproduces every artifact bit for bit.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualstream/checkpoint.hpp"
#include "dualstream/config.hpp"
#include "dualstream/crossval.hpp"
#include "dualstream/dataset.hpp"
#include "dualstream/gradcam.hpp"
#include "dualstream/image_io.hpp"
#include "dualstream/metrics.hpp"
#include "dualstream/model.hpp"
#include "dualstream/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dualstream;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

PipelineConfig load_config_or_die(const std::string& path) {
  if (path.empty()) throw UsageError("--config is required");
  return load_pipeline_config(path);
}

// Samples of one split partition, in manifest order.
std::vector<ImageSample> select_samples(const LoadedCorpus& data,
                                        const std::vector<std::string>& ids) {
  std::unordered_map<std::string, size_t> index;
  for (size_t i = 0; i < data.corpus.entries.size(); ++i)
    index.emplace(data.corpus.entries[i].id, i);
  std::vector<ImageSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end())
      throw DataError("split references id '" + id + "' absent from the corpus");
    out.push_back(data.samples[it->second]);
  }
  return out;
}

const std::vector<std::string>& partition_ids(const DatasetSplit& split,
                                              const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw UsageError("unknown partition '" + name + "' (train|validation|test)");
}

void check_input_size(const std::vector<ImageSample>& samples, const ModelConfig& mc) {
  for (const auto& s : samples) {
    if (s.image.width != mc.input_size || s.image.height != mc.input_size)
      throw DataError("sample '" + s.id + "' is " + std::to_string(s.image.width) + "x" +
                      std::to_string(s.image.height) + " but model.input_size is " +
                      std::to_string(mc.input_size) + "; preprocess with resize_to=" +
                      std::to_string(mc.input_size));
  }
}

// Operating points for the exported ROC/PR curves: descending distinct
// thresholds, each tie group advancing the point once (the same convention
// the AUC computation uses).
struct CurvePoint {
  int64_t tp = 0, fp = 0;
};
std::vector<CurvePoint> curve_points(const std::vector<double>& scores,
                                     const std::vector<int>& labels, int64_t* pos,
                                     int64_t* neg) {
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&scores](size_t a, size_t b) { return scores[a] > scores[b]; });
  *pos = *neg = 0;
  for (int l : labels) (l == 1 ? *pos : *neg)++;
  std::vector<CurvePoint> pts;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < idx.size()) {
    const double t = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == t) {
      (labels[idx[i]] == 1 ? tp : fp)++;
      ++i;
    }
    pts.push_back({tp, fp});
  }
  return pts;
}

json report_to_json(const ClassificationReport& rep, const std::vector<std::string>& names) {
  json per_class = json::array();
  for (size_t c = 0; c < rep.per_class.size(); ++c) {
    const auto& m = rep.per_class[c];
    per_class.push_back(json{{"class", names[c]},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"support", m.support}});
  }
  json matrix = json::array();
  for (int a = 0; a < rep.matrix.num_classes; ++a) {
    json row = json::array();
    for (int p = 0; p < rep.matrix.num_classes; ++p) row.push_back(rep.matrix.at(a, p));
    matrix.push_back(std::move(row));
  }
  return json{{"confusion_matrix", std::move(matrix)},
              {"per_class", std::move(per_class)},
              {"accuracy", rep.accuracy},
              {"weighted", json{{"precision", rep.weighted_precision},
                                {"recall", rep.weighted_recall},
                                {"f1", rep.weighted_f1}}},
              {"macro", json{{"precision", rep.macro_precision},
                             {"recall", rep.macro_recall},
                             {"f1", rep.macro_f1}}},
              {"kappa", rep.kappa}};
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

void cmd_init_config(const std::string& out, uint64_t seed) {
  PipelineConfig cfg = default_pipeline_config();
  cfg.seed = seed;
  save_pipeline_config(cfg, out);
  std::cout << "wrote " << out << " (hash " << pipeline_config_hash(cfg) << ")\n";
}

void cmd_make_synthetic(const std::string& out, int classes, int per_class, int size,
                        uint64_t seed) {
  SyntheticConfig sc;
  sc.classes = classes;
  sc.per_class = per_class;
  sc.image_size = size;
  sc.seed = seed;
  auto samples = make_synthetic_samples(sc);
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) names.push_back("class" + std::to_string(c));
  const std::string desc = "synthetic classes=" + std::to_string(classes) +
                           " per_class=" + std::to_string(per_class) +
                           " size=" + std::to_string(size) + " seed=" + std::to_string(seed);
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(desc)));
  ensure_dir(out);
  write_corpus(out, samples, names, seed, hash);
  std::cout << "wrote " << samples.size() << " images in " << classes << " classes to "
            << out << "\n";
}

void cmd_preprocess(const std::string& config_path, const std::string& in,
                    const std::string& out, bool permissive) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  LoadedCorpus data = load_corpus(in, permissive);
  for (auto& s : data.samples) s.image = preprocess_image(s.image, cfg.preprocess);
  ensure_dir(out);
  write_corpus(out, data.samples, data.corpus.class_names, cfg.seed,
               pipeline_config_hash(cfg));
  std::cout << "preprocessed " << data.samples.size() << " images to "
            << cfg.preprocess.resize_to << "x" << cfg.preprocess.resize_to << " in " << out
            << "\n";
}

void cmd_augment(const std::string& config_path, const std::string& in,
                 const std::string& out) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  LoadedCorpus data = load_corpus(in);
  AugmentConfig ac = cfg.augment;
  ac.seed = stage_seed(cfg.seed, "augment");
  auto augmented = augment_dataset(data.samples, ac);
  ensure_dir(out);
  write_corpus(out, augmented, data.corpus.class_names, cfg.seed,
               pipeline_config_hash(cfg));
  std::cout << "augmented " << data.samples.size() << " -> " << augmented.size()
            << " images in " << out << "\n";
}

void cmd_split(const std::string& config_path, const std::string& in, const std::string& out,
               const std::string& kfold_out) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  const LabeledCorpus corpus = scan_corpus(in);
  const DatasetSplit split =
      split_80_10_10(corpus, stage_seed(cfg.seed, "split"), cfg.group_by_source);
  write_split_manifest(split, out, pipeline_config_hash(cfg));
  std::cout << "split " << corpus.entries.size() << " samples: " << split.train.size()
            << " train / " << split.validation.size() << " validation / "
            << split.test.size() << " test -> " << out << "\n";
  if (!kfold_out.empty()) {
    const KFoldSplit kf = stratified_kfold(corpus, cfg.folds, stage_seed(cfg.seed, "kfold"));
    write_kfold_manifest(kf, kfold_out, pipeline_config_hash(cfg));
    std::cout << "wrote " << cfg.folds << "-fold manifest -> " << kfold_out << "\n";
  }
}

void cmd_train(const std::string& config_path, const std::string& data_dir,
               const std::string& split_path, const std::string& out) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  const std::string hash = pipeline_config_hash(cfg);
  const LoadedCorpus data = load_corpus(data_dir);
  const DatasetSplit split = read_split_manifest(split_path);

  const auto train_samples = select_samples(data, split.train);
  const auto val_samples = select_samples(data, split.validation);
  if (train_samples.empty()) throw DataError("split has an empty training partition");

  ModelConfig mc = cfg.model;
  mc.seed = stage_seed(cfg.seed, "model-init");
  if (static_cast<int>(data.corpus.class_names.size()) != mc.num_classes)
    throw DataError("corpus has " + std::to_string(data.corpus.class_names.size()) +
                    " classes but model.num_classes is " + std::to_string(mc.num_classes));
  check_input_size(train_samples, mc);
  check_input_size(val_samples, mc);

  std::vector<Image> train_images;
  train_images.reserve(train_samples.size());
  for (const auto& s : train_samples) train_images.push_back(s.image);
  const NormalizationStats stats = compute_normalization_stats(train_images);

  const TensorDataset train_set = make_tensor_dataset(train_samples, stats);
  const TensorDataset val_set = make_tensor_dataset(val_samples, stats);

  TrainConfig tc = cfg.train;
  tc.seed = stage_seed(cfg.seed, "train");

  FusionModel model = FusionModel::init(mc);
  ensure_dir(out);

  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.config_hash = hash;
  meta.normalization = stats;
  meta.class_names = data.corpus.class_names;

  const TrainCurve curve =
      train_model(model, train_set, val_set, tc, [&](FusionModel& m, int epoch) {
        meta.epoch = epoch;
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
        save_checkpoint((fs::path(out) / name).string(), m, meta);
      });

  meta.epoch = tc.epochs;
  save_checkpoint((fs::path(out) / "model.ckpt").string(), model, meta);

  std::string csv = "# config_hash=" + hash + " seed=" + std::to_string(cfg.seed) + "\n";
  csv += "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (const auto& e : curve.epochs)
    csv += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.train_accuracy) +
           "," + fmt(e.val_loss) + "," + fmt(e.val_accuracy) + "\n";
  write_text_file((fs::path(out) / "curve.csv").string(), csv);

  const auto& last = curve.epochs.back();
  std::cout << "trained " << tc.epochs << " epochs on " << train_set.size()
            << " samples: train acc " << fmt(last.train_accuracy) << ", val acc "
            << fmt(last.val_accuracy) << " -> " << out << "\n";
}

void cmd_evaluate(const std::string& config_path, const std::string& data_dir,
                  const std::string& split_path, const std::string& model_path,
                  const std::string& out, const std::string& partition, int bootstrap_b) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  const std::string hash = pipeline_config_hash(cfg);
  CheckpointMeta meta;
  FusionModel model = load_checkpoint(model_path, &meta);
  const LoadedCorpus data = load_corpus(data_dir);
  const DatasetSplit split = read_split_manifest(split_path);
  const auto samples = select_samples(data, partition_ids(split, partition));
  if (samples.empty()) throw DataError("partition '" + partition + "' is empty");
  check_input_size(samples, model.config);

  const TensorDataset set = make_tensor_dataset(samples, meta.normalization);
  PredictionSet pred = predict(model, set);
  const int k = pred.num_classes;
  const auto& names = meta.class_names.empty() ? data.corpus.class_names : meta.class_names;
  if (static_cast<int>(names.size()) != k)
    throw DataError("checkpoint expects " + std::to_string(k) + " classes, corpus has " +
                    std::to_string(names.size()));

  const ConfusionMatrix cm =
      ConfusionMatrix::from_predictions(pred.actual, pred.predicted, k);
  const ClassificationReport rep = classification_report(cm);
  const AucReport auc = auc_ovr(pred.scores, pred.actual, k);
  const BootstrapCi ci = bootstrap_accuracy_ci(pred.actual, pred.predicted, bootstrap_b,
                                               stage_seed(cfg.seed, "bootstrap"));

  ensure_dir(out);

  std::string pcsv = "sample_id,actual,predicted";
  for (int c = 0; c < k; ++c) pcsv += ",score_" + std::to_string(c);
  pcsv += "\n";
  for (size_t i = 0; i < pred.ids.size(); ++i) {
    pcsv += pred.ids[i] + "," + std::to_string(pred.actual[i]) + "," +
            std::to_string(pred.predicted[i]);
    for (int c = 0; c < k; ++c)
      pcsv += "," + fmt(pred.scores[i * static_cast<size_t>(k) + c]);
    pcsv += "\n";
  }
  write_text_file((fs::path(out) / "predictions.csv").string(), pcsv);

  std::string ccsv = "actual\\predicted";
  for (const auto& n : names) ccsv += "," + n;
  ccsv += "\n";
  for (int a = 0; a < k; ++a) {
    ccsv += names[a];
    for (int p = 0; p < k; ++p) ccsv += "," + std::to_string(cm.at(a, p));
    ccsv += "\n";
  }
  write_text_file((fs::path(out) / "confusion.csv").string(), ccsv);

  std::string mcsv = "name,precision,recall,f1,support\n";
  for (int c = 0; c < k; ++c) {
    const auto& m = rep.per_class[c];
    mcsv += names[c] + "," + fmt(m.precision) + "," + fmt(m.recall) + "," + fmt(m.f1) + "," +
            std::to_string(m.support) + "\n";
  }
  mcsv += "weighted," + fmt(rep.weighted_precision) + "," + fmt(rep.weighted_recall) + "," +
          fmt(rep.weighted_f1) + "," + std::to_string(cm.total()) + "\n";
  mcsv += "macro," + fmt(rep.macro_precision) + "," + fmt(rep.macro_recall) + "," +
          fmt(rep.macro_f1) + "," + std::to_string(cm.total()) + "\n";
  write_text_file((fs::path(out) / "metrics.csv").string(), mcsv);

  std::string roc = "class,fpr,tpr\n";
  std::string prc = "class,recall,precision\n";
  for (int c = 0; c < k; ++c) {
    if (!auc.defined[c]) continue;
    std::vector<double> scores(pred.ids.size());
    std::vector<int> labels(pred.ids.size());
    for (size_t i = 0; i < pred.ids.size(); ++i) {
      scores[i] = pred.scores[i * static_cast<size_t>(k) + c];
      labels[i] = pred.actual[i] == c ? 1 : 0;
    }
    int64_t pos = 0, neg = 0;
    const auto pts = curve_points(scores, labels, &pos, &neg);
    roc += names[c] + ",0,0\n";
    for (const auto& p : pts)
      roc += names[c] + "," + fmt(static_cast<double>(p.fp) / static_cast<double>(neg)) +
             "," + fmt(static_cast<double>(p.tp) / static_cast<double>(pos)) + "\n";
    for (const auto& p : pts) {
      const double recall = static_cast<double>(p.tp) / static_cast<double>(pos);
      const double precision =
          static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
      prc += names[c] + "," + fmt(recall) + "," + fmt(precision) + "\n";
    }
  }
  write_text_file((fs::path(out) / "roc_curves.csv").string(), roc);
  write_text_file((fs::path(out) / "pr_curves.csv").string(), prc);

  json j = report_to_json(rep, names);
  j["config_hash"] = hash;
  j["seed"] = cfg.seed;
  j["partition"] = partition;
  j["num_samples"] = pred.ids.size();
  j["class_names"] = names;
  json defined = json::array();
  for (bool d : auc.defined) defined.push_back(d);
  j["auc"] = json{{"roc_per_class", auc.roc_per_class},
                  {"pr_per_class", auc.pr_per_class},
                  {"defined", std::move(defined)},
                  {"roc_macro", auc.roc_macro},
                  {"pr_macro", auc.pr_macro}};
  j["bootstrap"] = json{{"point", ci.point},
                        {"lo", ci.lo},
                        {"hi", ci.hi},
                        {"resamples", ci.resamples}};
  write_text_file((fs::path(out) / "metrics.json").string(), j.dump(2) + "\n");

  std::cout << "evaluated " << pred.ids.size() << " " << partition
            << " samples: accuracy " << fmt(rep.accuracy) << ", kappa " << fmt(rep.kappa)
            << ", 95% CI [" << fmt(ci.lo) << ", " << fmt(ci.hi) << "] -> " << out << "\n";
}

void cmd_explain(const std::string& config_path, const std::string& data_dir,
                 const std::string& model_path, const std::string& out,
                 const std::string& split_path, const std::string& partition,
                 const std::string& ids_csv, int limit, double alpha) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  CheckpointMeta meta;
  FusionModel model = load_checkpoint(model_path, &meta);
  const LoadedCorpus data = load_corpus(data_dir);

  std::vector<ImageSample> samples;
  if (!ids_csv.empty()) {
    std::vector<std::string> ids;
    std::string cur;
    for (char ch : ids_csv + ",") {
      if (ch == ',') {
        if (!cur.empty()) ids.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    samples = select_samples(data, ids);
  } else if (!split_path.empty()) {
    const DatasetSplit split = read_split_manifest(split_path);
    samples = select_samples(data, partition_ids(split, partition));
  } else {
    samples = data.samples;
  }
  if (limit > 0 && static_cast<int>(samples.size()) > limit) samples.resize(limit);
  if (samples.empty()) throw DataError("no samples selected to explain");
  check_input_size(samples, model.config);

  const auto& names = meta.class_names.empty() ? data.corpus.class_names : meta.class_names;
  ensure_dir(out);
  const auto records =
      write_explanations(model, samples, meta.normalization, names, out, alpha);

  json arr = json::array();
  for (const auto& r : records)
    arr.push_back(json{{"sample_id", r.sample_id},
                       {"stream", r.stream},
                       {"predicted_class", r.predicted_class},
                       {"class_name", r.class_name},
                       {"file", r.file},
                       {"max_x", r.max_x},
                       {"max_y", r.max_y},
                       {"max_value", r.max_value}});
  const json j{{"config_hash", pipeline_config_hash(cfg)},
               {"alpha", alpha},
               {"records", std::move(arr)}};
  write_text_file((fs::path(out) / "index.json").string(), j.dump(2) + "\n");
  std::cout << "wrote " << records.size() << " heatmap overlays for " << samples.size()
            << " samples -> " << out << "\n";
}

void cmd_crossval(const std::string& config_path, const std::string& data_dir,
                  const std::string& out, const std::string& kfold_path, int folds_override) {
  const PipelineConfig cfg = load_config_or_die(config_path);
  const LoadedCorpus data = load_corpus(data_dir);
  KFoldSplit kf;
  if (!kfold_path.empty()) {
    kf = read_kfold_manifest(kfold_path);
  } else {
    const int folds = folds_override > 0 ? folds_override : cfg.folds;
    kf = stratified_kfold(data.corpus, folds, stage_seed(cfg.seed, "kfold"));
  }
  const CrossvalSummary summary = run_crossval(data, kf, cfg, &std::cerr);

  json folds = json::array();
  for (const auto& f : summary.per_fold)
    folds.push_back(json{{"fold", f.fold},
                         {"test_count", f.test_count},
                         {"accuracy", f.accuracy},
                         {"weighted_f1", f.weighted_f1},
                         {"kappa", f.kappa}});
  const json j{{"config_hash", pipeline_config_hash(cfg)},
               {"seed", cfg.seed},
               {"folds", kf.folds.size()},
               {"per_fold", std::move(folds)},
               {"mean_accuracy", summary.mean_accuracy},
               {"std_accuracy", summary.std_accuracy},
               {"mean_weighted_f1", summary.mean_weighted_f1},
               {"std_weighted_f1", summary.std_weighted_f1},
               {"mean_kappa", summary.mean_kappa},
               {"std_kappa", summary.std_kappa}};
  write_text_file(out, j.dump(2) + "\n");
  std::cout << "crossval over " << kf.folds.size() << " folds: accuracy "
            << fmt(summary.mean_accuracy) << " +/- " << fmt(summary.std_accuracy) << " -> "
            << out << "\n";
}

void cmd_gradcheck(int seeds, const std::string& out) {
  if (seeds < 1) throw UsageError("--seeds must be >= 1");
  json results = json::array();
  double worst = 0.0;
  bool all_pass = true;
  for (int s = 0; s < seeds; ++s) {
    const GradCheckResult r = gradient_check_fusion_model(static_cast<uint64_t>(s));
    worst = std::max(worst, r.max_rel_error);
    all_pass = all_pass && r.pass;
    results.push_back(json{{"seed", s}, {"max_rel_error", r.max_rel_error}, {"pass", r.pass}});
    std::cout << "seed " << s << ": max rel error " << fmt(r.max_rel_error) << " "
              << (r.pass ? "PASS" : "FAIL") << "\n";
  }
  if (!out.empty()) {
    const json j{{"seeds", seeds}, {"results", std::move(results)}, {"worst", worst},
                 {"pass", all_pass}};
    write_text_file(out, j.dump(2) + "\n");
  }
  std::cout << "worst over " << seeds << " seeds: " << fmt(worst) << "\n";
  if (!all_pass)
    throw NumericError("gradient check failed: worst relative error " + fmt(worst));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-stream fusion classifier pipeline"};
  app.require_subcommand(1);

  std::string config_path, in_dir, out_path, data_dir, split_path, kfold_path, model_path;
  std::string partition = "test", ids_csv;
  uint64_t seed = 0;
  int classes = 4, per_class = 40, size = 64, bootstrap_b = 1000, limit = 0, seeds = 20;
  double alpha = 0.4;
  bool permissive = false;

  auto* c_init = app.add_subcommand("init-config", "write a default pipeline config");
  c_init->add_option("--out", out_path, "output JSON path")->default_val("config.json");
  c_init->add_option("--seed", seed, "master seed to embed");

  auto* c_synth = app.add_subcommand("make-synthetic", "generate the quadrant-blob corpus");
  c_synth->add_option("--out", out_path, "output corpus directory")->required();
  c_synth->add_option("--classes", classes, "number of classes (2..4)");
  c_synth->add_option("--per-class", per_class, "images per class");
  c_synth->add_option("--size", size, "square image size");
  c_synth->add_option("--seed", seed, "generator seed");

  auto* c_pre = app.add_subcommand("preprocess", "resize + CLAHE + denoise a corpus");
  c_pre->add_option("--config", config_path, "pipeline config JSON")->required();
  c_pre->add_option("--in", in_dir, "input corpus directory")->required();
  c_pre->add_option("--out", out_path, "output corpus directory")->required();
  c_pre->add_flag("--permissive", permissive, "skip unreadable files instead of failing");

  auto* c_aug = app.add_subcommand("augment", "expand a corpus to the configured total");
  c_aug->add_option("--config", config_path, "pipeline config JSON")->required();
  c_aug->add_option("--in", in_dir, "input corpus directory")->required();
  c_aug->add_option("--out", out_path, "output corpus directory")->required();

  auto* c_split = app.add_subcommand("split", "write 80/10/10 (and optional k-fold) manifests");
  c_split->add_option("--config", config_path, "pipeline config JSON")->required();
  c_split->add_option("--in", in_dir, "corpus directory")->required();
  c_split->add_option("--out", out_path, "split manifest path")->required();
  c_split->add_option("--kfold-out", kfold_path, "also write a k-fold manifest here");

  auto* c_train = app.add_subcommand("train", "train a model on the train partition");
  c_train->add_option("--config", config_path, "pipeline config JSON")->required();
  c_train->add_option("--data", data_dir, "corpus directory")->required();
  c_train->add_option("--split", split_path, "split manifest path")->required();
  c_train->add_option("--out", out_path, "output directory for checkpoints and curves")
      ->required();

  auto* c_eval = app.add_subcommand("evaluate", "score a checkpoint on one partition");
  c_eval->add_option("--config", config_path, "pipeline config JSON")->required();
  c_eval->add_option("--data", data_dir, "corpus directory")->required();
  c_eval->add_option("--split", split_path, "split manifest path")->required();
  c_eval->add_option("--model", model_path, "checkpoint path")->required();
  c_eval->add_option("--out", out_path, "output directory for reports")->required();
  c_eval->add_option("--partition", partition, "train|validation|test");
  c_eval->add_option("--bootstrap", bootstrap_b, "bootstrap resamples (>= 100)");

  auto* c_explain = app.add_subcommand("explain", "render per-stream heatmap overlays");
  c_explain->add_option("--config", config_path, "pipeline config JSON")->required();
  c_explain->add_option("--data", data_dir, "corpus directory")->required();
  c_explain->add_option("--model", model_path, "checkpoint path")->required();
  c_explain->add_option("--out", out_path, "output directory")->required();
  c_explain->add_option("--split", split_path, "restrict to one partition of this manifest");
  c_explain->add_option("--partition", partition, "train|validation|test");
  c_explain->add_option("--ids", ids_csv, "comma-separated sample ids");
  c_explain->add_option("--limit", limit, "explain at most this many samples (0 = all)");
  c_explain->add_option("--alpha", alpha, "overlay blend weight");

  auto* c_cv = app.add_subcommand("crossval", "stratified k-fold retraining report");
  c_cv->add_option("--config", config_path, "pipeline config JSON")->required();
  c_cv->add_option("--data", data_dir, "corpus directory")->required();
  c_cv->add_option("--out", out_path, "report JSON path")->required();
  c_cv->add_option("--kfold", kfold_path, "use this k-fold manifest instead of deriving one");
  int cv_folds = 0;
  c_cv->add_option("--folds", cv_folds, "override the fold count from the config");

  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  c_gc->add_option("--seeds", seeds, "number of seeds to run");
  c_gc->add_option("--out", out_path, "optional report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_init->parsed()) cmd_init_config(out_path, seed);
    if (c_synth->parsed()) cmd_make_synthetic(out_path, classes, per_class, size, seed);
    if (c_pre->parsed()) cmd_preprocess(config_path, in_dir, out_path, permissive);
    if (c_aug->parsed()) cmd_augment(config_path, in_dir, out_path);
    if (c_split->parsed()) cmd_split(config_path, in_dir, out_path, kfold_path);
    if (c_train->parsed()) cmd_train(config_path, data_dir, split_path, out_path);
    if (c_eval->parsed())
      cmd_evaluate(config_path, data_dir, split_path, model_path, out_path, partition,
                   bootstrap_b);
    if (c_explain->parsed())
      cmd_explain(config_path, data_dir, model_path, out_path, split_path, partition,
                  ids_csv, limit, alpha);
    if (c_cv->parsed()) cmd_crossval(config_path, data_dir, out_path, kfold_path, cv_folds);
    if (c_gc->parsed()) cmd_gradcheck(seeds, out_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
