#include "dualstream/crossval.hpp"

#include <cmath>
#include <ostream>
#include <unordered_map>

#include "dualstream/model.hpp"

namespace dualstream {

namespace {

struct MeanStd {
  double mean = 0, std = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  for (double x : xs) ms.mean += x;
  ms.mean /= static_cast<double>(xs.size());
  double sq = 0;
  for (double x : xs) sq += (x - ms.mean) * (x - ms.mean);
  ms.std = std::sqrt(sq / static_cast<double>(xs.size()));  // population std
  return ms;
}

}  // namespace

CrossvalSummary run_crossval(const LoadedCorpus& data, const KFoldSplit& split,
                             const PipelineConfig& cfg, std::ostream* progress) {
  if (split.folds.size() < 2) throw DataError("crossval: need at least 2 folds");

  std::unordered_map<std::string, size_t> index;
  for (size_t i = 0; i < data.samples.size(); ++i) index[data.samples[i].id] = i;

  CrossvalSummary summary;
  std::vector<double> accs, f1s, kappas;

  for (size_t f = 0; f < split.folds.size(); ++f) {
    std::vector<ImageSample> train_samples, test_samples;
    for (size_t g = 0; g < split.folds.size(); ++g) {
      for (const auto& id : split.folds[g]) {
        auto it = index.find(id);
        if (it == index.end())
          throw DataError("crossval: fold lists unknown sample '" + id + "'");
        (g == f ? test_samples : train_samples).push_back(data.samples[it->second]);
      }
    }

    std::vector<Image> train_images;
    train_images.reserve(train_samples.size());
    for (const auto& s : train_samples) train_images.push_back(s.image);
    const NormalizationStats stats = compute_normalization_stats(train_images);

    ModelConfig mc = cfg.model;
    mc.seed = stage_seed(cfg.seed, "fold-" + std::to_string(f) + "-model");
    auto model = FusionModel::init(mc);

    TrainConfig tc = cfg.train;
    tc.seed = stage_seed(cfg.seed, "fold-" + std::to_string(f) + "-train");
    TensorDataset train_set = make_tensor_dataset(train_samples, stats);
    train_model(model, train_set, {}, tc);

    TensorDataset test_set = make_tensor_dataset(test_samples, stats);
    PredictionSet preds = predict(model, test_set);
    auto cm = ConfusionMatrix::from_predictions(preds.actual, preds.predicted,
                                                cfg.model.num_classes);
    auto report = classification_report(cm);

    FoldOutcome outcome;
    outcome.fold = static_cast<int>(f);
    outcome.test_count = static_cast<int>(test_samples.size());
    outcome.accuracy = report.accuracy;
    outcome.weighted_f1 = report.weighted_f1;
    outcome.kappa = report.kappa;
    summary.per_fold.push_back(outcome);
    accs.push_back(report.accuracy);
    f1s.push_back(report.weighted_f1);
    kappas.push_back(report.kappa);

    if (progress)
      *progress << "fold " << f << ": accuracy " << report.accuracy << ", weighted F1 "
                << report.weighted_f1 << ", kappa " << report.kappa << " ("
                << test_samples.size() << " test samples)\n";
  }

  const auto a = mean_std(accs);
  summary.mean_accuracy = a.mean;
  summary.std_accuracy = a.std;
  const auto w = mean_std(f1s);
  summary.mean_weighted_f1 = w.mean;
  summary.std_weighted_f1 = w.std;
  const auto k = mean_std(kappas);
  summary.mean_kappa = k.mean;
  summary.std_kappa = k.std;
  return summary;
}

}  // namespace dualstream
