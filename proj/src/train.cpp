#include <algorithm>
#include <cmath>
#include <numeric>

#include "dualstream/model.hpp"

namespace dualstream {

namespace {

// Argmax over one row of logits/scores; ties break to the lowest class index.
int argmax_row(const float* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

// Consecutive index chunks. A trailing chunk of one sample is merged into the
// previous one because training-mode batchnorm needs at least two rows.
std::vector<std::vector<int64_t>> make_batches(const std::vector<int64_t>& order,
                                               int batch_size) {
  std::vector<std::vector<int64_t>> batches;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

}  // namespace

Tensor TensorDataset::gather(const std::vector<int64_t>& indices) const {
  const int64_t plane = static_cast<int64_t>(channels) * height * width;
  Tensor out = Tensor::zeros({static_cast<int64_t>(indices.size()), channels, height, width});
  float* dst = out.values().data();
  for (size_t i = 0; i < indices.size(); ++i) {
    const int64_t idx = indices[i];
    if (idx < 0 || idx >= size()) throw Error("TensorDataset: index out of range");
    std::copy_n(data.data() + idx * plane, plane, dst + static_cast<int64_t>(i) * plane);
  }
  return out;
}

TensorDataset make_tensor_dataset(const std::vector<ImageSample>& samples,
                                  const NormalizationStats& stats) {
  if (samples.empty()) throw DataError("make_tensor_dataset: no samples");
  TensorDataset ds;
  ds.channels = 1;
  ds.height = samples[0].image.height;
  ds.width = samples[0].image.width;
  ds.data.reserve(samples.size() * static_cast<size_t>(ds.height) * ds.width);
  for (const auto& s : samples) {
    if (s.image.width != ds.width || s.image.height != ds.height)
      throw DataError("make_tensor_dataset: sample '" + s.id + "' is " +
                      std::to_string(s.image.width) + "x" + std::to_string(s.image.height) +
                      ", expected " + std::to_string(ds.width) + "x" + std::to_string(ds.height));
    if (s.label < 0) throw DataError("make_tensor_dataset: sample '" + s.id + "' has no label");
    FloatImage f = normalize(s.image, stats);
    ds.data.insert(ds.data.end(), f.data.begin(), f.data.end());
    ds.labels.push_back(s.label);
    ds.ids.push_back(s.id);
  }
  return ds;
}

std::pair<double, double> evaluate_loss_accuracy(FusionModel& model,
                                                 const TensorDataset& samples,
                                                 int batch_size) {
  if (samples.size() == 0) throw DataError("evaluate: no samples");
  if (batch_size < 1) throw Error("evaluate: batch_size must be >= 1");
  const int k = model.config.num_classes;
  double loss_sum = 0.0;
  int64_t correct = 0;
  std::vector<int64_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    std::vector<int64_t> batch(order.begin() + start, order.begin() + end);
    Tensor x = samples.gather(batch);
    std::vector<int> y(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) y[i] = samples.labels[batch[i]];
    auto out = model.forward(nullptr, x, /*training=*/false);
    Tensor loss = softmax_cross_entropy<float>(nullptr, out.logits, y);
    loss_sum += static_cast<double>(loss.values()[0]) * static_cast<double>(batch.size());
    const float* logits = out.logits.values().data();
    for (size_t i = 0; i < batch.size(); ++i)
      if (argmax_row(logits + i * k, k) == y[i]) ++correct;
  }
  const double n = static_cast<double>(samples.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainCurve train_model(FusionModel& model, const TensorDataset& train_set,
                       const TensorDataset& val_set, const TrainConfig& cfg,
                       const std::function<void(FusionModel&, int)>& on_epoch) {
  if (cfg.epochs < 0) throw Error("train: epochs must be >= 0");
  if (cfg.batch_size < 2) throw Error("train: batch_size must be >= 2 (batchnorm)");
  if (train_set.size() < 2) throw DataError("train: need at least 2 training samples");
  if (train_set.height != model.config.input_size || train_set.width != model.config.input_size)
    throw DataError("train: dataset is " + std::to_string(train_set.width) + "x" +
                    std::to_string(train_set.height) + " but the model expects " +
                    std::to_string(model.config.input_size));
  const int k = model.config.num_classes;
  for (int label : train_set.labels)
    if (label >= k)
      throw DataError("train: label " + std::to_string(label) + " outside the model's " +
                      std::to_string(k) + " classes");

  SgdMomentum<float> opt(cfg.learning_rate, cfg.momentum);
  std::vector<Tensor> params;
  for (auto& [name, p] : model.named_parameters()) params.push_back(*p);

  TrainCurve curve;
  Tape<float> tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
    shuffle(order, rng);

    double loss_sum = 0.0;
    int64_t correct = 0;
    const auto batches = make_batches(order, cfg.batch_size);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      Tensor x = train_set.gather(batch);
      std::vector<int> y(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) y[i] = train_set.labels[batch[i]];

      tape.reset();
      for (auto& p : params) p.zero_grad();
      try {
        auto out = model.forward(&tape, x, /*training=*/true);
        Tensor loss = softmax_cross_entropy(&tape, out.logits, y);
        const double loss_val = loss.values()[0];
        if (!std::isfinite(loss_val))
          throw NumericError("loss is not finite");
        tape.backward(loss);
        loss_sum += loss_val * static_cast<double>(batch.size());
        const float* logits = out.logits.values().data();
        for (size_t i = 0; i < batch.size(); ++i)
          if (argmax_row(logits + i * k, k) == y[i]) ++correct;
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(bi + 1) + ": " + e.what());
      }
      opt.step(params);
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (val_set.size() > 0) {
      auto [vl, va] = evaluate_loss_accuracy(model, val_set, cfg.batch_size);
      stats.val_loss = vl;
      stats.val_accuracy = va;
    }
    curve.epochs.push_back(stats);
    model.epochs_completed = epoch + 1;
    if (on_epoch) on_epoch(model, epoch + 1);
  }
  return curve;
}

PredictionSet predict(FusionModel& model, const TensorDataset& samples, int batch_size) {
  if (samples.size() == 0) throw DataError("predict: no samples");
  if (batch_size < 1) throw Error("predict: batch_size must be >= 1");
  const int k = model.config.num_classes;
  PredictionSet out;
  out.num_classes = k;
  out.ids = samples.ids;
  out.actual = samples.labels;
  out.scores.reserve(samples.size() * k);
  for (int64_t start = 0; start < samples.size(); start += batch_size) {
    const int64_t end = std::min<int64_t>(samples.size(), start + batch_size);
    std::vector<int64_t> batch;
    for (int64_t i = start; i < end; ++i) batch.push_back(i);
    Tensor x = samples.gather(batch);
    auto fwd = model.forward(nullptr, x, /*training=*/false);
    std::vector<float> probs = softmax_rows(fwd.logits);
    out.scores.insert(out.scores.end(), probs.begin(), probs.end());
    for (size_t i = 0; i < batch.size(); ++i)
      out.predicted.push_back(argmax_row(probs.data() + i * k, k));
  }
  return out;
}

}  // namespace dualstream
