#include "dualstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dualstream {

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

int64_t ConfusionMatrix::support(int cls) const {
  int64_t s = 0;
  for (int j = 0; j < num_classes; ++j) s += at(cls, j);
  return s;
}

int64_t ConfusionMatrix::predicted(int cls) const {
  int64_t s = 0;
  for (int i = 0; i < num_classes; ++i) s += at(i, cls);
  return s;
}

ConfusionMatrix ConfusionMatrix::from_predictions(const std::vector<int>& actual,
                                                  const std::vector<int>& predicted, int k) {
  if (actual.size() != predicted.size())
    throw Error("confusion matrix: " + std::to_string(actual.size()) + " labels vs " +
                std::to_string(predicted.size()) + " predictions");
  if (k < 2) throw Error("confusion matrix: need at least 2 classes");
  ConfusionMatrix cm(k);
  for (size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < 0 || actual[i] >= k || predicted[i] < 0 || predicted[i] >= k)
      throw DataError("confusion matrix: label outside [0," + std::to_string(k) + ") at row " +
                      std::to_string(i));
    ++cm.at(actual[i], predicted[i]);
  }
  return cm;
}

double cohens_kappa(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  if (n == 0) throw NumericError("kappa: empty confusion matrix");
  double po = 0, pe = 0;
  for (int c = 0; c < cm.num_classes; ++c) {
    po += static_cast<double>(cm.at(c, c));
    pe += static_cast<double>(cm.support(c)) * static_cast<double>(cm.predicted(c));
  }
  po /= n;
  pe /= n * n;
  if (1.0 - pe <= 0.0)
    throw NumericError("kappa: chance agreement is 1, kappa undefined");
  return (po - pe) / (1.0 - pe);
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  const int64_t n = cm.total();
  if (n == 0) throw DataError("classification report: no samples");
  ClassificationReport r{cm};

  int64_t trace = 0;
  for (int c = 0; c < cm.num_classes; ++c) trace += cm.at(c, c);
  r.accuracy = static_cast<double>(trace) / static_cast<double>(n);

  double w_p = 0, w_r = 0, w_f = 0, m_p = 0, m_r = 0, m_f = 0;
  for (int c = 0; c < cm.num_classes; ++c) {
    PerClassMetrics m;
    m.support = cm.support(c);
    const int64_t tp = cm.at(c, c);
    const int64_t pred = cm.predicted(c);
    if (pred > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(pred);
    } else {
      m.zero_division = true;  // class never predicted
    }
    if (m.support > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(m.support);
    } else {
      m.zero_division = true;  // class absent from the data
    }
    if (m.precision + m.recall > 0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    r.any_zero_division = r.any_zero_division || m.zero_division;

    w_p += m.precision * static_cast<double>(m.support);
    w_r += m.recall * static_cast<double>(m.support);
    w_f += m.f1 * static_cast<double>(m.support);
    m_p += m.precision;
    m_r += m.recall;
    m_f += m.f1;
    r.per_class.push_back(m);
  }
  r.weighted_precision = w_p / static_cast<double>(n);
  r.weighted_recall = w_r / static_cast<double>(n);
  r.weighted_f1 = w_f / static_cast<double>(n);
  r.macro_precision = m_p / cm.num_classes;
  r.macro_recall = m_r / cm.num_classes;
  r.macro_f1 = m_f / cm.num_classes;
  r.kappa = cohens_kappa(cm);
  return r;
}

namespace {

// Sorted distinct thresholds, descending, with cumulative positive/negative
// counts at or above each threshold. Shared by both AUC flavors so ties are
// handled identically: a tie group moves the operating point once.
struct SweepPoint {
  int64_t tp = 0;  // positives with score >= threshold
  int64_t fp = 0;  // negatives with score >= threshold
};

std::vector<SweepPoint> threshold_sweep(const std::vector<double>& scores,
                                        const std::vector<int>& labels, int64_t* positives,
                                        int64_t* negatives) {
  if (scores.size() != labels.size())
    throw Error("auc: score/label length mismatch");
  if (scores.empty()) throw NumericError("auc: no samples");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("auc: non-finite score");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&scores](size_t a, size_t b) { return scores[a] > scores[b]; });

  *positives = 0;
  *negatives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error("auc: labels must be 0 or 1");
    *positives += l;
    *negatives += 1 - l;
  }

  std::vector<SweepPoint> sweep;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < idx.size()) {
    const double threshold = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == threshold) {
      tp += labels[idx[i]];
      fp += 1 - labels[idx[i]];
      ++i;
    }
    sweep.push_back({tp, fp});
  }
  return sweep;
}

}  // namespace

double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  int64_t pos = 0, neg = 0;
  const auto sweep = threshold_sweep(scores, labels, &pos, &neg);
  if (pos == 0 || neg == 0)
    throw NumericError("roc auc: undefined with " + std::to_string(pos) + " positives and " +
                       std::to_string(neg) + " negatives");
  // Trapezoids between consecutive operating points, starting at (0,0).
  double area = 0;
  double prev_tpr = 0, prev_fpr = 0;
  for (const auto& p : sweep) {
    const double tpr = static_cast<double>(p.tp) / static_cast<double>(pos);
    const double fpr = static_cast<double>(p.fp) / static_cast<double>(neg);
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

double pr_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  int64_t pos = 0, neg = 0;
  const auto sweep = threshold_sweep(scores, labels, &pos, &neg);
  if (pos == 0) throw NumericError("pr auc: undefined without positive samples");
  // Average precision: precision at each threshold times the recall step.
  double area = 0;
  double prev_recall = 0;
  for (const auto& p : sweep) {
    const double recall = static_cast<double>(p.tp) / static_cast<double>(pos);
    const double precision =
        static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

AucReport auc_ovr(const std::vector<float>& scores, const std::vector<int>& actual, int k) {
  if (k < 2) throw Error("auc: need at least 2 classes");
  if (scores.size() != actual.size() * static_cast<size_t>(k))
    throw Error("auc: score matrix is not N x " + std::to_string(k));
  AucReport rep;
  rep.roc_per_class.assign(k, 0.0);
  rep.pr_per_class.assign(k, 0.0);
  rep.defined.assign(k, false);
  int defined_count = 0;
  double roc_sum = 0, pr_sum = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> s(actual.size());
    std::vector<int> y(actual.size());
    for (size_t i = 0; i < actual.size(); ++i) {
      s[i] = scores[i * k + c];
      y[i] = actual[i] == c ? 1 : 0;
    }
    try {
      rep.roc_per_class[c] = roc_auc_binary(s, y);
      rep.pr_per_class[c] = pr_auc_binary(s, y);
      rep.defined[c] = true;
      roc_sum += rep.roc_per_class[c];
      pr_sum += rep.pr_per_class[c];
      ++defined_count;
    } catch (const NumericError&) {
      // class absent from the evaluation set (or universal): leave undefined
    }
  }
  if (defined_count == 0) throw NumericError("auc: every class is degenerate");
  rep.roc_macro = roc_sum / defined_count;
  rep.pr_macro = pr_sum / defined_count;
  return rep;
}

BootstrapCi bootstrap_accuracy_ci(const std::vector<int>& actual,
                                  const std::vector<int>& predicted, int B, uint64_t seed) {
  if (actual.size() != predicted.size() || actual.empty())
    throw Error("bootstrap: need matching non-empty label/prediction arrays");
  if (B < 100) throw Error("bootstrap: need at least 100 resamples");
  const size_t n = actual.size();

  int64_t correct = 0;
  for (size_t i = 0; i < n; ++i) correct += actual[i] == predicted[i];

  Rng rng(seed);
  std::vector<double> accs(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    int64_t hit = 0;
    for (size_t i = 0; i < n; ++i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 1));
      hit += actual[j] == predicted[j];
    }
    accs[static_cast<size_t>(b)] = static_cast<double>(hit) / static_cast<double>(n);
  }
  std::sort(accs.begin(), accs.end());

  // Linear interpolation between order statistics at p*(B-1).
  auto quantile = [&accs](double p) {
    const double pos = p * static_cast<double>(accs.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, accs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return accs[lo] * (1.0 - frac) + accs[hi] * frac;
  };

  BootstrapCi ci;
  ci.point = static_cast<double>(correct) / static_cast<double>(n);
  ci.lo = quantile(0.025);
  ci.hi = quantile(0.975);
  ci.resamples = B;
  return ci;
}

}  // namespace dualstream
