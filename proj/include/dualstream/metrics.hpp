#pragma once

// Evaluation protocol: confusion matrix, per-class and aggregate
// precision/recall/F1 (weighted by support and macro), Cohen's kappa,
// one-vs-rest ROC/PR AUC with explicit tie handling, and percentile-bootstrap
// confidence intervals for accuracy.

#include <cstdint>
#include <string>
#include <vector>

#include "dualstream/common.hpp"

namespace dualstream {

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<int64_t> counts;  // row = actual class, column = predicted class

  explicit ConfusionMatrix(int k = 0)
      : num_classes(k), counts(static_cast<size_t>(k) * k, 0) {}

  int64_t& at(int actual, int predicted) {
    return counts[static_cast<size_t>(actual) * num_classes + predicted];
  }
  int64_t at(int actual, int predicted) const {
    return counts[static_cast<size_t>(actual) * num_classes + predicted];
  }
  int64_t total() const;
  int64_t support(int cls) const;    // row sum: how many samples truly are cls
  int64_t predicted(int cls) const;  // column sum

  static ConfusionMatrix from_predictions(const std::vector<int>& actual,
                                          const std::vector<int>& predicted, int k);
};

struct PerClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  int64_t support = 0;
  bool zero_division = false;  // a denominator was zero and the value was forced to 0
};

struct ClassificationReport {
  ConfusionMatrix matrix;
  std::vector<PerClassMetrics> per_class;
  double accuracy = 0;
  double weighted_precision = 0;  // support-weighted means
  double weighted_recall = 0;
  double weighted_f1 = 0;
  double macro_precision = 0;  // unweighted class means
  double macro_recall = 0;
  double macro_f1 = 0;
  double kappa = 0;
  bool any_zero_division = false;
};

ClassificationReport classification_report(const ConfusionMatrix& cm);

// (p_o - p_e) / (1 - p_e); throws NumericError when chance agreement is 1.
double cohens_kappa(const ConfusionMatrix& cm);

// Trapezoidal ROC AUC over thresholds, stepping tied scores as one group;
// equals the pairwise probability with ties counted 1/2. Throws NumericError
// when either class is absent.
double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision: sum of precision * recall-increment over descending
// thresholds (right-continuous step interpolation, tie groups as one step).
// Throws NumericError when there are no positives.
double pr_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

struct AucReport {
  std::vector<double> roc_per_class;
  std::vector<double> pr_per_class;
  std::vector<bool> defined;  // false for degenerate classes (absent or universal)
  double roc_macro = 0;       // mean over defined classes
  double pr_macro = 0;
};

// One-vs-rest over an N x K score matrix. Throws NumericError if every class
// is degenerate.
AucReport auc_ovr(const std::vector<float>& scores, const std::vector<int>& actual, int k);

struct BootstrapCi {
  double point = 0;
  double lo = 0;
  double hi = 0;
  int resamples = 0;
};

// Percentile bootstrap (2.5/97.5, linear interpolation between order stats)
// of accuracy under resampling samples with replacement. B must be >= 100.
BootstrapCi bootstrap_accuracy_ci(const std::vector<int>& actual,
                                  const std::vector<int>& predicted, int B, uint64_t seed);

}  // namespace dualstream
