#pragma once

// Stratified k-fold protocol: each fold in turn is the test set, the model is
// retrained from scratch on the rest (normalization statistics recomputed
// from that training portion only), and aggregate metrics are reported as
// mean and population standard deviation across folds.

#include <iosfwd>
#include <vector>

#include "dualstream/config.hpp"
#include "dualstream/dataset.hpp"
#include "dualstream/metrics.hpp"

namespace dualstream {

struct FoldOutcome {
  int fold = 0;
  int test_count = 0;
  double accuracy = 0;
  double weighted_f1 = 0;
  double kappa = 0;
};

struct CrossvalSummary {
  std::vector<FoldOutcome> per_fold;
  double mean_accuracy = 0, std_accuracy = 0;
  double mean_weighted_f1 = 0, std_weighted_f1 = 0;
  double mean_kappa = 0, std_kappa = 0;
};

// Trains one model per fold with fold-specific derived seeds. `progress`,
// when given, receives one line per completed fold.
CrossvalSummary run_crossval(const LoadedCorpus& data, const KFoldSplit& split,
                             const PipelineConfig& cfg, std::ostream* progress = nullptr);

}  // namespace dualstream
