//
// Copyright 2026 The SpeechDP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef SPEECHDP_EVAL_HPP_
#define SPEECHDP_EVAL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "speechdp/tensor.hpp"

namespace speechdp {
namespace eval {

// One speaker's sigmoid scores from one evaluation repeat.
struct SpeakerPrediction {
  std::string speaker_id;
  Vec scores;  // one per class, in [0, 1]
  int true_class = 0;
  std::string sex;
  std::string age_band;
  int repeat_id = 0;
};

struct SubgroupMetrics {
  double auroc = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double threshold = 0.0;
  int n_speakers = 0;
};

// Probability that a random positive outscores a random negative, ties
// counted 0.5. Computed from rank statistics; equals brute-force pair
// counting exactly. Empty when only one class is present.
std::optional<double> auroc(const std::vector<double>& scores,
                            const std::vector<int>& labels);

// Candidate cuts are midpoints of sorted distinct scores plus +-infinity;
// returns the candidate maximizing TPR - FPR, ties broken toward the larger
// threshold (higher specificity). Predictions use score >= threshold.
std::optional<double> youden_threshold(const std::vector<double>& scores,
                                       const std::vector<int>& labels);

struct ConfusionRates {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

// Requires both classes present.
ConfusionRates confusion_metrics(const std::vector<double>& scores,
                                 const std::vector<int>& labels, double threshold);

// Correct-prediction-rate difference, minority minus majority; positive
// favors the minority group.
double statistical_parity_difference(double correct_rate_minority,
                                     double correct_rate_majority);

// True-positive-rate difference, minority minus majority.
double equal_opportunity_difference(double tpr_minority, double tpr_majority);

// Sample correlation; empty when either side has zero variance or fewer
// than two points.
std::optional<double> pearson_r(const std::vector<double>& xs,
                                const std::vector<double>& ys);

struct WilcoxonResult {
  double w = 0.0;  // sum of positive-difference ranks
  double p = 0.0;  // two-sided
  int n_used = 0;  // non-zero differences
};

// Two-tailed Wilcoxon signed-rank test. Zero differences are dropped and
// |d| ties get average ranks. Exact p by sign-pattern enumeration for
// n <= 25, normal approximation with continuity correction above. Empty
// when fewer than 5 non-zero differences remain.
std::optional<WilcoxonResult> wilcoxon_signed_rank(
    const std::vector<std::pair<double, double>>& pairs);

struct RepeatSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Mean, sample sd and empirical 2.5/97.5 percentile bounds (linear
// interpolation between order statistics). Empty for fewer than 2 values.
std::optional<RepeatSummary> repeat_summary(const std::vector<double>& values);

// Speaker-level stratified split: within each class speakers are shuffled
// deterministically and round(train_frac * n) go to training. Disjoint and
// exhaustive; stable under the seed so paired experiments share the split.
struct SpeakerSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

SpeakerSplit speaker_split(
    const std::vector<std::pair<std::string, std::string>>& speaker_classes,
    double train_frac, std::uint64_t seed);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Operating points swept over the same candidate thresholds as
// youden_threshold, ordered from all-positive to all-negative.
std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<int>& labels);

// ---- Multiclass one-vs-rest evaluation used by the experiment pipeline ----

struct ClassRepeatMetrics {
  double auroc = 0.0;
  double threshold = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  bool defined = false;
};

// One-vs-rest metrics for one class over one repeat's predictions; the
// threshold comes from Youden's criterion on these predictions.
ClassRepeatMetrics evaluate_class(const std::vector<SpeakerPrediction>& preds,
                                  int class_index);

// Same task restricted to speakers whose `axis` tag equals `value`, at a
// fixed threshold (normally the full-set Youden cut).
std::optional<SubgroupMetrics> evaluate_subgroup(
    const std::vector<SpeakerPrediction>& preds, int class_index,
    const std::string& axis, const std::string& value, double threshold);

// Declared orientation for parity differences, e.g. {"sex", "F", "M"}.
struct SubgroupPair {
  std::string axis;
  std::string minority;
  std::string majority;
};

struct MetricOverRepeats {
  RepeatSummary summary;
  std::vector<double> by_repeat;
  bool defined = false;
};

struct FairnessEntry {
  std::string class_id;
  SubgroupPair pair;
  MetricOverRepeats ptd;
  MetricOverRepeats eod;
};

struct ClassSummary {
  std::string class_id;
  MetricOverRepeats auroc, accuracy, sensitivity, specificity;
};

// Per-subgroup metrics with PtD/EOD summaries over repeats. pearson_r
// against epsilon and Wilcoxon p-values for paired DP/non-DP comparisons
// are attached by the reporting stage, which sees several runs at once.
struct FairnessReport {
  std::vector<std::string> classes;
  std::vector<ClassSummary> per_class;
  ClassSummary overall;  // unweighted mean over classes, per repeat
  std::vector<FairnessEntry> fairness;
  std::vector<std::uint64_t> crop_hashes;  // one per repeat, for pairing audits
};

FairnessReport build_fairness_report(
    const std::vector<std::vector<SpeakerPrediction>>& prediction_repeats,
    const std::vector<std::string>& classes, const std::vector<SubgroupPair>& pairs);

}  // namespace eval
}  // namespace speechdp

#endif  // SPEECHDP_EVAL_HPP_
