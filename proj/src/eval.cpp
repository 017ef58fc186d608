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

#include "speechdp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "speechdp/rng.hpp"

namespace speechdp {
namespace eval {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_binary_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ParameterError("scores/labels size mismatch");
  if (scores.empty()) throw ParameterError("empty input");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ParameterError("scores must be finite");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ParameterError("labels must be 0/1");
  }
}

void check_rate(double r, const char* what) {
  if (!(r >= 0.0) || !(r <= 1.0)) {
    throw ParameterError(std::string(what) + " must lie in [0, 1]");
  }
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

std::optional<double> auroc(const std::vector<double>& scores,
                            const std::vector<int>& labels) {
  check_binary_inputs(scores, labels);
  const auto n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups; rank sum of positives gives the
  // Mann-Whitney U, identical to pair counting with half credit for ties.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> youden_threshold(const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
  check_binary_inputs(scores, labels);
  const auto n_pos = std::count(labels.begin(), labels.end(), 1);
  const auto n_neg = static_cast<long>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates;
  candidates.push_back(-kInf);
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    candidates.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  }
  candidates.push_back(kInf);

  double best_j = -kInf;
  double best_t = kInf;
  for (double t : candidates) {
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        if (labels[i] == 1) {
          ++tp;
        } else {
          ++fp;
        }
      }
    }
    const double j = static_cast<double>(tp) / static_cast<double>(n_pos) -
                     static_cast<double>(fp) / static_cast<double>(n_neg);
    if (j > best_j || (j == best_j && t > best_t)) {
      best_j = j;
      best_t = t;
    }
  }
  return best_t;
}

std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<int>& labels) {
  check_binary_inputs(scores, labels);
  const auto n_pos = std::count(labels.begin(), labels.end(), 1);
  const auto n_neg = static_cast<long>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return {};

  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> candidates;
  candidates.push_back(-kInf);
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    candidates.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  }
  candidates.push_back(kInf);

  std::vector<RocPoint> points;
  points.reserve(candidates.size());
  for (double t : candidates) {
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        (labels[i] == 1 ? tp : fp) += 1;
      }
    }
    points.push_back({t, static_cast<double>(fp) / static_cast<double>(n_neg),
                      static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return points;
}

ConfusionRates confusion_metrics(const std::vector<double>& scores,
                                 const std::vector<int>& labels, double threshold) {
  check_binary_inputs(scores, labels);
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? tp : fn) += 1;
    } else {
      (predicted ? fp : tn) += 1;
    }
  }
  if (tp + fn == 0 || tn + fp == 0) {
    throw ParameterError("confusion metrics need both classes present");
  }
  ConfusionRates r;
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  r.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
  return r;
}

double statistical_parity_difference(double correct_rate_minority,
                                     double correct_rate_majority) {
  check_rate(correct_rate_minority, "minority rate");
  check_rate(correct_rate_majority, "majority rate");
  return correct_rate_minority - correct_rate_majority;
}

double equal_opportunity_difference(double tpr_minority, double tpr_majority) {
  check_rate(tpr_minority, "minority TPR");
  check_rate(tpr_majority, "majority TPR");
  return tpr_minority - tpr_majority;
}

std::optional<double> pearson_r(const std::vector<double>& xs,
                                const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ParameterError("pearson_r input size mismatch");
  const auto n = xs.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<WilcoxonResult> wilcoxon_signed_rank(
    const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> diffs;
  for (const auto& [a, b] : pairs) {
    const double d = a - b;
    if (!std::isfinite(d)) throw ParameterError("non-finite difference in Wilcoxon input");
    if (d != 0.0) diffs.push_back(d);
  }
  const int n = static_cast<int>(diffs.size());
  if (n < 5) return std::nullopt;

  std::vector<int> order(diffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&diffs](int a, int b) {
    return std::abs(diffs[a]) < std::abs(diffs[b]);
  });

  // Doubled ranks stay integer under average-rank tie handling.
  std::vector<long> rank2(diffs.size());
  std::vector<long> tie_sizes;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) {
      ++j;
    }
    const long doubled = static_cast<long>(i + 1) + static_cast<long>(j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    tie_sizes.push_back(static_cast<long>(j - i + 1));
    i = j + 1;
  }

  long w2 = 0;
  for (std::size_t k = 0; k < diffs.size(); ++k) {
    if (diffs[k] > 0.0) w2 += rank2[k];
  }

  WilcoxonResult res;
  res.n_used = n;
  res.w = static_cast<double>(w2) / 2.0;

  if (n <= 25) {
    // Exact null distribution of the doubled rank sum by subset convolution.
    const long total2 = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    for (long r : rank2) {
      for (long s = total2; s >= r; --s) {
        count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
      }
    }
    double le = 0.0, ge = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) le += count[static_cast<std::size_t>(s)];
      if (s >= w2) ge += count[static_cast<std::size_t>(s)];
    }
    const double denom = std::pow(2.0, n);
    res.p = std::min(1.0, 2.0 * std::min(le, ge) / denom);
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (long t : tie_sizes) {
      const double td = static_cast<double>(t);
      var -= (td * td * td - td) / 48.0;
    }
    const double dev = res.w - mean;
    const double cc = dev > 0.0 ? -0.5 : (dev < 0.0 ? 0.5 : 0.0);
    const double z = (dev + cc) / std::sqrt(var);
    res.p = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
  }
  return res;
}

std::optional<RepeatSummary> repeat_summary(const std::vector<double>& values) {
  const auto n = values.size();
  if (n < 2) return std::nullopt;
  RepeatSummary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(n - 1));

  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  auto percentile = [&sorted](double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
  };
  s.ci_low = percentile(0.025);
  s.ci_high = percentile(0.975);
  return s;
}

SpeakerSplit speaker_split(
    const std::vector<std::pair<std::string, std::string>>& speaker_classes,
    double train_frac, std::uint64_t seed) {
  if (speaker_classes.empty()) throw ParameterError("cohort is empty");
  if (!(train_frac > 0.0) || !(train_frac < 1.0)) {
    throw ParameterError("train fraction must lie in (0, 1)");
  }
  // Group per class in first-appearance order so the split is independent of
  // map iteration details.
  std::vector<std::string> class_order;
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& [id, cls] : speaker_classes) {
    auto [it, inserted] = by_class.try_emplace(cls);
    if (inserted) class_order.push_back(cls);
    it->second.push_back(id);
  }

  SpeakerSplit split;
  for (const auto& cls : class_order) {
    auto ids = by_class[cls];
    Prng rng(Prng::mix(seed, Prng::hash_string(cls)));
    deterministic_shuffle(ids, rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_frac * static_cast<double>(ids.size())));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      (i < n_train ? split.train_ids : split.test_ids).push_back(ids[i]);
    }
  }
  return split;
}

ClassRepeatMetrics evaluate_class(const std::vector<SpeakerPrediction>& preds,
                                  int class_index) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(preds.size());
  labels.reserve(preds.size());
  for (const auto& p : preds) {
    scores.push_back(p.scores[class_index]);
    labels.push_back(p.true_class == class_index ? 1 : 0);
  }
  ClassRepeatMetrics m;
  const auto auc = auroc(scores, labels);
  const auto cut = youden_threshold(scores, labels);
  if (!auc.has_value() || !cut.has_value()) return m;
  const ConfusionRates rates = confusion_metrics(scores, labels, *cut);
  m.auroc = *auc;
  m.threshold = *cut;
  m.accuracy = rates.accuracy;
  m.sensitivity = rates.sensitivity;
  m.specificity = rates.specificity;
  m.defined = true;
  return m;
}

std::optional<SubgroupMetrics> evaluate_subgroup(
    const std::vector<SpeakerPrediction>& preds, int class_index,
    const std::string& axis, const std::string& value, double threshold) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : preds) {
    const std::string& tag = axis == "sex" ? p.sex : p.age_band;
    if (tag != value) continue;
    scores.push_back(p.scores[class_index]);
    labels.push_back(p.true_class == class_index ? 1 : 0);
  }
  if (scores.empty()) return std::nullopt;

  SubgroupMetrics m;
  m.n_speakers = static_cast<int>(scores.size());
  m.threshold = threshold;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? tp : fn) += 1;
    } else {
      (predicted ? fp : tn) += 1;
    }
  }
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  m.sensitivity =
      tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : -1.0;
  m.specificity =
      tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : -1.0;
  const auto auc = auroc(scores, labels);
  m.auroc = auc.value_or(-1.0);
  return m;
}

FairnessReport build_fairness_report(
    const std::vector<std::vector<SpeakerPrediction>>& prediction_repeats,
    const std::vector<std::string>& classes, const std::vector<SubgroupPair>& pairs) {
  if (prediction_repeats.empty()) throw ParameterError("no repeats to summarize");

  FairnessReport report;
  report.classes = classes;
  const int n_classes = static_cast<int>(classes.size());
  const auto n_repeats = prediction_repeats.size();

  auto summarize = [](std::vector<double> values) {
    MetricOverRepeats m;
    m.by_repeat = std::move(values);
    if (const auto s = repeat_summary(m.by_repeat); s.has_value()) {
      m.summary = *s;
      m.defined = true;
    } else if (m.by_repeat.size() == 1) {
      m.summary.mean = m.summary.ci_low = m.summary.ci_high = m.by_repeat[0];
      m.defined = true;
    }
    return m;
  };

  // Per-class metric trajectories over repeats.
  std::vector<std::vector<double>> auc(n_classes), acc(n_classes), sens(n_classes),
      spec(n_classes), thresholds(n_classes);
  std::vector<double> mean_auc, mean_acc, mean_sens, mean_spec;
  for (const auto& preds : prediction_repeats) {
    double sum_auc = 0.0, sum_acc = 0.0, sum_sens = 0.0, sum_spec = 0.0;
    for (int c = 0; c < n_classes; ++c) {
      const ClassRepeatMetrics m = evaluate_class(preds, c);
      if (!m.defined) throw ParameterError("class " + classes[c] + " missing from test set");
      auc[c].push_back(m.auroc);
      acc[c].push_back(m.accuracy);
      sens[c].push_back(m.sensitivity);
      spec[c].push_back(m.specificity);
      thresholds[c].push_back(m.threshold);
      sum_auc += m.auroc;
      sum_acc += m.accuracy;
      sum_sens += m.sensitivity;
      sum_spec += m.specificity;
    }
    // Outcomes for individual classes averaged without weights.
    mean_auc.push_back(sum_auc / n_classes);
    mean_acc.push_back(sum_acc / n_classes);
    mean_sens.push_back(sum_sens / n_classes);
    mean_spec.push_back(sum_spec / n_classes);
  }
  for (int c = 0; c < n_classes; ++c) {
    ClassSummary cs;
    cs.class_id = classes[c];
    cs.auroc = summarize(auc[c]);
    cs.accuracy = summarize(acc[c]);
    cs.sensitivity = summarize(sens[c]);
    cs.specificity = summarize(spec[c]);
    report.per_class.push_back(std::move(cs));
  }
  report.overall.class_id = "mean";
  report.overall.auroc = summarize(mean_auc);
  report.overall.accuracy = summarize(mean_acc);
  report.overall.sensitivity = summarize(mean_sens);
  report.overall.specificity = summarize(mean_spec);

  // PtD/EOD per class and declared pair.
  for (int c = 0; c < n_classes; ++c) {
    for (const auto& pair : pairs) {
      FairnessEntry entry;
      entry.class_id = classes[c];
      entry.pair = pair;
      std::vector<double> ptd_vals, eod_vals;
      bool ptd_ok = true, eod_ok = true;
      for (std::size_t r = 0; r < n_repeats; ++r) {
        const double threshold = thresholds[c][r];
        const auto minority = evaluate_subgroup(prediction_repeats[r], c, pair.axis,
                                                pair.minority, threshold);
        const auto majority = evaluate_subgroup(prediction_repeats[r], c, pair.axis,
                                                pair.majority, threshold);
        if (!minority.has_value() || !majority.has_value()) {
          ptd_ok = eod_ok = false;
          break;
        }
        ptd_vals.push_back(
            statistical_parity_difference(minority->accuracy, majority->accuracy));
        if (minority->sensitivity < 0.0 || majority->sensitivity < 0.0) {
          eod_ok = false;
        } else {
          eod_vals.push_back(
              equal_opportunity_difference(minority->sensitivity, majority->sensitivity));
        }
      }
      if (ptd_ok) entry.ptd = summarize(std::move(ptd_vals));
      if (ptd_ok && eod_ok && eod_vals.size() == n_repeats) {
        entry.eod = summarize(std::move(eod_vals));
      }
      report.fairness.push_back(std::move(entry));
    }
  }
  return report;
}

}  // namespace eval
}  // namespace speechdp
