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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "speechdp/eval.hpp"
#include "speechdp/rng.hpp"

using namespace speechdp;

namespace {

// O(n^2) pair-counting oracle with half credit for ties.
double auroc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

// 2^n sign-pattern enumeration oracle for the signed-rank test.
std::pair<double, double> wilcoxon_bruteforce(const std::vector<double>& diffs) {
  const auto n = diffs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&diffs](std::size_t a, std::size_t b) {
    return std::abs(diffs[a]) < std::abs(diffs[b]);
  });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double w_obs = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (diffs[k] > 0.0) w_obs += rank[k];
  }
  long le = 0, ge = 0;
  const long total = 1L << n;
  for (long mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if ((mask >> k) & 1) w += rank[k];
    }
    if (w <= w_obs) ++le;
    if (w >= w_obs) ++ge;
  }
  const double p =
      std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total));
  return {w_obs, p};
}

std::vector<std::pair<double, double>> pairs_from_diffs(const std::vector<double>& diffs) {
  std::vector<std::pair<double, double>> pairs;
  for (double d : diffs) pairs.push_back({d, 0.0});
  return pairs;
}

}  // namespace

TEST_CASE("auroc on separable and tied inputs") {
  CHECK(*eval::auroc({0.9, 0.1}, {1, 0}) == 1.0);
  CHECK(*eval::auroc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK(!eval::auroc({0.5, 0.6}, {1, 1}).has_value());
}

TEST_CASE("auroc equals brute-force pair counting exactly") {
  Prng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.next_int(2, 20));
    std::vector<double> scores;
    std::vector<int> labels;
    int n_pos = 0;
    for (int i = 0; i < n; ++i) {
      // Coarse grid makes ties frequent.
      scores.push_back(static_cast<double>(rng.next_int(0, 9)) / 10.0);
      const int y = static_cast<int>(rng.next_int(0, 1));
      labels.push_back(y);
      n_pos += y;
    }
    if (n_pos == 0 || n_pos == n) {
      CHECK(!eval::auroc(scores, labels).has_value());
      continue;
    }
    CHECK(*eval::auroc(scores, labels) == auroc_bruteforce(scores, labels));
  }
}

TEST_CASE("youden threshold on worked examples") {
  // Perfect separation: the gap midpoint wins with J = 1.
  const auto t1 = eval::youden_threshold({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  CHECK(*t1 == doctest::Approx(0.5));

  const auto t2 = eval::youden_threshold({0.9, 0.8, 0.7, 0.1}, {1, 1, 0, 0});
  CHECK(*t2 == doctest::Approx(0.75));
  const auto rates = eval::confusion_metrics({0.9, 0.8, 0.7, 0.1}, {1, 1, 0, 0}, *t2);
  CHECK(rates.sensitivity == 1.0);
  CHECK(rates.specificity == 1.0);

  // All scores equal: every cut ties at J = 0 and the tie-break picks the
  // predict-all-negative cut.
  const auto t3 = eval::youden_threshold({0.4, 0.4, 0.4}, {1, 0, 1});
  CHECK(std::isinf(*t3));
  CHECK(*t3 > 0.0);

  CHECK(!eval::youden_threshold({0.1, 0.2}, {1, 1}).has_value());
}

TEST_CASE("youden threshold maximizes J over every candidate cut") {
  Prng rng(555);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.next_int(4, 30));
    std::vector<double> scores;
    std::vector<int> labels;
    int n_pos = 0;
    for (int i = 0; i < n; ++i) {
      scores.push_back(static_cast<double>(rng.next_int(0, 20)) / 20.0);
      labels.push_back(static_cast<int>(rng.next_int(0, 1)));
      n_pos += labels.back();
    }
    if (n_pos == 0 || n_pos == n) continue;
    const double best = *eval::youden_threshold(scores, labels);

    auto j_at = [&](double t) {
      long tp = 0, fp = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] >= t) (labels[i] == 1 ? tp : fp) += 1;
      }
      return static_cast<double>(tp) / n_pos -
             static_cast<double>(fp) / (n - n_pos);
    };
    std::vector<double> sorted(scores);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const double j_best = j_at(best);
    CHECK(j_best >= j_at(-std::numeric_limits<double>::infinity()) - 1e-15);
    CHECK(j_best >= j_at(std::numeric_limits<double>::infinity()) - 1e-15);
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      CHECK(j_best >= j_at(0.5 * (sorted[i] + sorted[i + 1])) - 1e-15);
    }
  }
}

TEST_CASE("confusion metrics worked cases") {
  // Perfect predictor at its Youden cut.
  const std::vector<double> s1 = {0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y1 = {1, 1, 0, 0};
  const auto r1 = eval::confusion_metrics(s1, y1, *eval::youden_threshold(s1, y1));
  CHECK(r1.accuracy == 1.0);
  CHECK(r1.sensitivity == 1.0);
  CHECK(r1.specificity == 1.0);

  // Predict-all-negative cut.
  const auto r2 =
      eval::confusion_metrics(s1, y1, std::numeric_limits<double>::infinity());
  CHECK(r2.sensitivity == 0.0);
  CHECK(r2.specificity == 1.0);

  // Four-sample hand enumeration, pos {0.9, 0.6}, neg {0.7, 0.2}. At the
  // Youden cut 0.75: TP=1 (0.9), FN=1 (0.6), TN=2 -> accuracy 0.75,
  // sensitivity 0.5, specificity 1.0.
  const std::vector<double> s3 = {0.9, 0.6, 0.7, 0.2};
  const std::vector<int> y3 = {1, 1, 0, 0};
  const auto r3 = eval::confusion_metrics(s3, y3, 0.75);
  CHECK(r3.accuracy == doctest::Approx(0.75));
  CHECK(r3.sensitivity == doctest::Approx(0.5));
  CHECK(r3.specificity == doctest::Approx(1.0));
  // At 0.65 the negative at 0.7 crosses the cut: accuracy and specificity
  // drop to 0.5 by direct enumeration.
  const auto r4 = eval::confusion_metrics(s3, y3, 0.65);
  CHECK(r4.accuracy == doctest::Approx(0.5));
  CHECK(r4.sensitivity == doctest::Approx(0.5));
  CHECK(r4.specificity == doctest::Approx(0.5));

  CHECK_THROWS_AS(eval::confusion_metrics({0.5}, {1}, 0.3), ParameterError);
}

TEST_CASE("statistical parity difference reproduces the published arithmetic") {
  // Dysarthria accuracy, female vs male, non-private: +1.02 percentage points.
  const double ptd1 = eval::statistical_parity_difference(0.9958, 0.9856);
  CHECK(std::round(ptd1 * 10000.0) / 100.0 == doctest::Approx(1.02).epsilon(1e-12));
  // Same task at the strictest privacy level: +6.51.
  const double ptd2 = eval::statistical_parity_difference(0.8909, 0.8258);
  CHECK(std::round(ptd2 * 10000.0) / 100.0 == doctest::Approx(6.51).epsilon(1e-12));
  CHECK(eval::statistical_parity_difference(0.5, 0.5) == 0.0);
  CHECK_THROWS_AS(eval::statistical_parity_difference(1.2, 0.5), ParameterError);
}

TEST_CASE("parity and opportunity differences are antisymmetric") {
  Prng rng(808);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.next_double(), b = rng.next_double();
    CHECK(eval::statistical_parity_difference(a, b) ==
          -eval::statistical_parity_difference(b, a));
    CHECK(eval::equal_opportunity_difference(a, b) ==
          -eval::equal_opportunity_difference(b, a));
  }
  CHECK(eval::equal_opportunity_difference(1.0, 0.0) == 1.0);
  CHECK(eval::equal_opportunity_difference(0.3, 0.3) == 0.0);
}

TEST_CASE("equal opportunity difference matches a per-group recount") {
  // Two groups with different score distributions, one threshold.
  std::vector<double> scores_a = {0.9, 0.8, 0.3, 0.7, 0.2};
  std::vector<int> labels_a = {1, 1, 1, 0, 0};
  std::vector<double> scores_b = {0.6, 0.4, 0.9, 0.1};
  std::vector<int> labels_b = {1, 1, 0, 0};
  const double t = 0.5;
  const auto ra = eval::confusion_metrics(scores_a, labels_a, t);
  const auto rb = eval::confusion_metrics(scores_b, labels_b, t);

  auto direct_tpr = [t](const std::vector<double>& s, const std::vector<int>& y) {
    long tp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (y[i] == 1) ((s[i] >= t) ? tp : fn) += 1;
    }
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
  };
  CHECK(eval::equal_opportunity_difference(ra.sensitivity, rb.sensitivity) ==
        direct_tpr(scores_a, labels_a) - direct_tpr(scores_b, labels_b));
}

TEST_CASE("pearson correlation spot values") {
  CHECK(*eval::pearson_r({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*eval::pearson_r({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(*eval::pearson_r({1, 2, 3}, {2, 1, 3}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(!eval::pearson_r({1, 1, 1}, {1, 2, 3}).has_value());
  CHECK(!eval::pearson_r({1}, {2}).has_value());
}

TEST_CASE("wilcoxon worked case: five positive differences") {
  const auto res = eval::wilcoxon_signed_rank(pairs_from_diffs({1, 2, 3, 4, 5}));
  REQUIRE(res.has_value());
  CHECK(res->w == 15.0);
  CHECK(res->p == doctest::Approx(0.0625).epsilon(1e-15));
}

TEST_CASE("wilcoxon is flat for perfectly antisymmetric differences") {
  const auto res =
      eval::wilcoxon_signed_rank(pairs_from_diffs({1, -1, 2, -2, 3, -3, 4, -4}));
  REQUIRE(res.has_value());
  CHECK(res->p == 1.0);
}

TEST_CASE("wilcoxon matches 2^n enumeration exactly") {
  Prng rng(31415);
  int tested = 0;
  while (tested < 200) {
    const int n = static_cast<int>(rng.next_int(5, 10));
    std::vector<double> diffs;
    for (int i = 0; i < n; ++i) {
      // Small integer grid provokes |d| ties.
      double d = static_cast<double>(rng.next_int(1, 4));
      if (rng.next_double() < 0.5) d = -d;
      diffs.push_back(d);
    }
    const auto res = eval::wilcoxon_signed_rank(pairs_from_diffs(diffs));
    REQUIRE(res.has_value());
    const auto [w, p] = wilcoxon_bruteforce(diffs);
    CHECK(res->w == w);
    CHECK(std::abs(res->p - p) < 1e-12);
    CHECK(res->p > 0.0);
    CHECK(res->p <= 1.0);
    ++tested;
  }
}

TEST_CASE("wilcoxon drops zeros, needs five nonzero differences, ignores pair order") {
  CHECK(!eval::wilcoxon_signed_rank(pairs_from_diffs({0, 0, 1, 2, 3})).has_value());
  auto diffs = std::vector<double>{1, -2, 3, -4, 5, 6, 0};
  const auto a = eval::wilcoxon_signed_rank(pairs_from_diffs(diffs));
  std::reverse(diffs.begin(), diffs.end());
  const auto b = eval::wilcoxon_signed_rank(pairs_from_diffs(diffs));
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(a->w == b->w);
  CHECK(a->p == b->p);
  CHECK(a->n_used == 6);
}

TEST_CASE("wilcoxon large-n normal approximation is sane") {
  std::vector<double> diffs;
  Prng rng(2718);
  for (int i = 0; i < 40; ++i) diffs.push_back(rng.next_gaussian() + 1.0);
  const auto res = eval::wilcoxon_signed_rank(pairs_from_diffs(diffs));
  REQUIRE(res.has_value());
  CHECK(res->p > 0.0);
  CHECK(res->p <= 1.0);
  // Strongly shifted sample: significant.
  CHECK(res->p < 0.01);
}

TEST_CASE("repeat summary spot values and quantile oracle") {
  const auto flat = eval::repeat_summary(std::vector<double>(10, 0.9));
  REQUIRE(flat.has_value());
  CHECK(flat->mean == doctest::Approx(0.9));
  CHECK(flat->sd == 0.0);
  CHECK(flat->ci_low == doctest::Approx(0.9));
  CHECK(flat->ci_high == doctest::Approx(0.9));

  const auto two = eval::repeat_summary({0.0, 1.0});
  REQUIRE(two.has_value());
  CHECK(two->mean == doctest::Approx(0.5));
  CHECK(two->sd == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

  CHECK(!eval::repeat_summary({0.5}).has_value());

  // Independent quantile routine on 50 seeded uniforms.
  std::vector<double> values;
  Prng rng(99);
  for (int i = 0; i < 50; ++i) values.push_back(rng.next_double());
  const auto s = eval::repeat_summary(values);
  REQUIRE(s.has_value());
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&sorted](double p) {
    const double h = p * (static_cast<double>(sorted.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[std::min(lo + 1, sorted.size() - 1)] * frac;
  };
  CHECK(s->ci_low == doctest::Approx(quantile(0.025)).epsilon(1e-12));
  CHECK(s->ci_high == doctest::Approx(quantile(0.975)).epsilon(1e-12));
}

TEST_CASE("speaker split is stratified, disjoint, exhaustive and stable") {
  std::vector<std::pair<std::string, std::string>> cohort;
  for (int i = 0; i < 10; ++i) cohort.push_back({"s" + std::to_string(i), "healthy"});
  const auto split = eval::speaker_split(cohort, 0.7, 99);
  CHECK(split.train_ids.size() == 7);
  CHECK(split.test_ids.size() == 3);
  std::set<std::string> all(split.train_ids.begin(), split.train_ids.end());
  all.insert(split.test_ids.begin(), split.test_ids.end());
  CHECK(all.size() == 10);

  const auto again = eval::speaker_split(cohort, 0.7, 99);
  CHECK(again.train_ids == split.train_ids);
  CHECK(again.test_ids == split.test_ids);

  // Multi-class stratification within one speaker of the target fraction.
  std::vector<std::pair<std::string, std::string>> multi;
  for (int i = 0; i < 23; ++i) multi.push_back({"a" + std::to_string(i), "c0"});
  for (int i = 0; i < 17; ++i) multi.push_back({"b" + std::to_string(i), "c1"});
  for (int i = 0; i < 9; ++i) multi.push_back({"c" + std::to_string(i), "c2"});
  const auto ms = eval::speaker_split(multi, 0.7, 3);
  std::map<std::string, int> train_per_class;
  std::set<std::string> train_set(ms.train_ids.begin(), ms.train_ids.end());
  std::map<std::string, int> class_totals;
  for (const auto& [id, cls] : multi) {
    class_totals[cls] += 1;
    if (train_set.count(id) > 0) train_per_class[cls] += 1;
  }
  for (const auto& [cls, total] : class_totals) {
    CHECK(std::abs(train_per_class[cls] - 0.7 * total) <= 1.0);
  }
}

TEST_CASE("roc points sweep from all-positive to all-negative") {
  const auto pts = eval::roc_points({0.9, 0.8, 0.7, 0.1}, {1, 1, 0, 0});
  REQUIRE(pts.size() >= 2);
  CHECK(pts.front().tpr == 1.0);
  CHECK(pts.front().fpr == 1.0);
  CHECK(pts.back().tpr == 0.0);
  CHECK(pts.back().fpr == 0.0);
}

TEST_CASE("fairness report: antisymmetry and unweighted class means") {
  // Synthetic predictions: 2 classes, two sexes with different skill.
  std::vector<std::vector<eval::SpeakerPrediction>> repeats;
  Prng rng(1234);
  for (int r = 0; r < 8; ++r) {
    std::vector<eval::SpeakerPrediction> preds;
    for (int i = 0; i < 40; ++i) {
      eval::SpeakerPrediction p;
      p.speaker_id = "s" + std::to_string(i);
      p.true_class = i % 2;
      p.sex = (i % 4 < 2) ? "F" : "M";
      p.age_band = (i % 8 < 4) ? "child" : "older";
      p.repeat_id = r;
      const double skill = p.sex == "F" ? 0.9 : 0.6;
      Vec scores(2);
      for (int c = 0; c < 2; ++c) {
        const double signal = (c == p.true_class) ? skill : 1.0 - skill;
        scores[c] = std::clamp(signal + 0.1 * rng.next_gaussian(), 0.0, 1.0);
      }
      p.scores = scores;
      preds.push_back(std::move(p));
    }
    repeats.push_back(std::move(preds));
  }

  const std::vector<std::string> classes = {"c0", "c1"};
  const auto fwd = eval::build_fairness_report(repeats, classes,
                                               {{"sex", "F", "M"}});
  const auto rev = eval::build_fairness_report(repeats, classes,
                                               {{"sex", "M", "F"}});
  REQUIRE(fwd.fairness.size() == 2);
  for (std::size_t i = 0; i < fwd.fairness.size(); ++i) {
    REQUIRE(fwd.fairness[i].ptd.defined);
    REQUIRE(rev.fairness[i].ptd.defined);
    for (std::size_t r = 0; r < fwd.fairness[i].ptd.by_repeat.size(); ++r) {
      CHECK(fwd.fairness[i].ptd.by_repeat[r] == -rev.fairness[i].ptd.by_repeat[r]);
      CHECK(fwd.fairness[i].eod.by_repeat[r] == -rev.fairness[i].eod.by_repeat[r]);
    }
    // Female skill is higher by construction.
    CHECK(fwd.fairness[i].ptd.summary.mean > 0.0);
  }

  // Overall metrics are the unweighted per-class means, repeat by repeat.
  for (std::size_t r = 0; r < repeats.size(); ++r) {
    const double mean_acc = 0.5 * (fwd.per_class[0].accuracy.by_repeat[r] +
                                   fwd.per_class[1].accuracy.by_repeat[r]);
    CHECK(std::abs(fwd.overall.accuracy.by_repeat[r] - mean_acc) < 1e-12);
    const double mean_auc =
        0.5 * (fwd.per_class[0].auroc.by_repeat[r] + fwd.per_class[1].auroc.by_repeat[r]);
    CHECK(std::abs(fwd.overall.auroc.by_repeat[r] - mean_auc) < 1e-12);
  }
}
