#include <cmath>

#include <gtest/gtest.h>
#include <omp.h>

#include "oracles.hpp"
#include "periop/metrics.hpp"

using namespace periop;

TEST(Auroc, MatchesPairwiseCountingWithTies) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Stream s(seed, 3);
    std::vector<double> sc;
    std::vector<int> y;
    oracle::random_scored_labels(s, 2 + s.below(199), sc, y);
    EXPECT_EQ(*auroc(sc, y), oracle::pairwise_auroc(sc, y)) << "seed " << seed;
  }
}

TEST(Auroc, Examples) {
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.2};
  const std::vector<int> y = {1, 0, 1, 0};
  EXPECT_EQ(*auroc(s, y), 0.75);
  const std::vector<double> sep = {0.1, 0.2, 0.8, 0.9};
  const std::vector<int> ys = {0, 0, 1, 1};
  EXPECT_EQ(*auroc(sep, ys), 1.0);
  EXPECT_EQ(*average_precision(sep, ys), 1.0);
  EXPECT_FALSE(auroc(sep, std::vector<int>{1, 1, 1, 1}).has_value());
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  Stream s(5, 5);
  std::vector<double> sc;
  std::vector<int> y;
  oracle::random_scored_labels(s, 150, sc, y);
  std::vector<double> t(sc.size());
  for (std::size_t i = 0; i < sc.size(); ++i) t[i] = std::exp(5 * sc[i]) * 3 - 2;
  EXPECT_EQ(auroc(sc, y), auroc(t, y));
}

TEST(Metrics, ConfusionExample) {
  // TP=2, FP=1, FN=1, TN=6
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3, 0.4};
  const std::vector<int> y = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
  const auto c = confusion_at(s, y, 0.5);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 6u);
  const auto m = compute_metrics(s, y);
  EXPECT_DOUBLE_EQ(*m.precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(*m.sensitivity, 2.0 / 3);
  EXPECT_DOUBLE_EQ(*m.specificity, 6.0 / 7);
  EXPECT_DOUBLE_EQ(*m.accuracy, 0.8);
  EXPECT_DOUBLE_EQ(*m.f1, 2.0 / 3);
}

TEST(Metrics, ThresholdIsInclusive) {
  const auto c = confusion_at(std::vector<double>{0.5, 0.4999}, std::vector<int>{1, 1}, 0.5);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fn, 1u);
}

TEST(Metrics, RangeAndHarmonicMean) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Stream s(seed, 6);
    std::vector<double> sc;
    std::vector<int> y;
    oracle::random_scored_labels(s, 5 + s.below(100), sc, y);
    const auto m = compute_metrics(sc, y);
    for (auto k : kAllMetrics)
      if (auto v = m.get(k)) {
        EXPECT_GE(*v, 0.0);
        EXPECT_LE(*v, 1.0);
      }
    if (m.precision && m.sensitivity && *m.precision + *m.sensitivity > 0)
      EXPECT_NEAR(*m.f1, 2 * *m.precision * *m.sensitivity / (*m.precision + *m.sensitivity), 1e-15);
  }
}

TEST(Metrics, ComplementSwapsSensitivityAndSpecificity) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Stream s(seed, 7);
    const std::size_t n = 20 + s.below(50);
    std::vector<double> sc(n), cs(n);
    std::vector<int> y(n), cy(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Avoid exactly 0.5, where ">= 0.5" is not symmetric.
      sc[i] = (static_cast<double>(s.below(20)) + 0.25) / 20.0;
      cs[i] = 1 - sc[i];
      y[i] = s.uniform() < 0.5;
      cy[i] = 1 - y[i];
    }
    y[0] = 1;
    y[1] = 0;
    cy[0] = 0;
    cy[1] = 1;
    const auto a = compute_metrics(sc, y), b = compute_metrics(cs, cy);
    EXPECT_EQ(a.sensitivity, b.specificity);
    EXPECT_EQ(a.specificity, b.sensitivity);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.auroc, b.auroc);
  }
}

TEST(Metrics, SingleClassMarksRankMetricsUndefined) {
  const auto m = compute_metrics(std::vector<double>{0.2, 0.7}, std::vector<int>{0, 0});
  EXPECT_FALSE(m.auroc.has_value());
  EXPECT_FALSE(m.average_precision.has_value());
  EXPECT_TRUE(m.accuracy.has_value());
  EXPECT_TRUE(m.specificity.has_value());
  EXPECT_FALSE(m.sensitivity.has_value());
}

TEST(AveragePrecision, StepSumOracle) {
  // Distinct scores: AP = mean over positives of precision at their rank.
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.6, 0.5};
  const std::vector<int> y = {1, 0, 1, 0, 1};
  EXPECT_NEAR(*average_precision(s, y), (1.0 + 2.0 / 3 + 3.0 / 5) / 3, 1e-15);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 0.025), 1.1);
  EXPECT_DOUBLE_EQ(percentile({7}, 0.9), 7);
}

TEST(Bootstrap, ConstantDataCollapses) {
  const std::vector<double> s(40, 0.8);
  std::vector<int> y(40, 1);
  y[5] = 0;
  const auto ci = bootstrap_ci(s, y, 100, 3);
  for (auto k : {Metric::kAccuracy, Metric::kAuroc, Metric::kSensitivity}) {
    const auto& iv = ci[k];
    ASSERT_TRUE(iv.point && iv.lo95 && iv.hi95) << to_string(k);
    if (k == Metric::kAccuracy) continue;
    EXPECT_EQ(*iv.lo95, *iv.point) << to_string(k);
    EXPECT_EQ(*iv.hi95, *iv.point) << to_string(k);
  }
  const std::vector<int> same(40, 1);
  const auto c2 = bootstrap_ci(s, same, 100, 3);
  EXPECT_EQ(*c2[Metric::kAccuracy].lo95, 1.0);
  EXPECT_EQ(*c2[Metric::kAccuracy].hi95, 1.0);
  EXPECT_EQ(c2.skipped_rank_resamples, 100u);
}

TEST(Bootstrap, DeterministicAndThreadInvariant) {
  Stream s(8, 8);
  std::vector<double> sc;
  std::vector<int> y;
  oracle::random_scored_labels(s, 300, sc, y);
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = to_json(bootstrap_ci(sc, y, 100, 17)).dump();
  omp_set_num_threads(4);
  const auto b = to_json(bootstrap_ci(sc, y, 100, 17)).dump();
  omp_set_num_threads(before);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, to_json(bootstrap_ci(sc, y, 100, 17, 0.5, false)).dump());
  EXPECT_NE(a, to_json(bootstrap_ci(sc, y, 100, 18)).dump());
  const auto ci = bootstrap_ci(sc, y, 100, 17);
  EXPECT_EQ(ci.resamples, 100u);
  for (const auto& iv : ci.intervals)
    if (iv.lo95) EXPECT_LE(*iv.lo95, *iv.hi95);
}
