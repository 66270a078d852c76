#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace periop {

// Rank (Mann-Whitney) AUROC with average ranks for ties:
// P(score+ > score-) + P(tie) / 2. nullopt when a class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const int> y);

// Step-sum average precision over distinct thresholds, descending score:
// sum_k (R_k - R_{k-1}) P_k. nullopt without positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const int> y);

// Weighted population AUROC of `scores` when row i is positive with
// probability p[i]: sum_{i != j} p_i (1 - p_j) [s_i > s_j] (+1/2 on ties),
// normalised by the total pair weight.
double expected_auroc(std::span<const double> scores, std::span<const double> p);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};
Confusion confusion_at(std::span<const double> scores, std::span<const int> y, double threshold);

enum class Metric { kAuroc, kAccuracy, kF1, kPrecision, kSensitivity, kSpecificity, kAveragePrecision };
inline constexpr std::array<Metric, 7> kAllMetrics = {
    Metric::kAuroc,       Metric::kAccuracy,    Metric::kF1,
    Metric::kPrecision,   Metric::kSensitivity, Metric::kSpecificity,
    Metric::kAveragePrecision};
std::string_view to_string(Metric m);

// A metric whose denominator is zero is nullopt rather than a made-up value.
struct MetricSet {
  std::optional<double> auroc;
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> precision;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> average_precision;

  std::optional<double> get(Metric m) const;
};

// Predicted positive iff score >= threshold.
MetricSet compute_metrics(std::span<const double> scores, std::span<const int> y,
                          double threshold = 0.5);

struct Interval {
  std::optional<double> point;
  std::optional<double> lo95;
  std::optional<double> hi95;
  std::size_t replicates = 0;  // resamples in which the metric was defined
};

struct MetricCI {
  std::array<Interval, kAllMetrics.size()> intervals;
  std::size_t resamples = 0;
  std::size_t skipped_rank_resamples = 0;  // single-class resamples

  const Interval& operator[](Metric m) const { return intervals[static_cast<std::size_t>(m)]; }
  Interval& operator[](Metric m) { return intervals[static_cast<std::size_t>(m)]; }
};

nlohmann::json to_json(const MetricSet& m);
nlohmann::json to_json(const MetricCI& ci);

// Linear-interpolation percentile (q in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

inline constexpr std::size_t kDefaultBootstrapReplicates = 100;

// Percentile bootstrap over (score, label) pairs. Replicate b draws its rows
// from its own counter-based stream, so results do not depend on the number
// of threads. `parallel = false` runs the serial reference loop.
MetricCI bootstrap_ci(std::span<const double> scores, std::span<const int> y,
                      std::size_t replicates = kDefaultBootstrapReplicates,
                      std::uint64_t seed = 0, double threshold = 0.5, bool parallel = true);

}  // namespace periop
