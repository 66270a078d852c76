#include "periop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "periop/errors.hpp"
#include "periop/random.hpp"

namespace periop {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw Error("scores and labels differ in length");
}

std::vector<std::size_t> order_by_score(std::span<const double> s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  return idx;
}

std::optional<double> ratio(double num, double den) {
  if (den == 0) return std::nullopt;
  return num / den;
}

}  // namespace

std::optional<double> auroc(std::span<const double> scores, std::span<const int> y) {
  check_sizes(scores.size(), y.size());
  const auto idx = order_by_score(scores);
  // Twice the Mann-Whitney U, kept integral so ties cost nothing in precision.
  std::uint64_t twice_u = 0, neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (y[idx[j]] != 0 ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const int> y) {
  check_sizes(scores.size(), y.size());
  const double total_pos = static_cast<double>(std::count_if(y.begin(), y.end(), [](int v) { return v != 0; }));
  if (total_pos == 0) return std::nullopt;
  auto idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  double tp = 0, fp = 0, prev_recall = 0, ap = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (y[idx[j]] != 0 ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double expected_auroc(std::span<const double> scores, std::span<const double> p) {
  check_sizes(scores.size(), p.size());
  const auto idx = order_by_score(scores);
  double num = 0, neg_below = 0, tot_pos = 0, tot_neg = 0, self = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double pos = 0, neg = 0, self_g = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      const double q = p[idx[j]];
      pos += q;
      neg += 1.0 - q;
      self_g += q * (1.0 - q);
      ++j;
    }
    num += pos * neg_below + 0.5 * (pos * neg - self_g);
    neg_below += neg;
    tot_pos += pos;
    tot_neg += neg;
    self += self_g;
    i = j;
  }
  const double den = tot_pos * tot_neg - self;
  return den > 0 ? num / den : 0.5;
}

Confusion confusion_at(std::span<const double> scores, std::span<const int> y, double threshold) {
  check_sizes(scores.size(), y.size());
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (y[i] != 0)
      (pred ? c.tp : c.fn) += 1;
    else
      (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kAuroc: return "auc";
    case Metric::kAccuracy: return "accuracy";
    case Metric::kF1: return "f1";
    case Metric::kPrecision: return "precision";
    case Metric::kSensitivity: return "sensitivity";
    case Metric::kSpecificity: return "specificity";
    case Metric::kAveragePrecision: return "average_precision";
  }
  return "?";
}

std::optional<double> MetricSet::get(Metric m) const {
  switch (m) {
    case Metric::kAuroc: return auroc;
    case Metric::kAccuracy: return accuracy;
    case Metric::kF1: return f1;
    case Metric::kPrecision: return precision;
    case Metric::kSensitivity: return sensitivity;
    case Metric::kSpecificity: return specificity;
    case Metric::kAveragePrecision: return average_precision;
  }
  return std::nullopt;
}

MetricSet compute_metrics(std::span<const double> scores, std::span<const int> y, double threshold) {
  const Confusion c = confusion_at(scores, y, threshold);
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  MetricSet m;
  m.auroc = periop::auroc(scores, y);
  m.average_precision = periop::average_precision(scores, y);
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return m;
}

namespace {
nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace

nlohmann::json to_json(const MetricSet& m) {
  nlohmann::json j = nlohmann::json::object();
  for (Metric k : kAllMetrics) j[std::string(to_string(k))] = opt_json(m.get(k));
  return j;
}

nlohmann::json to_json(const MetricCI& ci) {
  nlohmann::json j = {{"resamples", ci.resamples},
                      {"skipped_rank_resamples", ci.skipped_rank_resamples}};
  for (Metric k : kAllMetrics) {
    const Interval& iv = ci[k];
    j[std::string(to_string(k))] = {{"point", opt_json(iv.point)},
                                    {"lo95", opt_json(iv.lo95)},
                                    {"hi95", opt_json(iv.hi95)},
                                    {"replicates", iv.replicates}};
  }
  return j;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MetricCI bootstrap_ci(std::span<const double> scores, std::span<const int> y, std::size_t replicates,
                      std::uint64_t seed, double threshold, bool parallel) {
  check_sizes(scores.size(), y.size());
  const std::size_t n = scores.size();
  MetricCI ci;
  ci.resamples = replicates;
  const MetricSet point = compute_metrics(scores, y, threshold);
  for (Metric k : kAllMetrics) ci[k].point = point.get(k);
  if (n == 0) return ci;

  std::vector<MetricSet> reps(replicates);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t b = 0; b < replicates; ++b) {
    Stream s(seed, b);
    std::vector<double> bs(n);
    std::vector<int> by(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<std::size_t>(s.below(n));
      bs[i] = scores[r];
      by[i] = y[r];
    }
    reps[b] = compute_metrics(bs, by, threshold);
  }

  for (const MetricSet& r : reps)
    if (!r.auroc) ++ci.skipped_rank_resamples;
  for (Metric k : kAllMetrics) {
    std::vector<double> v;
    v.reserve(replicates);
    for (const MetricSet& r : reps)
      if (const auto x = r.get(k)) v.push_back(*x);
    Interval& iv = ci[k];
    iv.replicates = v.size();
    if (v.empty()) continue;
    iv.lo95 = percentile(v, 0.025);
    iv.hi95 = percentile(v, 0.975);
  }
  return ci;
}

}  // namespace periop
