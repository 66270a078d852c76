#include "periop/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "periop/errors.hpp"
#include "periop/random.hpp"

namespace periop {

namespace {

// Positions of each class, ordered by hash(seed, row id).
std::array<std::vector<std::size_t>, 2> hashed_classes(const LabelVector& y, std::uint64_t seed) {
  if (y.row_ids.size() != y.y.size()) throw Error("label vector has no row ids");
  std::array<std::vector<std::size_t>, 2> cls;
  for (std::size_t i = 0; i < y.size(); ++i) cls[y.y[i] != 0 ? 1 : 0].push_back(i);
  for (auto& c : cls)
    std::sort(c.begin(), c.end(), [&](std::size_t a, std::size_t b) {
      const std::uint64_t ha = derive_seed(seed, y.row_ids[a], 0x5B1D);
      const std::uint64_t hb = derive_seed(seed, y.row_ids[b], 0x5B1D);
      return ha != hb ? ha < hb : y.row_ids[a] < y.row_ids[b];
    });
  return cls;
}

}  // namespace

SplitResult train_test_split(const LabelVector& y, double test_frac, std::uint64_t seed) {
  if (!(test_frac > 0 && test_frac < 1)) throw ConfigError("test fraction must lie in (0, 1)");
  const auto cls = hashed_classes(y, seed);
  SplitResult out;
  for (int c = 0; c < 2; ++c) {
    const std::size_t nc = cls[c].size();
    if (nc < 2)
      throw Error("cannot stratify: class " + std::to_string(c) + " has " + std::to_string(nc) +
                  " member(s)");
    const auto want = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(nc)));
    const std::size_t nt = std::clamp<std::size_t>(want, 1, nc - 1);
    out.test.insert(out.test.end(), cls[c].begin(), cls[c].begin() + static_cast<std::ptrdiff_t>(nt));
    out.train.insert(out.train.end(), cls[c].begin() + static_cast<std::ptrdiff_t>(nt), cls[c].end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::size_t> FoldPlan::training_rows(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan FoldPlan::remap(std::span<const std::size_t> rows) const {
  FoldPlan p = *this;
  for (auto& f : p.folds)
    for (auto& i : f) {
      if (i >= rows.size()) throw Error("fold position outside the row map");
      i = rows[i];
    }
  return p;
}

FoldPlan stratified_kfold(const LabelVector& y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  const auto cls = hashed_classes(y, seed);
  // A class smaller than k leaves some folds without it; grid_search then
  // reports those folds as single-class.
  if (y.size() < k)
    throw Error(std::to_string(y.size()) + " rows cannot fill k = " + std::to_string(k) + " folds");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  std::size_t next = 0;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i : cls[c]) {
      plan.folds[next].push_back(i);
      next = (next + 1) % k;
    }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

LabelVector subset(const LabelVector& y, std::span<const std::size_t> positions) {
  LabelVector out;
  out.outcome = y.outcome;
  for (std::size_t i : positions) {
    out.y.push_back(y.y.at(i));
    if (i < y.kept_rows.size()) out.kept_rows.push_back(y.kept_rows[i]);
    if (i < y.row_ids.size()) out.row_ids.push_back(y.row_ids[i]);
  }
  return out;
}

GridResult grid_search(const std::vector<Hyperparams>& grid, const EncodedMatrix& X,
                       std::span<const int> y, const FoldPlan& plan, std::uint64_t seed,
                       bool parallel) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");
  if (plan.folds.size() < 2) throw ConfigError("fold plan needs at least two folds");
  if (y.size() != X.rows) throw Error("design matrix and labels differ in length");
  const std::size_t G = grid.size(), K = plan.folds.size();
  std::vector<double> auc(G * K, 0.0);
  std::vector<std::string> err(G * K);

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t job = 0; job < G * K; ++job) {
    const std::size_t g = job / K, f = job % K;
    try {
      const auto train = plan.training_rows(f);
      const auto& val = plan.folds[f];
      const EncodedMatrix Xt = X.take_rows(train);
      const EncodedMatrix Xv = X.take_rows(val);
      std::vector<int> yt, yv;
      for (auto i : train) yt.push_back(y[i]);
      for (auto i : val) yv.push_back(y[i]);
      const TrainedModel m = fit(Xt, yt, grid[g], derive_seed(seed, g, f), false);
      const auto a = auroc(m.predict_proba(Xv), yv);
      if (!a) throw Error("validation fold has a single class");
      auc[job] = *a;
    } catch (const std::exception& e) {
      err[job] = "fold " + std::to_string(f) + ": " + e.what();
    }
  }

  GridResult r;
  r.points.resize(G);
  bool any = false;
  for (std::size_t g = 0; g < G; ++g) {
    GridPoint& pt = r.points[g];
    pt.hp = grid[g];
    for (std::size_t f = 0; f < K; ++f) {
      if (!err[g * K + f].empty() && pt.error.empty()) pt.error = err[g * K + f];
      pt.fold_auroc.push_back(auc[g * K + f]);
    }
    if (pt.failed()) {
      pt.fold_auroc.clear();
      continue;
    }
    pt.mean_auroc = std::accumulate(pt.fold_auroc.begin(), pt.fold_auroc.end(), 0.0) /
                    static_cast<double>(K);
    if (!any || *pt.mean_auroc > *r.points[r.best].mean_auroc) r.best = g;
    any = true;
  }
  if (!any) {
    std::ostringstream os;
    os << "every grid point failed:";
    for (const auto& pt : r.points) os << "\n  " << describe(pt.hp) << ": " << pt.error;
    throw Error(os.str());
  }
  return r;
}

std::vector<Hyperparams> default_grid(Family f) {
  switch (f) {
    case Family::kLogistic: {
      std::vector<Hyperparams> g;
      for (double l : {1e-4, 1e-2, 1.0}) g.push_back(LogisticParams{l, 100, 1e-8});
      return g;
    }
    case Family::kNaiveBayes: return {NaiveBayesParams{1.0, 1e-9}};
    case Family::kTree: return {TreeParams{3, 1}, TreeParams{6, 1}};
    case Family::kRandomForest: return {ForestParams{50, 8, 0, true, 1}};
    case Family::kAdaBoost: return {AdaBoostParams{50, 1}};
    case Family::kGradBoost:
      return {GradBoostParams{100, 0.1, 2, 1.0, 0.0, 0.1}, GradBoostParams{100, 0.1, 3, 1.0, 0.0, 0.1}};
    case Family::kMlp: return {MlpParams{16, 0.05, 20, 32, 1e-4}};
  }
  return {};
}

SelectionResult select_best(const std::vector<Candidate>& c) {
  if (c.empty()) throw Error("no candidates to select from");
  auto auc = [](const Candidate& x) { return x.ci[Metric::kAuroc].point.value_or(-1.0); };
  double top = -1.0;
  for (const auto& x : c) top = std::max(top, auc(x));
  std::size_t best = c.size();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (auc(c[i]) < top - kAurocTieTolerance) continue;
    if (best == c.size()) {
      best = i;
      continue;
    }
    const Candidate& a = c[i];
    const Candidate& b = c[best];
    if (a.cost != b.cost) {
      if (a.cost < b.cost) best = i;
      continue;
    }
    if (interpretability_rank(a.family) < interpretability_rank(b.family)) best = i;
  }
  return {best, c[best]};
}

}  // namespace periop
