#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "periop/data_model.hpp"
#include "periop/encode.hpp"
#include "periop/metrics.hpp"
#include "periop/models.hpp"

namespace periop {

inline constexpr double kDefaultTestFraction = 0.2;
inline constexpr std::size_t kDefaultFolds = 5;
inline constexpr double kAurocTieTolerance = 0.005;

struct SplitResult {
  std::vector<std::size_t> train;  // positions into the label vector, ascending
  std::vector<std::size_t> test;
};

// Stratified hold-out. Within each class, rows are ordered by a hash of
// (seed, row id), so membership follows row identity, not input order.
// Each class contributes round(test_frac * n_c) rows, clamped to [1, n_c - 1].
SplitResult train_test_split(const LabelVector& y, double test_frac, std::uint64_t seed);

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> folds;  // validation positions per fold
  std::uint64_t seed = 0;

  std::vector<std::size_t> training_rows(std::size_t fold) const;
  // Same folds expressed in another index space: position i becomes rows[i].
  FoldPlan remap(std::span<const std::size_t> rows) const;
};

// Class-wise round robin over the hashed order; the positive class continues
// where the negative class stopped, so fold sizes and per-fold positive
// counts each differ by at most one.
FoldPlan stratified_kfold(const LabelVector& y, std::size_t k, std::uint64_t seed);

LabelVector subset(const LabelVector& y, std::span<const std::size_t> positions);

struct GridPoint {
  Hyperparams hp;
  std::vector<double> fold_auroc;
  std::optional<double> mean_auroc;
  std::string error;  // non-empty when the point was disqualified

  bool failed() const { return !error.empty(); }
};

struct GridResult {
  std::size_t best = 0;
  std::vector<GridPoint> points;

  const Hyperparams& best_hp() const { return points[best].hp; }
  double best_auroc() const { return *points[best].mean_auroc; }
};

// Mean validation AUROC per grid point; argmax with ties to the earlier
// point. Only rows named by the plan are read. Throws Error listing every
// failure if no point survives.
GridResult grid_search(const std::vector<Hyperparams>& grid, const EncodedMatrix& X,
                       std::span<const int> y, const FoldPlan& plan, std::uint64_t seed,
                       bool parallel = true);

std::vector<Hyperparams> default_grid(Family f);

struct Candidate {
  Family family = Family::kLogistic;
  VariantKind variant = VariantKind::kIntraOp;
  Hyperparams hp;
  MetricCI ci;
  double cost = 0;  // fit_cost of the refit
};

struct SelectionResult {
  std::size_t index = 0;
  Candidate winner;
};

// Highest test AUROC wins; candidates within kAurocTieTolerance of the best
// are ranked by cost, then interpretability rank, then input order.
SelectionResult select_best(const std::vector<Candidate>& candidates);

}  // namespace periop
