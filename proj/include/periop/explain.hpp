#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "periop/encode.hpp"
#include "periop/models.hpp"
#include "periop/tree.hpp"

namespace periop {

// phi is row-major rows x cols. For every row,
// sum_j phi(i, j) + base_value == model output in `space`.
struct ShapMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> phi;
  double base_value = 0;
  OutputSpace space = OutputSpace::kProbability;
  std::vector<ColumnInfo> columns;
  std::string method;  // "tree", "linear" or "sampling"

  double at(std::size_t i, std::size_t j) const { return phi[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return phi[i * cols + j]; }
  double reconstruct(std::size_t i) const;
};

// ---------------------------------------------------------------------------
// Exact path-dependent TreeSHAP

// Cover-weighted mean of the leaf values: the tree's expected output.
double expected_value(const Tree& t);

// Adds weight * phi(x) for one tree into `phi` (length >= max feature + 1).
// Throws Error if any internal node's cover is not the sum of its children's.
void tree_shap_row(const Tree& t, std::span<const double> x, double weight, std::span<double> phi);

ShapMatrix tree_shap(const TreeEnsemble& e, const EncodedMatrix& X, bool parallel = true);
ShapMatrix tree_shap(const TrainedModel& m, const EncodedMatrix& X, bool parallel = true);

// ---------------------------------------------------------------------------
// Model-specific and model-agnostic explainers

// Exact for a linear logit under feature independence, in log-odds.
ShapMatrix linear_shap(const TrainedModel& m, const EncodedMatrix& X, const EncodedMatrix& background);

using BatchPredictor = std::function<std::vector<double>(const EncodedMatrix&)>;

struct SamplingResult {
  std::vector<double> phi;
  double base_value = 0;
};

// Permutation sampling with background imputation. Each sample draws a
// permutation and a background row and walks from the background row to x
// one feature at a time. The residual against f(x) - mean f(background) is
// then spread over features in proportion to |phi| (evenly if all are zero).
SamplingResult sampling_shap(const BatchPredictor& predict, std::span<const double> x,
                             const EncodedMatrix& background, std::size_t n_samples,
                             std::uint64_t seed);

struct ExplainOptions {
  std::size_t background_cap = 1000;
  std::size_t sampling_rows_cap = 200;
  std::size_t n_samples = 64;  // raised to p when smaller
  std::uint64_t seed = 0;
  bool parallel = true;
};

// Picks the explainer for the model family: trees -> tree_shap (raw space),
// logistic -> linear_shap, naive Bayes and MLP -> sampling_shap on
// probabilities over at most sampling_rows_cap rows (the first rows of X).
ShapMatrix explain_model(const TrainedModel& m, const EncodedMatrix& X,
                         const EncodedMatrix& background, const ExplainOptions& opt = {});

// Model output in the space `explain_model` reports for this family.
std::vector<double> explained_output(const TrainedModel& m, const EncodedMatrix& X);

// Seeded subsample of at most `cap` rows (all rows, in order, when fewer).
EncodedMatrix background_sample(const EncodedMatrix& X, std::size_t cap, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rankings

struct FeatureImpact {
  std::size_t column = 0;
  std::string name;
  double mean_abs_phi = 0;
  std::size_t rank = 0;  // 0-based
  // Spearman correlation between the feature's values and its phi column;
  // 0 when either is constant.
  double directionality = 0;
};

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// Top-k columns by mean |phi| (ties to the lower column index).
std::vector<FeatureImpact> rank_impacts(const ShapMatrix& shap, const EncodedMatrix& X,
                                        std::size_t k = 10);

void write_shap_csv(const ShapMatrix& shap, const std::filesystem::path& path);
void write_impacts_csv(const std::vector<FeatureImpact>& impacts, const std::filesystem::path& path);

// Beeswarm summary plot; layout described in the README.
std::string beeswarm_svg(const ShapMatrix& shap, const EncodedMatrix& X,
                         const std::vector<FeatureImpact>& impacts, const std::string& title);

}  // namespace periop
