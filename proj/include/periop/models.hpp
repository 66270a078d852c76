#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "periop/encode.hpp"
#include "periop/tree.hpp"

namespace periop {

enum class Family { kLogistic, kNaiveBayes, kTree, kRandomForest, kAdaBoost, kGradBoost, kMlp };

inline constexpr std::array<Family, 7> kAllFamilies = {
    Family::kLogistic,  Family::kNaiveBayes, Family::kTree, Family::kRandomForest,
    Family::kAdaBoost,  Family::kGradBoost,  Family::kMlp};

std::string_view to_string(Family f);
std::optional<Family> parse_family(std::string_view s);
std::string_view display_name(Family f);  // "LR", "GradBoost", ...

// Lower is easier to read; breaks near-ties between grid winners.
int interpretability_rank(Family f);

struct LogisticParams {
  double l2_lambda = 1e-2;
  int max_iter = 100;
  double tol = 1e-8;
};
struct NaiveBayesParams {
  double laplace_alpha = 1.0;
  double var_floor = 1e-9;
};
struct TreeParams {
  int max_depth = 6;  // -1: unlimited
  int min_samples_leaf = 1;
};
struct ForestParams {
  int n_trees = 50;
  int max_depth = 8;  // -1: unlimited
  int features_per_split = 0;  // 0: ceil(sqrt(p))
  bool bootstrap = true;
  int min_samples_leaf = 1;
};
struct AdaBoostParams {
  int n_rounds = 50;
  int stump_depth = 1;
};
struct GradBoostParams {
  int n_rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 3;  // 0 gives a constant model
  double l2_lambda = 1.0;
  double gamma_min_gain = 0.0;
  double min_child_hessian = 0.1;
};
struct MlpParams {
  int hidden_width = 16;
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 32;
  double l2_lambda = 1e-4;
};

using Hyperparams = std::variant<LogisticParams, NaiveBayesParams, TreeParams, ForestParams,
                                 AdaBoostParams, GradBoostParams, MlpParams>;

Family family_of(const Hyperparams& hp);
Hyperparams default_hyperparams(Family f);
void validate(const Hyperparams& hp);  // throws ConfigError
std::string describe(const Hyperparams& hp);
nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

// Deterministic estimate of single-core fit time in nanoseconds. Used in
// place of measured wall-clock time when ranking tied candidates.
double fit_cost(const Hyperparams& hp, std::size_t n, std::size_t p);

enum class OutputSpace { kProbability, kLogOdds };
std::string_view to_string(OutputSpace s);

// Additive tree model: f(x) = base + sum_t weights[t] * trees[t](x).
struct TreeEnsemble {
  std::vector<Tree> trees;
  std::vector<double> weights;
  double base = 0;
  OutputSpace space = OutputSpace::kProbability;

  double predict(std::span<const double> x) const;
};

struct LogisticState {
  std::vector<double> w;
  double intercept = 0;
  int iterations = 0;
  double grad_norm = 0;
};
struct NaiveBayesState {
  double log_prior[2] = {0, 0};
  std::vector<std::uint8_t> gaussian;  // per column: 1 Gaussian, 0 Bernoulli
  std::vector<double> mean[2], var[2], p1[2];
};
struct TreeState {
  Tree tree;
};
struct ForestState {
  std::vector<Tree> trees;
};
struct AdaBoostState {
  std::vector<Tree> trees;  // leaf values are alpha_t * (+1 / -1)
  std::vector<double> alphas;
  int skipped_rounds = 0;
};
struct GradBoostState {
  double base_score = 0;  // log-odds
  std::vector<Tree> trees;  // leaf values include the learning rate
  std::vector<double> train_loss;  // mean log-loss before round 1 and after each round
};
struct MlpState {
  int hidden = 0;
  std::size_t inputs = 0;
  std::vector<double> w1;  // hidden x inputs, row-major
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0;
};

using ModelState = std::variant<LogisticState, NaiveBayesState, TreeState, ForestState,
                                AdaBoostState, GradBoostState, MlpState>;

struct TrainedModel {
  Family family = Family::kLogistic;
  Hyperparams hp;
  std::uint64_t seed = 0;
  std::vector<ColumnInfo> columns;  // training provenance
  ModelState state;

  // Log-odds for every family but tree and forest, which are probabilities.
  OutputSpace raw_space() const;
  std::vector<double> predict_raw(const EncodedMatrix& X) const;
  std::vector<double> predict_proba(const EncodedMatrix& X) const;
  // Tree families only.
  std::optional<TreeEnsemble> tree_ensemble() const;
};

// Throws Error naming the first column whose provenance differs.
void check_provenance(const std::vector<ColumnInfo>& expected, const EncodedMatrix& X);

// `parallel` allows OpenMP inside the fit; results are identical either way.
TrainedModel fit(const EncodedMatrix& X, std::span<const int> y, const Hyperparams& hp,
                 std::uint64_t seed, bool parallel = true);

// Objective and analytic gradient, exposed for the gradient check. Parameters
// are flattened: logistic [w..., b]; mlp [w1..., b1..., w2..., b2].
double logistic_loss(const EncodedMatrix& X, std::span<const int> y, std::span<const double> theta,
                     double l2_lambda, std::vector<double>* grad = nullptr);
double mlp_loss(const EncodedMatrix& X, std::span<const int> y, std::span<const double> theta,
                int hidden, double l2_lambda, std::vector<double>* grad = nullptr);

// Max relative error between the analytic gradient and central differences
// at a random parameter point: |a - f| / max(|a|, |f|, 1e-6).
double loss_gradient_check(const EncodedMatrix& X, std::span<const int> y, const Hyperparams& hp,
                           double eps = 1e-5, std::uint64_t seed = 0);

inline constexpr int kModelFormatVersion = 1;
nlohmann::json to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);

}  // namespace periop
