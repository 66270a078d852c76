#include <cmath>

#include <gtest/gtest.h>
#include <omp.h>

#include "oracles.hpp"
#include "periop/errors.hpp"
#include "periop/models.hpp"

using namespace periop;

namespace {

struct Data {
  EncodedMatrix X;
  std::vector<int> y;
};

Data toy_data(std::uint64_t seed, std::size_t n, std::size_t p) {
  Stream s(seed, 9);
  Data d{oracle::random_matrix(s, n, p), {}};
  for (std::size_t i = 0; i < n; ++i) {
    double z = -0.5;
    for (std::size_t j = 0; j < p; ++j) z += (j % 2 ? -1.5 : 2.0) * d.X.at(i, j) / static_cast<double>(p);
    d.y.push_back(s.uniform() < oracle::sigmoid(4 * z) ? 1 : 0);
  }
  d.y[0] = 1;
  d.y[1] = 0;
  return d;
}

Hyperparams small_hp(Family f) {
  switch (f) {
    case Family::kRandomForest: return ForestParams{10, 5, 0, true, 1};
    case Family::kAdaBoost: return AdaBoostParams{15, 1};
    case Family::kGradBoost: return GradBoostParams{20, 0.2, 3, 1.0, 0.0, 0.1};
    case Family::kMlp: return MlpParams{6, 0.05, 10, 16, 1e-4};
    default: return default_hyperparams(f);
  }
}

std::vector<Tree> trees_of(const TrainedModel& m) {
  if (auto e = m.tree_ensemble()) return e->trees;
  return {};
}

}  // namespace

TEST(GradBoost, HandCaseMatchesScalarOracle) {
  const auto X = EncodedMatrix::from_rows({{0}, {0}, {1}, {1}});
  const std::vector<int> y = {1, 1, 0, 0};
  const TrainedModel m = fit(X, y, GradBoostParams{1, 1.0, 1, 1.0, 0.0, 0.1}, 0);
  // Scalar oracle: base logit 0, p = 0.5, g = p - y, h = p (1 - p).
  double G = 0, H = 0;
  for (int i = 0; i < 2; ++i) {
    G += 0.5 - y[i];
    H += 0.25;
  }
  const double w = -G / (H + 1.0);
  EXPECT_NEAR(w, 2.0 / 3.0, 1e-15);
  const auto& st = std::get<GradBoostState>(m.state);
  EXPECT_EQ(st.base_score, 0.0);
  ASSERT_EQ(st.trees.size(), 1u);
  EXPECT_NEAR(st.trees[0].predict(std::vector<double>{0.0}), w, 1e-12);
  const auto p = m.predict_proba(EncodedMatrix::from_rows({{0}, {1}}));
  EXPECT_NEAR(p[0], oracle::sigmoid(w), 1e-12);
  EXPECT_NEAR(p[0], 0.6607, 1e-4);
  EXPECT_NEAR(p[1], oracle::sigmoid(-w), 1e-12);
}

TEST(GradBoost, TrainLossNonIncreasing) {
  const auto d = toy_data(4, 300, 5);
  const auto m = fit(d.X, d.y, GradBoostParams{30, 0.3, 3, 1.0, 0.0, 0.1}, 1);
  const auto& loss = std::get<GradBoostState>(m.state).train_loss;
  ASSERT_EQ(loss.size(), 31u);
  for (std::size_t r = 1; r < loss.size(); ++r) EXPECT_LE(loss[r], loss[r - 1] + 1e-12);
}

TEST(GradBoost, DepthZeroIsConstant) {
  const auto d = toy_data(5, 100, 3);
  const auto m = fit(d.X, d.y, GradBoostParams{5, 0.1, 0, 1.0, 0.0, 0.1}, 1);
  const auto p = m.predict_proba(d.X);
  for (double v : p) EXPECT_EQ(v, p[0]);
}

TEST(Logistic, HugeRidgeGivesPrior) {
  const auto d = toy_data(6, 400, 4);
  const auto m = fit(d.X, d.y, LogisticParams{1e9, 100, 1e-10}, 0);
  const auto& st = std::get<LogisticState>(m.state);
  for (double w : st.w) EXPECT_LT(std::abs(w), 1e-6);
  double prior = 0;
  for (int v : d.y) prior += v;
  prior /= static_cast<double>(d.y.size());
  for (double p : m.predict_proba(d.X)) EXPECT_NEAR(p, prior, 1e-6);
}

TEST(Logistic, GradientAtZeroMatchesClosedForm) {
  const auto d = toy_data(7, 50, 3);
  std::vector<double> theta(4, 0.0), grad;
  logistic_loss(d.X, d.y, theta, 0.3, &grad);
  for (std::size_t j = 0; j <= 3; ++j) {
    double g = 0;
    for (std::size_t i = 0; i < 50; ++i) g += (0.5 - d.y[i]) * (j < 3 ? d.X.at(i, j) : 1.0);
    EXPECT_NEAR(grad[j], g / 50, 1e-14);
  }
}

TEST(GradientCheck, SmallInstances) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = toy_data(seed, 30, 3);
    EXPECT_LT(loss_gradient_check(d.X, d.y, LogisticParams{0.1, 10, 1e-8}, 1e-5, seed), 1e-4);
    EXPECT_LT(loss_gradient_check(d.X, d.y, MlpParams{4, 0.05, 1, 8, 0.01}, 1e-5, seed), 1e-4);
  }
  EncodedMatrix empty = EncodedMatrix::from_rows({}, {"a"});
  EXPECT_THROW(loss_gradient_check(empty, {}, LogisticParams{}, 1e-5, 0), Error);
  const auto d = toy_data(1, 10, 2);
  EXPECT_THROW(loss_gradient_check(d.X, d.y, TreeParams{}, 1e-5, 0), ConfigError);
}

TEST(NaiveBayes, SymmetricMidpoint) {
  const auto X = EncodedMatrix::from_rows({{0.1}, {0.2}, {0.3}, {0.7}, {0.8}, {0.9}});
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  const auto m = fit(X, y, NaiveBayesParams{}, 0);
  const auto p = m.predict_proba(EncodedMatrix::from_rows({{0.5}, {0.2}, {0.8}}));
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_LT(p[1], 0.5);
  EXPECT_GT(p[2], 0.5);
}

TEST(NaiveBayes, SingleClassDegradesGracefully) {
  const auto X = EncodedMatrix::from_rows({{0.1}, {0.2}, {0.3}});
  const auto m = fit(X, std::vector<int>{1, 1, 1}, NaiveBayesParams{}, 0);
  for (double p : m.predict_proba(X)) {
    EXPECT_TRUE(std::isfinite(p));
    EXPECT_GE(p, 0.5);
  }
}

TEST(Forest, SingleTreeMemorizes) {
  const auto d = toy_data(8, 120, 4);
  const auto m = fit(d.X, d.y, ForestParams{1, -1, 0, false, 1}, 3);
  const auto p = m.predict_proba(d.X);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], static_cast<double>(d.y[i]));
}

TEST(Forest, NoBootstrapAllFeaturesIsCart) {
  const auto d = toy_data(9, 200, 5);
  const auto f = fit(d.X, d.y, ForestParams{1, 4, 5, false, 2}, 11);
  const auto t = fit(d.X, d.y, TreeParams{4, 2}, 11);
  EXPECT_EQ(std::get<ForestState>(f.state).trees[0], std::get<TreeState>(t.state).tree);
}

TEST(AdaBoost, AcceptedRoundsHavePositiveAlpha) {
  const auto d = toy_data(10, 200, 4);
  const auto m = fit(d.X, d.y, AdaBoostParams{25, 1}, 0);
  const auto& st = std::get<AdaBoostState>(m.state);
  EXPECT_EQ(st.trees.size() + static_cast<std::size_t>(st.skipped_rounds), 25u);
  // alpha > 0 exactly when the weighted error is below 1/2.
  for (double a : st.alphas) EXPECT_GT(a, 0.0);
}

TEST(Models, AllFamiliesBoundedFiniteAndCoverConsistent) {
  const auto d = toy_data(11, 250, 6);
  Stream s(1, 2);
  std::vector<std::vector<double>> wild(40, std::vector<double>(6));
  for (auto& r : wild)
    for (double& v : r) v = (s.uniform() - 0.5) * 1e6;
  const auto W = EncodedMatrix::from_rows(wild);
  for (Family f : kAllFamilies) {
    const auto m = fit(d.X, d.y, small_hp(f), 5);
    for (const auto* X : {&d.X, &W})
      for (double p : m.predict_proba(*X)) {
        EXPECT_TRUE(std::isfinite(p)) << to_string(f);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
      }
    for (const Tree& t : trees_of(m))
      for (const auto& n : t.nodes)
        if (!n.is_leaf()) EXPECT_DOUBLE_EQ(n.cover, t.nodes[n.left].cover + t.nodes[n.right].cover);
    EXPECT_TRUE(m.predict_proba(d.X.take_rows(std::vector<std::size_t>{})).empty());
  }
}

TEST(Models, DeterministicAcrossThreadCounts) {
  const auto d = toy_data(12, 300, 6);
  const int before = omp_get_max_threads();
  for (Family f : kAllFamilies) {
    omp_set_num_threads(1);
    const auto a = to_json(fit(d.X, d.y, small_hp(f), 21)).dump();
    omp_set_num_threads(4);
    const auto b = to_json(fit(d.X, d.y, small_hp(f), 21)).dump();
    const auto c = to_json(fit(d.X, d.y, small_hp(f), 21, false)).dump();
    EXPECT_EQ(a, b) << to_string(f);
    EXPECT_EQ(a, c) << to_string(f);
  }
  omp_set_num_threads(before);
}

TEST(Models, JsonRoundTripPredictsIdentically) {
  const auto d = toy_data(13, 200, 4);
  for (Family f : kAllFamilies) {
    const auto m = fit(d.X, d.y, small_hp(f), 2);
    const auto back = model_from_json(to_json(m));
    EXPECT_EQ(m.predict_proba(d.X), back.predict_proba(d.X)) << to_string(f);
    EXPECT_EQ(m.predict_raw(d.X), back.predict_raw(d.X)) << to_string(f);
  }
}

TEST(Models, ProvenanceMismatchNamesColumn) {
  const auto d = toy_data(14, 60, 3);
  const auto m = fit(d.X, d.y, LogisticParams{}, 0);
  auto X = d.X;
  X.columns[1].source = "renamed";
  try {
    m.predict_proba(X);
    FAIL() << "expected Error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos) << e.what();
  }
}

TEST(Models, BadInputsRejected) {
  const auto d = toy_data(15, 40, 3);
  EXPECT_THROW(fit(d.X, std::vector<int>(40, 1), LogisticParams{}, 0), Error);
  auto X = d.X;
  X.at(3, 1) = std::nan("");
  EXPECT_THROW(fit(X, d.y, TreeParams{}, 0), Error);
  EXPECT_THROW(fit(d.X, d.y, ForestParams{0, 3, 0, true, 1}, 0), ConfigError);
  EXPECT_THROW(fit(d.X, d.y, LogisticParams{-1, 10, 1e-8}, 0), ConfigError);
}

TEST(Models, HyperparamJsonRoundTrip) {
  for (Family f : kAllFamilies) {
    const auto hp = small_hp(f);
    EXPECT_EQ(to_json(hyperparams_from_json(to_json(hp))).dump(), to_json(hp).dump());
    EXPECT_EQ(family_of(hp), f);
  }
}

TEST(Models, FitCostOrdersFamilies) {
  const std::size_t n = 8000, p = 30;
  EXPECT_LT(fit_cost(LogisticParams{}, n, p), fit_cost(GradBoostParams{}, n, p));
  EXPECT_LT(fit_cost(TreeParams{}, n, p), fit_cost(ForestParams{}, n, p));
  EXPECT_LT(fit_cost(NaiveBayesParams{}, n, p), fit_cost(LogisticParams{}, n, p));
}
