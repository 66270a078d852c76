#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "periop/errors.hpp"
#include "periop/reference.hpp"
#include "periop/tree.hpp"

using namespace periop;

namespace {

void check_covers(const Tree& t) {
  for (const auto& n : t.nodes)
    if (!n.is_leaf())
      EXPECT_DOUBLE_EQ(n.cover, t.nodes[n.left].cover + t.nodes[n.right].cover);
}

// Coarse feature values so thresholds tie often.
EncodedMatrix coarse_matrix(Stream& s, std::size_t n, std::size_t p) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  for (auto& r : rows)
    for (double& v : r) v = static_cast<double>(s.below(6)) / 5.0;
  return EncodedMatrix::from_rows(rows);
}

RowStats gini_stats(Stream& s, const EncodedMatrix& X, bool multiplicity) {
  RowStats st;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double c = multiplicity ? static_cast<double>(s.below(3)) : 1.0;
    const int y = X.at(i, 0) + 0.3 * s.uniform() > 0.6 ? 1 : 0;
    st.cover.push_back(c);
    st.a.push_back(c);
    st.b.push_back(c * y);
  }
  return st;
}

RowStats newton_stats(Stream& s, const EncodedMatrix& X) {
  RowStats st;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double p = 0.2 + 0.6 * s.uniform();
    const int y = X.at(i, 1) > 0.4 ? 1 : 0;
    st.a.push_back(p - y);
    st.b.push_back(p * (1 - p));
    st.cover.push_back(1.0);
  }
  return st;
}

}  // namespace

TEST(Tree, GrowerMatchesReferenceGini) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Stream s(seed, 1);
    const std::size_t n = 20 + s.below(80), p = 1 + s.below(6);
    const auto X = coarse_matrix(s, n, p);
    const auto st = gini_stats(s, X, seed % 2 == 1);
    GrowParams gp;
    gp.max_depth = seed % 3 == 0 ? -1 : static_cast<int>(1 + s.below(5));
    gp.min_samples_leaf = static_cast<double>(1 + s.below(3));
    gp.features_per_split = seed % 4 == 0 ? 0 : 1 + s.below(p);
    const PresortedMatrix ps(X);
    const Tree fast = grow_tree(ps, st, gp, seed * 7, true);
    const Tree serial = grow_tree(ps, st, gp, seed * 7, false);
    const Tree ref = grow_tree_reference(X, st, gp, seed * 7);
    EXPECT_TRUE(same_structure(fast, ref)) << "seed " << seed;
    EXPECT_EQ(fast, serial);
    check_covers(fast);
  }
}

TEST(Tree, GrowerMatchesReferenceNewton) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Stream s(seed, 2);
    const std::size_t n = 20 + s.below(80), p = 2 + s.below(5);
    const auto X = coarse_matrix(s, n, p);
    const auto st = newton_stats(s, X);
    GrowParams gp;
    gp.criterion = SplitCriterion::kNewton;
    gp.max_depth = static_cast<int>(1 + s.below(4));
    gp.l2_lambda = 0.5 + s.uniform();
    gp.gamma = seed % 2 ? 0.0 : 0.01;
    gp.learning_rate = 0.3;
    gp.features_per_split = seed % 3 == 0 ? 1 : 0;
    const PresortedMatrix ps(X);
    const Tree fast = grow_tree(ps, st, gp, seed, true);
    const Tree ref = grow_tree_reference(X, st, gp, seed);
    EXPECT_TRUE(same_structure(fast, ref)) << "seed " << seed;
    check_covers(fast);
  }
}

TEST(Tree, NewtonGainAndLeafFormulas) {
  GrowParams gp;
  gp.criterion = SplitCriterion::kNewton;
  gp.l2_lambda = 1.0;
  gp.gamma = 0.0;
  gp.min_child_hessian = 0.1;
  gp.learning_rate = 1.0;
  // g = [-.5, -.5, .5, .5], h = .25 each, split after the first two rows.
  double gain = 0;
  ASSERT_TRUE(split_gain(gp, 0.0, 1.0, 4, -1.0, 0.5, 2, gain));
  const double expect = 0.5 * (1.0 / 1.5 + 1.0 / 1.5 - 0.0 / 2.0);
  EXPECT_NEAR(gain, expect, 1e-15);
  EXPECT_NEAR(leaf_value(gp, -1.0, 0.5), 2.0 / 3.0, 1e-15);
  gp.gamma = 1.0;  // gain 2/3 - 1 <= 0 is rejected
  EXPECT_FALSE(split_gain(gp, 0.0, 1.0, 4, -1.0, 0.5, 2, gain));
  gp.gamma = 0;
  gp.min_child_hessian = 0.6;
  EXPECT_FALSE(split_gain(gp, 0.0, 1.0, 4, -1.0, 0.5, 2, gain));
}

TEST(Tree, GiniLeafIsPositiveFraction) {
  GrowParams gp;
  EXPECT_DOUBLE_EQ(leaf_value(gp, 4.0, 1.0), 0.25);
}

TEST(Tree, JsonRoundTripAndPrediction) {
  Stream s(3, 3);
  const Tree t = oracle::random_tree(s, 5, 3);
  const Tree back = tree_from_json(to_json(t));
  EXPECT_EQ(t, back);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(5);
    for (double& v : x) v = s.uniform();
    EXPECT_EQ(t.predict(x), back.predict(x));
    EXPECT_EQ(t.predict(x), t.nodes[t.leaf_index(x)].value);
  }
}

TEST(Tree, FeaturePermutationIsPermutation) {
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto perm = feature_permutation(k, 9);
    std::sort(perm.begin(), perm.end());
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(perm[i], i);
  }
  EXPECT_NE(child_key(5, 0), child_key(5, 1));
}
