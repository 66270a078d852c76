#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "periop/encode.hpp"

namespace periop {

// Rows with x[feature] <= threshold go left. Leaves have feature == -1.
// cover is the (multiplicity-weighted) number of training rows reaching the
// node, so for every internal node cover == left.cover + right.cover.
struct TreeNode {
  int feature = -1;
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;
  double cover = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int leaf_index(std::span<const double> x) const;
  int depth() const;
  std::size_t leaves() const;
  bool operator==(const Tree&) const = default;
};

// Same shape, splits, values and covers, ignoring node numbering.
bool same_structure(const Tree& a, const Tree& b);

nlohmann::json to_json(const Tree& t);
Tree tree_from_json(const nlohmann::json& j);

enum class SplitCriterion { kGini, kNewton };

struct GrowParams {
  SplitCriterion criterion = SplitCriterion::kGini;
  int max_depth = -1;                 // -1: unlimited
  double min_samples_leaf = 1;        // on cover
  std::size_t features_per_split = 0;  // 0 or >= p: every feature
  // Newton only
  double l2_lambda = 1.0;
  double gamma = 0.0;
  double min_child_hessian = 0.1;
  double learning_rate = 1.0;
};

// Per-row statistics. Gini: a = sample weight, b = weight * label.
// Newton: a = gradient, b = hessian. cover = row multiplicity (0 = absent).
struct RowStats {
  std::vector<double> a, b, cover;
};

// Gini: leaf value is the weighted positive fraction b/a.
// Newton: -lr * G / (H + lambda).
double leaf_value(const GrowParams& gp, double a, double b);

// Split score of a candidate; higher is better. Returns false if the split
// is not admissible (leaf size, child hessian, or non-positive Newton gain).
bool split_gain(const GrowParams& gp, double a, double b, double c, double al, double bl, double cl,
                double& gain);

// Node-level feature order for subsampled splits.
std::uint64_t child_key(std::uint64_t key, int side);
std::vector<std::size_t> feature_permutation(std::uint64_t key, std::size_t p);

// Column orders computed once per design matrix and shared by every tree
// grown on it.
class PresortedMatrix {
 public:
  explicit PresortedMatrix(const EncodedMatrix& X);

  const EncodedMatrix& matrix() const { return *X_; }
  std::span<const std::uint32_t> order(std::size_t feature) const {
    return {order_.data() + feature * X_->rows, X_->rows};
  }

 private:
  const EncodedMatrix* X_;
  std::vector<std::uint32_t> order_;  // per column: rows by (value, row index)
};

// Level-wise grower. With `parallel`, each level's split search runs over
// features in parallel; the tree is identical either way.
Tree grow_tree(const PresortedMatrix& X, const RowStats& stats, const GrowParams& gp,
               std::uint64_t seed, bool parallel = true);

}  // namespace periop
