#include "periop/reference.hpp"

#include <algorithm>
#include <numeric>

#include "periop/errors.hpp"
#include "periop/random.hpp"

namespace periop {

namespace {

struct Grower {
  const EncodedMatrix& X;
  const RowStats& st;
  const GrowParams& gp;
  Tree tree;

  int grow(const std::vector<std::uint32_t>& rows, int depth, std::uint64_t key) {
    double a = 0, b = 0, c = 0;
    for (auto i : rows) {
      a += st.a[i];
      b += st.b[i];
      c += st.cover[i];
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0, -1, -1, leaf_value(gp, a, b), c});

    const bool depth_ok = gp.max_depth < 0 || depth < gp.max_depth;
    const bool pure = gp.criterion == SplitCriterion::kGini && (b == 0 || b == a);
    if (!depth_ok || pure || c < 2 * gp.min_samples_leaf) return id;

    const std::size_t p = X.cols;
    std::vector<bool> valid(p, false);
    std::vector<double> gain(p, 0), thr(p, 0);
    for (std::size_t f = 0; f < p; ++f) {
      std::vector<std::uint32_t> sorted = rows;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::uint32_t x, std::uint32_t y) { return X.at(x, f) < X.at(y, f); });
      double al = 0, bl = 0, cl = 0;
      for (std::size_t k = 0; k < sorted.size(); ++k) {
        const auto i = sorted[k];
        const double v = X.at(i, f);
        if (k > 0 && v != X.at(sorted[k - 1], f)) {
          double g;
          if (split_gain(gp, a, b, c, al, bl, cl, g) && (!valid[f] || g > gain[f])) {
            const double last = X.at(sorted[k - 1], f);
            double t = 0.5 * (last + v);
            if (!(t < v)) t = last;
            valid[f] = true;
            gain[f] = g;
            thr[f] = t;
          }
        }
        al += st.a[i];
        bl += st.b[i];
        cl += st.cover[i];
      }
    }

    const std::size_t m = (gp.features_per_split == 0 || gp.features_per_split >= p)
                              ? p
                              : gp.features_per_split;
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    if (m < p) order = feature_permutation(key, p);
    int bf = -1;
    for (std::size_t k = 0; k < p; ++k) {
      const std::size_t f = order[k];
      if (valid[f] && (bf < 0 || gain[f] > gain[static_cast<std::size_t>(bf)] ||
                       (gain[f] == gain[static_cast<std::size_t>(bf)] && static_cast<int>(f) < bf)))
        bf = static_cast<int>(f);
      if (k + 1 >= m && bf >= 0) break;
    }
    if (bf < 0) return id;

    const auto fu = static_cast<std::size_t>(bf);
    std::vector<std::uint32_t> left, right;
    for (auto i : rows) (X.at(i, fu) <= thr[fu] ? left : right).push_back(i);
    const int l = grow(left, depth + 1, child_key(key, 1));
    const int r = grow(right, depth + 1, child_key(key, 2));
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = bf;
    node.threshold = thr[fu];
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

Tree grow_tree_reference(const EncodedMatrix& X, const RowStats& stats, const GrowParams& gp,
                         std::uint64_t seed) {
  if (stats.a.size() != X.rows || stats.b.size() != X.rows || stats.cover.size() != X.rows)
    throw Error("row statistics do not match the design matrix");
  std::vector<std::uint32_t> rows;
  for (std::size_t i = 0; i < X.rows; ++i)
    if (stats.cover[i] > 0) rows.push_back(static_cast<std::uint32_t>(i));
  Grower g{X, stats, gp, {}};
  g.grow(rows, 0, derive_seed(seed, 0x7EE));
  return std::move(g.tree);
}

}  // namespace periop
