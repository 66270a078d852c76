#include "periop/tree.hpp"

#include <algorithm>
#include <numeric>

#include "periop/errors.hpp"
#include "periop/random.hpp"

namespace periop {

double Tree::predict(std::span<const double> x) const {
  return nodes[static_cast<std::size_t>(leaf_index(x))].value;
}

int Tree::leaf_index(std::span<const double> x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return i;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  // Children always follow their parent in the node array.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (n.is_leaf()) continue;
    d[static_cast<std::size_t>(n.left)] = d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

std::size_t Tree::leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {
bool same_at(const Tree& a, int i, const Tree& b, int j) {
  const TreeNode& x = a.nodes[static_cast<std::size_t>(i)];
  const TreeNode& y = b.nodes[static_cast<std::size_t>(j)];
  if (x.feature != y.feature || x.value != y.value || x.cover != y.cover) return false;
  if (x.is_leaf()) return true;
  return x.threshold == y.threshold && same_at(a, x.left, b, y.left) &&
         same_at(a, x.right, b, y.right);
}
}  // namespace

bool same_structure(const Tree& a, const Tree& b) {
  if (a.nodes.empty() || b.nodes.empty()) return a.nodes.empty() && b.nodes.empty();
  return same_at(a, 0, b, 0);
}

nlohmann::json to_json(const Tree& t) {
  nlohmann::json j = {{"feature", nlohmann::json::array()},  {"threshold", nlohmann::json::array()},
                      {"left", nlohmann::json::array()},     {"right", nlohmann::json::array()},
                      {"value", nlohmann::json::array()},    {"cover", nlohmann::json::array()}};
  for (const TreeNode& n : t.nodes) {
    j["feature"].push_back(n.feature);
    j["threshold"].push_back(n.threshold);
    j["left"].push_back(n.left);
    j["right"].push_back(n.right);
    j["value"].push_back(n.value);
    j["cover"].push_back(n.cover);
  }
  return j;
}

Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  const auto f = j.at("feature").get<std::vector<int>>();
  const auto th = j.at("threshold").get<std::vector<double>>();
  const auto l = j.at("left").get<std::vector<int>>();
  const auto r = j.at("right").get<std::vector<int>>();
  const auto v = j.at("value").get<std::vector<double>>();
  const auto c = j.at("cover").get<std::vector<double>>();
  const std::size_t n = f.size();
  if (th.size() != n || l.size() != n || r.size() != n || v.size() != n || c.size() != n)
    throw Error("tree arrays differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    const auto in_range = [&](int k) { return k > static_cast<int>(i) && k < static_cast<int>(n); };
    if (f[i] >= 0 && (!in_range(l[i]) || !in_range(r[i]))) throw Error("tree child index out of range");
    t.nodes.push_back({f[i], th[i], l[i], r[i], v[i], c[i]});
  }
  return t;
}

double leaf_value(const GrowParams& gp, double a, double b) {
  if (gp.criterion == SplitCriterion::kGini) return a > 0 ? b / a : 0.0;
  return -gp.learning_rate * a / (b + gp.l2_lambda);
}

namespace {
double gini_mass(double a, double b) { return a > 0 ? b * (a - b) / a : 0.0; }
double newton_score(double g, double h, double lambda) { return g * g / (h + lambda); }
}  // namespace

bool split_gain(const GrowParams& gp, double a, double b, double c, double al, double bl, double cl,
                double& gain) {
  const double cr = c - cl;
  if (cl < gp.min_samples_leaf || cr < gp.min_samples_leaf) return false;
  const double ar = a - al, br = b - bl;
  if (gp.criterion == SplitCriterion::kGini) {
    gain = 2.0 * (gini_mass(a, b) - gini_mass(al, bl) - gini_mass(ar, br));
    return true;
  }
  if (bl < gp.min_child_hessian || br < gp.min_child_hessian) return false;
  gain = 0.5 * (newton_score(al, bl, gp.l2_lambda) + newton_score(ar, br, gp.l2_lambda) -
                newton_score(a, b, gp.l2_lambda)) -
         gp.gamma;
  return gain > 0;
}

std::uint64_t child_key(std::uint64_t key, int side) {
  return mix64(key + static_cast<std::uint64_t>(side) * 0x9E3779B97F4A7C15ULL);
}

std::vector<std::size_t> feature_permutation(std::uint64_t key, std::size_t p) {
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  Stream s(key, 0xFEA7);
  for (std::size_t i = p; i > 1; --i) std::swap(perm[i - 1], perm[s.below(i)]);
  return perm;
}

PresortedMatrix::PresortedMatrix(const EncodedMatrix& X) : X_(&X) {
  if (X.rows > std::numeric_limits<std::uint32_t>::max()) throw Error("too many rows");
  order_.resize(X.rows * X.cols);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t f = 0; f < X.cols; ++f) {
    auto* o = order_.data() + f * X.rows;
    std::iota(o, o + X.rows, 0u);
    std::stable_sort(o, o + X.rows,
                     [&](std::uint32_t a, std::uint32_t b) { return X.at(a, f) < X.at(b, f); });
  }
}

namespace {

struct Candidate {
  double gain = 0;
  double threshold = 0;
  bool valid = false;
};

struct Totals {
  double a = 0, b = 0, c = 0;
};

bool splittable(const GrowParams& gp, const Totals& t, int depth) {
  if (gp.max_depth >= 0 && depth >= gp.max_depth) return false;
  if (t.c < 2 * gp.min_samples_leaf) return false;
  if (gp.criterion == SplitCriterion::kGini && (t.b == 0 || t.b == t.a)) return false;
  return true;
}

}  // namespace

Tree grow_tree(const PresortedMatrix& PX, const RowStats& st, const GrowParams& gp, std::uint64_t seed,
               bool parallel) {
  const EncodedMatrix& X = PX.matrix();
  const std::size_t n = X.rows, p = X.cols;
  if (st.a.size() != n || st.b.size() != n || st.cover.size() != n)
    throw Error("row statistics do not match the design matrix");

  Tree tree;
  std::vector<int> node_of(n, -1);
  std::vector<int> depth_of;
  std::vector<std::uint64_t> key_of;
  std::vector<Totals> totals;

  Totals root;
  for (std::size_t i = 0; i < n; ++i) {
    if (st.cover[i] <= 0) continue;
    node_of[i] = 0;
    root.a += st.a[i];
    root.b += st.b[i];
    root.c += st.cover[i];
  }
  tree.nodes.push_back({-1, 0, -1, -1, leaf_value(gp, root.a, root.b), root.c});
  depth_of.push_back(0);
  key_of.push_back(derive_seed(seed, 0x7EE));
  totals.push_back(root);

  std::vector<int> open;
  if (splittable(gp, root, 0)) open.push_back(0);
  const std::size_t m = (gp.features_per_split == 0 || gp.features_per_split >= p) ? p
                                                                                    : gp.features_per_split;

  while (!open.empty()) {
    const std::size_t S = open.size();
    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < S; ++s) slot_of[static_cast<std::size_t>(open[s])] = static_cast<int>(s);
    std::vector<Candidate> best(S * p);

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::size_t f = 0; f < p; ++f) {
      struct Scan {
        double a = 0, b = 0, c = 0, last = 0;
        bool any = false;
      };
      std::vector<Scan> scan(S);
      for (std::uint32_t i : PX.order(f)) {
        const int nid = node_of[i];
        if (nid < 0) continue;
        const int s = slot_of[static_cast<std::size_t>(nid)];
        if (s < 0) continue;
        Scan& sc = scan[static_cast<std::size_t>(s)];
        const double v = X.at(i, f);
        if (sc.any && v != sc.last) {
          const Totals& t = totals[static_cast<std::size_t>(nid)];
          double g;
          Candidate& cand = best[static_cast<std::size_t>(s) * p + f];
          if (split_gain(gp, t.a, t.b, t.c, sc.a, sc.b, sc.c, g) && (!cand.valid || g > cand.gain)) {
            double thr = 0.5 * (sc.last + v);
            if (!(thr < v)) thr = sc.last;
            cand = {g, thr, true};
          }
        }
        sc.a += st.a[i];
        sc.b += st.b[i];
        sc.c += st.cover[i];
        sc.last = v;
        sc.any = true;
      }
    }

    std::vector<int> split_feature(S, -1);
    std::vector<double> split_threshold(S, 0);
    for (std::size_t s = 0; s < S; ++s) {
      const auto nid = static_cast<std::size_t>(open[s]);
      std::vector<std::size_t> order;
      if (m < p) {
        order = feature_permutation(key_of[nid], p);
      } else {
        order.resize(p);
        std::iota(order.begin(), order.end(), 0);
      }
      int bf = -1;
      double bg = 0, bt = 0;
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t f = order[k];
        const Candidate& c = best[s * p + f];
        if (c.valid && (bf < 0 || c.gain > bg || (c.gain == bg && static_cast<int>(f) < bf))) {
          bf = static_cast<int>(f);
          bg = c.gain;
          bt = c.threshold;
        }
        if (k + 1 >= m && bf >= 0) break;
      }
      split_feature[s] = bf;
      split_threshold[s] = bt;
    }

    // Create children in slot order, left before right.
    std::vector<int> left_of(S, -1);
    for (std::size_t s = 0; s < S; ++s) {
      if (split_feature[s] < 0) continue;
      const auto nid = static_cast<std::size_t>(open[s]);
      const int l = static_cast<int>(tree.nodes.size());
      left_of[s] = l;
      TreeNode& node = tree.nodes[nid];
      node.feature = split_feature[s];
      node.threshold = split_threshold[s];
      node.left = l;
      node.right = l + 1;
      for (int side = 1; side <= 2; ++side) {
        tree.nodes.push_back({});
        depth_of.push_back(depth_of[nid] + 1);
        key_of.push_back(child_key(key_of[nid], side));
        totals.push_back({});
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      const int nid = node_of[i];
      if (nid < 0) continue;
      const int s = nid < static_cast<int>(slot_of.size()) ? slot_of[static_cast<std::size_t>(nid)] : -1;
      if (s < 0) continue;
      const auto su = static_cast<std::size_t>(s);
      if (split_feature[su] < 0) {
        node_of[i] = -1;
        continue;
      }
      const int child = X.at(i, static_cast<std::size_t>(split_feature[su])) <= split_threshold[su]
                            ? left_of[su]
                            : left_of[su] + 1;
      node_of[i] = child;
      Totals& t = totals[static_cast<std::size_t>(child)];
      t.a += st.a[i];
      t.b += st.b[i];
      t.c += st.cover[i];
    }

    std::vector<int> next;
    for (std::size_t s = 0; s < S; ++s) {
      if (left_of[s] < 0) continue;
      for (int child : {left_of[s], left_of[s] + 1}) {
        const auto cu = static_cast<std::size_t>(child);
        TreeNode& node = tree.nodes[cu];
        node.value = leaf_value(gp, totals[cu].a, totals[cu].b);
        node.cover = totals[cu].c;
        if (splittable(gp, totals[cu], depth_of[cu])) next.push_back(child);
      }
    }
    open = std::move(next);
  }
  return tree;
}

}  // namespace periop
