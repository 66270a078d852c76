#include "periop/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "periop/csv.hpp"
#include "periop/errors.hpp"
#include "periop/random.hpp"
#include "periop/svg.hpp"

namespace periop {

double ShapMatrix::reconstruct(std::size_t i) const {
  double s = base_value;
  for (std::size_t j = 0; j < cols; ++j) s += at(i, j);
  return s;
}

// ---------------------------------------------------------------------------
// TreeSHAP

namespace {

struct PathElement {
  int feature;
  double zero;
  double one;
  double pweight;
};

void extend_path(PathElement* path, int ud, double zero, double one, int feature) {
  path[ud] = {feature, zero, one, ud == 0 ? 1.0 : 0.0};
  for (int i = ud - 1; i >= 0; --i) {
    path[i + 1].pweight += one * path[i].pweight * (i + 1) / static_cast<double>(ud + 1);
    path[i].pweight = zero * path[i].pweight * (ud - i) / static_cast<double>(ud + 1);
  }
}

void unwind_path(PathElement* path, int ud, int index) {
  const double one = path[index].one, zero = path[index].zero;
  double next = path[ud].pweight;
  for (int i = ud - 1; i >= 0; --i) {
    if (one != 0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next * (ud + 1) / ((i + 1) * one);
      next = tmp - path[i].pweight * zero * (ud - i) / static_cast<double>(ud + 1);
    } else {
      path[i].pweight = path[i].pweight * (ud + 1) / (zero * (ud - i));
    }
  }
  for (int i = index; i < ud; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero = path[i + 1].zero;
    path[i].one = path[i + 1].one;
  }
}

// Total permutation weight of the path with element `index` removed.
double unwound_sum(const PathElement* path, int ud, int index) {
  const double one = path[index].one, zero = path[index].zero;
  double next = path[ud].pweight, total = 0;
  for (int i = ud - 1; i >= 0; --i) {
    if (one != 0) {
      const double tmp = next * (ud + 1) / ((i + 1) * one);
      total += tmp;
      next = path[i].pweight - tmp * zero * ((ud - i) / static_cast<double>(ud + 1));
    } else if (zero != 0) {
      total += (path[i].pweight / zero) / ((ud - i) / static_cast<double>(ud + 1));
    }
  }
  return total;
}

struct ShapWalker {
  const Tree& tree;
  std::span<const double> x;
  double weight;
  std::span<double> phi;

  void recurse(int node, PathElement* parent_path, int ud, double pzero, double pone, int pfeature) {
    PathElement* path = parent_path + ud + 1;
    std::copy(parent_path, parent_path + ud + 1, path);
    extend_path(path, ud, pzero, pone, pfeature);
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.is_leaf()) {
      for (int i = 1; i <= ud; ++i) {
        const double w = unwound_sum(path, ud, i);
        const PathElement& el = path[i];
        phi[static_cast<std::size_t>(el.feature)] += weight * w * (el.one - el.zero) * n.value;
      }
      return;
    }
    const bool go_left = x[static_cast<std::size_t>(n.feature)] <= n.threshold;
    const int hot = go_left ? n.left : n.right;
    const int cold = go_left ? n.right : n.left;
    const double hot_zero = tree.nodes[static_cast<std::size_t>(hot)].cover / n.cover;
    const double cold_zero = tree.nodes[static_cast<std::size_t>(cold)].cover / n.cover;
    double in_zero = 1, in_one = 1;
    int k = 0;
    for (; k <= ud; ++k)
      if (path[k].feature == n.feature) break;
    if (k != ud + 1) {
      in_zero = path[k].zero;
      in_one = path[k].one;
      unwind_path(path, ud, k);
      --ud;
    }
    recurse(hot, path, ud + 1, hot_zero * in_zero, in_one, n.feature);
    recurse(cold, path, ud + 1, cold_zero * in_zero, 0, n.feature);
  }
};

void check_covers(const Tree& t) {
  if (t.nodes.empty()) throw Error("empty tree");
  if (!(t.nodes[0].cover > 0)) throw Error("tree has no cover counts");
  for (const TreeNode& n : t.nodes) {
    if (n.is_leaf()) continue;
    const double c = t.nodes[static_cast<std::size_t>(n.left)].cover +
                     t.nodes[static_cast<std::size_t>(n.right)].cover;
    if (!(n.cover > 0) || std::abs(c - n.cover) > 1e-9 * n.cover)
      throw Error("tree node cover is not the sum of its children's covers");
  }
}

}  // namespace

double expected_value(const Tree& t) {
  check_covers(t);
  const double root = t.nodes[0].cover;
  double s = 0;
  for (const TreeNode& n : t.nodes)
    if (n.is_leaf()) s += n.cover / root * n.value;
  return s;
}

void tree_shap_row(const Tree& t, std::span<const double> x, double weight, std::span<double> phi) {
  check_covers(t);
  const int d = t.depth();
  std::vector<PathElement> buffer(static_cast<std::size_t>((d + 2) * (d + 3) / 2));
  ShapWalker w{t, x, weight, phi};
  w.recurse(0, buffer.data(), 0, 1, 1, -1);
}

ShapMatrix tree_shap(const TreeEnsemble& e, const EncodedMatrix& X, bool parallel) {
  if (e.trees.size() != e.weights.size()) throw Error("ensemble weights do not match its trees");
  ShapMatrix s;
  s.rows = X.rows;
  s.cols = X.cols;
  s.phi.assign(X.rows * X.cols, 0.0);
  s.space = e.space;
  s.columns = X.columns;
  s.method = "tree";
  s.base_value = e.base;
  int depth = 0;
  for (std::size_t t = 0; t < e.trees.size(); ++t) {
    const Tree& tr = e.trees[t];
    s.base_value += e.weights[t] * expected_value(tr);
    for (const TreeNode& n : tr.nodes)
      if (!n.is_leaf() && static_cast<std::size_t>(n.feature) >= X.cols)
        throw Error("tree splits on a column the matrix does not have");
    depth = std::max(depth, tr.depth());
  }
  const auto n = static_cast<std::ptrdiff_t>(X.rows);
#pragma omp parallel if (parallel)
  {
    std::vector<PathElement> buffer(static_cast<std::size_t>((depth + 2) * (depth + 3) / 2));
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      std::span<double> row(s.phi.data() + iu * s.cols, s.cols);
      for (std::size_t t = 0; t < e.trees.size(); ++t) {
        ShapWalker w{e.trees[t], X.row(iu), e.weights[t], row};
        w.recurse(0, buffer.data(), 0, 1, 1, -1);
      }
    }
  }
  return s;
}

ShapMatrix tree_shap(const TrainedModel& m, const EncodedMatrix& X, bool parallel) {
  const auto e = m.tree_ensemble();
  if (!e) throw Error("tree_shap needs a tree-based model, got " + std::string(to_string(m.family)));
  check_provenance(m.columns, X);
  return tree_shap(*e, X, parallel);
}

// ---------------------------------------------------------------------------

ShapMatrix linear_shap(const TrainedModel& m, const EncodedMatrix& X, const EncodedMatrix& background) {
  const auto* st = std::get_if<LogisticState>(&m.state);
  if (!st) throw Error("linear_shap needs a logistic model");
  if (background.rows == 0) throw Error("linear_shap needs a non-empty background");
  check_provenance(m.columns, X);
  check_provenance(m.columns, background);
  const std::size_t p = X.cols;
  std::vector<double> mean(p, 0.0);
  for (std::size_t i = 0; i < background.rows; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += background.at(i, j);
  for (double& v : mean) v /= static_cast<double>(background.rows);

  ShapMatrix s;
  s.rows = X.rows;
  s.cols = p;
  s.space = OutputSpace::kLogOdds;
  s.columns = X.columns;
  s.method = "linear";
  s.base_value = st->intercept;
  for (std::size_t j = 0; j < p; ++j) s.base_value += st->w[j] * mean[j];
  s.phi.resize(X.rows * p);
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < p; ++j) s.at(i, j) = st->w[j] * (X.at(i, j) - mean[j]);
  return s;
}

SamplingResult sampling_shap(const BatchPredictor& predict, std::span<const double> x,
                             const EncodedMatrix& background, std::size_t n_samples,
                             std::uint64_t seed) {
  const std::size_t p = background.cols;
  if (x.size() != p) throw Error("row width does not match the background");
  if (background.rows == 0) throw Error("sampling_shap needs a non-empty background");
  if (n_samples < p) throw Error("sampling_shap needs at least p samples");

  // One batch: for each sample, the background row then p progressively
  // imputed rows; plus x itself and the background for the base value.
  EncodedMatrix batch;
  batch.cols = p;
  batch.columns = background.columns;
  batch.rows = n_samples * (p + 1) + 1 + background.rows;
  batch.data.reserve(batch.rows * p);
  std::vector<std::vector<std::size_t>> perms(n_samples);
  std::vector<double> cur(p);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Stream rng(seed, s);
    const auto z = background.row(static_cast<std::size_t>(rng.below(background.rows)));
    auto& perm = perms[s];
    perm.resize(p);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = p; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    cur.assign(z.begin(), z.end());
    batch.data.insert(batch.data.end(), cur.begin(), cur.end());
    for (std::size_t k = 0; k < p; ++k) {
      cur[perm[k]] = x[perm[k]];
      batch.data.insert(batch.data.end(), cur.begin(), cur.end());
    }
  }
  batch.data.insert(batch.data.end(), x.begin(), x.end());
  batch.data.insert(batch.data.end(), background.data.begin(), background.data.end());
  const std::vector<double> f = predict(batch);
  if (f.size() != batch.rows) throw Error("predictor returned the wrong number of outputs");

  SamplingResult r;
  r.phi.assign(p, 0.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t off = s * (p + 1);
    for (std::size_t k = 0; k < p; ++k) r.phi[perms[s][k]] += f[off + k + 1] - f[off + k];
  }
  for (double& v : r.phi) v /= static_cast<double>(n_samples);
  const std::size_t bg0 = n_samples * (p + 1) + 1;
  r.base_value = std::accumulate(f.begin() + static_cast<std::ptrdiff_t>(bg0), f.end(), 0.0) /
                 static_cast<double>(background.rows);
  const double fx = f[bg0 - 1];
  const double resid = (fx - r.base_value) - std::accumulate(r.phi.begin(), r.phi.end(), 0.0);
  double mass = 0;
  for (double v : r.phi) mass += std::abs(v);
  for (double& v : r.phi)
    v += mass > 0 ? resid * std::abs(v) / mass : resid / static_cast<double>(p);
  return r;
}

std::vector<double> explained_output(const TrainedModel& m, const EncodedMatrix& X) {
  switch (m.family) {
    case Family::kNaiveBayes:
    case Family::kMlp: return m.predict_proba(X);
    default: return m.predict_raw(X);
  }
}

EncodedMatrix background_sample(const EncodedMatrix& X, std::size_t cap, std::uint64_t seed) {
  if (X.rows <= cap) return X;
  std::vector<std::size_t> idx(X.rows);
  std::iota(idx.begin(), idx.end(), 0);
  Stream s(seed, 0xBAC6);
  for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + s.below(X.rows - i)]);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return X.take_rows(idx);
}

ShapMatrix explain_model(const TrainedModel& m, const EncodedMatrix& X,
                         const EncodedMatrix& background, const ExplainOptions& opt) {
  if (m.tree_ensemble()) return tree_shap(m, X, opt.parallel);
  const EncodedMatrix bg = background_sample(background, opt.background_cap, opt.seed);
  if (m.family == Family::kLogistic) return linear_shap(m, X, bg);

  check_provenance(m.columns, X);
  const std::size_t rows = std::min(X.rows, opt.sampling_rows_cap);
  const std::size_t ns = std::max(opt.n_samples, X.cols);
  ShapMatrix s;
  s.rows = rows;
  s.cols = X.cols;
  s.space = OutputSpace::kProbability;
  s.columns = X.columns;
  s.method = "sampling";
  s.phi.assign(rows * X.cols, 0.0);
  const BatchPredictor predict = [&m](const EncodedMatrix& B) { return m.predict_proba(B); };
  std::vector<double> base(rows, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(dynamic) if (opt.parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const SamplingResult r = sampling_shap(predict, X.row(iu), bg, ns, derive_seed(opt.seed, iu));
    std::copy(r.phi.begin(), r.phi.end(), s.phi.begin() + static_cast<std::ptrdiff_t>(iu * X.cols));
    base[iu] = r.base_value;
  }
  // Every row shares the same background, hence the same base value.
  s.base_value = rows > 0 ? base[0] : 0.0;
  return s;
}

// ---------------------------------------------------------------------------

namespace {
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1);
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = avg;
    i = j;
  }
  return r;
}
}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("spearman inputs differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<FeatureImpact> rank_impacts(const ShapMatrix& shap, const EncodedMatrix& X, std::size_t k) {
  if (X.cols != shap.cols) throw Error("matrix and attributions differ in width");
  if (X.rows < shap.rows) throw Error("matrix has fewer rows than the attributions");
  const std::size_t p = shap.cols, n = shap.rows;
  std::vector<FeatureImpact> all(p);
  std::vector<double> xv(n), pv(n);
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s += std::abs(shap.at(i, j));
      xv[i] = X.at(i, j);
      pv[i] = shap.at(i, j);
    }
    all[j].column = j;
    all[j].name = X.columns[j].name();
    all[j].mean_abs_phi = n > 0 ? s / static_cast<double>(n) : 0.0;
    all[j].directionality = spearman(xv, pv);
  }
  std::stable_sort(all.begin(), all.end(), [](const FeatureImpact& a, const FeatureImpact& b) {
    return a.mean_abs_phi > b.mean_abs_phi;
  });
  all.resize(std::min(k, p));
  for (std::size_t r = 0; r < all.size(); ++r) all[r].rank = r;
  return all;
}

void write_shap_csv(const ShapMatrix& shap, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  std::vector<std::string> header;
  for (const auto& c : shap.columns) header.push_back(c.name());
  header.push_back("base_value");
  csv::write_row(out, header);
  std::vector<std::string> f(shap.cols + 1);
  for (std::size_t i = 0; i < shap.rows; ++i) {
    for (std::size_t j = 0; j < shap.cols; ++j) f[j] = csv::format_double(shap.at(i, j));
    f[shap.cols] = csv::format_double(shap.base_value);
    csv::write_row(out, f);
  }
}

void write_impacts_csv(const std::vector<FeatureImpact>& impacts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"rank", "feature", "mean_abs_shap", "directionality"});
  for (const auto& f : impacts)
    csv::write_row(out, {std::to_string(f.rank + 1), f.name, csv::format_double(f.mean_abs_phi),
                         csv::format_double(f.directionality)});
}

std::string beeswarm_svg(const ShapMatrix& shap, const EncodedMatrix& X,
                         const std::vector<FeatureImpact>& impacts, const std::string& title) {
  constexpr double kWidth = 860, kLeft = 220, kRight = 70, kTop = 50, kRowH = 32, kBottom = 60;
  constexpr double kBin = 4, kStep = 2, kRadius = 2;
  const std::size_t k = impacts.size();
  const double height = kTop + static_cast<double>(k) * kRowH + kBottom;
  const double plot_w = kWidth - kLeft - kRight;

  double lo = 0, hi = 0;
  for (const auto& f : impacts)
    for (std::size_t i = 0; i < shap.rows; ++i) {
      lo = std::min(lo, shap.at(i, f.column));
      hi = std::max(hi, shap.at(i, f.column));
    }
  if (!(hi > lo)) {
    lo = -1;
    hi = 1;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto px = [&](double v) { return kLeft + (v - lo) / (hi - lo) * plot_w; };

  svg::Document doc(kWidth, height);
  doc.text(kWidth / 2, 24, title, 14, "middle");
  const double axis_y = kTop + static_cast<double>(k) * kRowH + 6;
  doc.line(px(0), kTop - 4, px(0), axis_y, "#999999", 1);
  doc.line(kLeft, axis_y, kLeft + plot_w, axis_y, "#333333", 1);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    doc.line(px(v), axis_y, px(v), axis_y + 4, "#333333", 1);
    doc.text(px(v), axis_y + 16, svg::num(v), 10, "middle");
  }
  doc.text(kLeft + plot_w / 2, axis_y + 36,
           "SHAP value (" + std::string(to_string(shap.space)) + ")", 12, "middle");

  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t j = impacts[r].column;
    const double cy = kTop + (static_cast<double>(r) + 0.5) * kRowH;
    doc.text(kLeft - 10, cy + 4, impacts[r].name, 12, "end");
    doc.line(kLeft, cy, kLeft + plot_w, cy, "#eeeeee", 1);

    double vmin = 0, vmax = 0;
    for (std::size_t i = 0; i < shap.rows; ++i) {
      const double v = X.at(i, j);
      if (i == 0 || v < vmin) vmin = v;
      if (i == 0 || v > vmax) vmax = v;
    }
    std::vector<std::size_t> order(shap.rows);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return shap.at(a, j) < shap.at(b, j); });
    std::vector<int> fill(static_cast<std::size_t>(plot_w / kBin) + 2, 0);
    const double max_off = kRowH / 2 - 3;
    for (std::size_t i : order) {
      const double x = px(shap.at(i, j));
      const auto bin = static_cast<std::size_t>(std::clamp((x - kLeft) / kBin, 0.0, plot_w / kBin));
      const int c = fill[bin]++;
      const double off = std::min(kStep * ((c + 1) / 2), max_off) * (c % 2 == 1 ? -1.0 : 1.0);
      const double t = vmax > vmin ? (X.at(i, j) - vmin) / (vmax - vmin) : 0.5;
      doc.circle(x, cy + off, kRadius, svg::ramp(t), 0.8);
    }
  }

  // Colour key.
  const double kx = kWidth - kRight + 25, ky0 = kTop, ky1 = kTop + std::max<double>(k, 3) * kRowH * 0.6;
  for (int s = 0; s < 10; ++s) {
    const double y = ky0 + (ky1 - ky0) * s / 10.0;
    doc.rect(kx, y, 10, (ky1 - ky0) / 10.0 + 0.5, svg::ramp(1.0 - s / 9.0));
  }
  doc.text(kx + 5, ky0 - 6, "high", 10, "middle");
  doc.text(kx + 5, ky1 + 14, "low", 10, "middle");
  doc.text(kx + 30, (ky0 + ky1) / 2, "feature value", 10, "middle", 90);
  return doc.str();
}

}  // namespace periop
