#include "periop/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "periop/errors.hpp"
#include "periop/random.hpp"

namespace periop {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double log_loss(std::span<const double> raw, std::span<const int> y) {
  double s = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) s += softplus(raw[i]) - y[i] * raw[i];
  return s / static_cast<double>(raw.size());
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_eigen(const EncodedMatrix& X) {
  return {X.data.data(), static_cast<Eigen::Index>(X.rows), static_cast<Eigen::Index>(X.cols)};
}

void check_training_data(const EncodedMatrix& X, std::span<const int> y, bool need_both_classes) {
  if (X.rows != y.size()) throw Error("design matrix and labels differ in length");
  if (X.rows < 2) throw Error("need at least two training rows");
  if (X.data.size() != X.rows * X.cols) throw Error("design matrix data has the wrong size");
  std::size_t pos = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw Error("labels must be 0 or 1");
    pos += static_cast<std::size_t>(v);
  }
  if (need_both_classes && (pos == 0 || pos == y.size()))
    throw Error("training labels contain a single class");
  for (std::size_t i = 0; i < X.data.size(); ++i)
    if (!std::isfinite(X.data[i]))
      throw Error("non-finite value in row " + std::to_string(i / std::max<std::size_t>(X.cols, 1)) +
                  ", column '" + X.columns[i % X.cols].name() + "'");
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticState fit_logistic(const EncodedMatrix& X, std::span<const int> y, const LogisticParams& hp) {
  const std::size_t n = X.rows, p = X.cols;
  const auto Xe = as_eigen(X);
  std::vector<double> theta(p + 1, 0.0), grad, trial(p + 1);
  LogisticState st;
  double loss = logistic_loss(X, y, theta, hp.l2_lambda, &grad);
  for (int it = 0; it < hp.max_iter; ++it) {
    const Eigen::Map<const Eigen::VectorXd> g(grad.data(), static_cast<Eigen::Index>(p + 1));
    st.grad_norm = g.norm();
    if (st.grad_norm <= hp.tol) break;
    st.iterations = it + 1;

    // Hessian of the mean log-loss plus ridge on the weights.
    Eigen::VectorXd d(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      double z = theta[p];
      for (std::size_t j = 0; j < p; ++j) z += X.at(i, j) * theta[j];
      const double q = sigmoid(z);
      d[static_cast<Eigen::Index>(i)] = q * (1 - q) / static_cast<double>(n);
    }
    const auto P = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd H(P + 1, P + 1);
    const RowMajor DX = d.asDiagonal() * Xe;
    H.topLeftCorner(P, P) = Xe.transpose() * DX;
    H.topLeftCorner(P, P).diagonal().array() += hp.l2_lambda;
    const Eigen::VectorXd col = DX.colwise().sum().transpose();
    H.topRightCorner(P, 1) = col;
    H.bottomLeftCorner(1, P) = col.transpose();
    H(P, P) = d.sum();

    Eigen::VectorXd step = H.ldlt().solve(-g);
    const bool newton_ok = step.allFinite() && step.dot(g) < 0;
    if (!newton_ok) step = -g;

    auto try_step = [&](const Eigen::VectorXd& dir) {
      const double slope = dir.dot(g);
      for (double t = 1.0; t > 1e-12; t *= 0.5) {
        for (std::size_t k = 0; k <= p; ++k) trial[k] = theta[k] + t * dir[static_cast<Eigen::Index>(k)];
        std::vector<double> tg;
        const double tl = logistic_loss(X, y, trial, hp.l2_lambda, &tg);
        if (std::isfinite(tl) && tl <= loss + 1e-4 * t * slope) {
          theta = trial;
          loss = tl;
          grad = std::move(tg);
          return true;
        }
      }
      return false;
    };
    if (!try_step(step) && !(newton_ok && try_step(-g))) break;
  }
  {
    const Eigen::Map<const Eigen::VectorXd> g(grad.data(), static_cast<Eigen::Index>(p + 1));
    st.grad_norm = g.norm();
  }
  st.w.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(p));
  st.intercept = theta[p];
  return st;
}

// ---------------------------------------------------------------------------
// Naive Bayes

constexpr double kHalfLog2Pi = 0.91893853320467274178;

NaiveBayesState fit_naive_bayes(const EncodedMatrix& X, std::span<const int> y,
                                const NaiveBayesParams& hp) {
  const std::size_t n = X.rows, p = X.cols;
  NaiveBayesState st;
  st.gaussian.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    st.gaussian[j] = X.columns[j].role == ColumnRole::kScaledNumeric ? 1 : 0;
  double count[2] = {0, 0};
  for (int v : y) count[v] += 1;
  const double a_prior = hp.laplace_alpha > 0 ? hp.laplace_alpha : 1.0;
  for (int c = 0; c < 2; ++c)
    st.log_prior[c] = std::log((count[c] + a_prior) / (static_cast<double>(n) + 2 * a_prior));

  for (int c = 0; c < 2; ++c) {
    st.mean[c].assign(p, 0);
    st.var[c].assign(p, 0);
    st.p1[c].assign(p, 0);
  }
  // An absent class borrows the pooled statistics, so only the prior differs.
  auto class_stats = [&](int c, bool pooled) {
    double m = 0;
    for (std::size_t j = 0; j < p; ++j) {
      double s1 = 0, cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (pooled || y[i] == c) {
          s1 += X.at(i, j);
          cnt += 1;
        }
      m = s1 / cnt;
      double s2 = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (pooled || y[i] == c) s2 += (X.at(i, j) - m) * (X.at(i, j) - m);
      st.mean[c][j] = m;
      st.var[c][j] = std::max(s2 / cnt, hp.var_floor);
      const double pr = (s1 + hp.laplace_alpha) / (cnt + 2 * hp.laplace_alpha);
      st.p1[c][j] = std::clamp(pr, 1e-12, 1.0 - 1e-12);
    }
  };
  for (int c = 0; c < 2; ++c) class_stats(c, count[c] == 0);
  return st;
}

double nb_log_odds(const NaiveBayesState& st, std::span<const double> x) {
  double s = st.log_prior[1] - st.log_prior[0];
  for (std::size_t j = 0; j < x.size(); ++j) {
    double ll[2];
    for (int c = 0; c < 2; ++c) {
      if (st.gaussian[j]) {
        const double d = x[j] - st.mean[c][j];
        ll[c] = -0.5 * d * d / st.var[c][j] - 0.5 * std::log(st.var[c][j]) - kHalfLog2Pi;
      } else {
        const double q = st.p1[c][j];
        ll[c] = x[j] > 0.5 ? std::log(q) : std::log1p(-q);
      }
    }
    s += ll[1] - ll[0];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trees

RowStats unit_stats(std::span<const int> y) {
  RowStats st;
  st.a.assign(y.size(), 1.0);
  st.cover.assign(y.size(), 1.0);
  st.b.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) st.b[i] = y[i];
  return st;
}

TreeState fit_tree(const EncodedMatrix& X, std::span<const int> y, const TreeParams& hp,
                   std::uint64_t seed, bool parallel) {
  const PresortedMatrix PX(X);
  GrowParams gp;
  gp.criterion = SplitCriterion::kGini;
  gp.max_depth = hp.max_depth;
  gp.min_samples_leaf = hp.min_samples_leaf;
  return {grow_tree(PX, unit_stats(y), gp, seed, parallel)};
}

std::size_t forest_features(const ForestParams& hp, std::size_t p) {
  if (hp.features_per_split > 0) return static_cast<std::size_t>(hp.features_per_split);
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
}

ForestState fit_forest(const EncodedMatrix& X, std::span<const int> y, const ForestParams& hp,
                       std::uint64_t seed, bool parallel) {
  const PresortedMatrix PX(X);
  const std::size_t n = X.rows;
  GrowParams gp;
  gp.criterion = SplitCriterion::kGini;
  gp.max_depth = hp.max_depth;
  gp.min_samples_leaf = hp.min_samples_leaf;
  gp.features_per_split = forest_features(hp, X.cols);
  ForestState st;
  st.trees.resize(static_cast<std::size_t>(hp.n_trees));
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int t = 0; t < hp.n_trees; ++t) {
    RowStats rs;
    rs.cover.assign(n, hp.bootstrap ? 0.0 : 1.0);
    if (hp.bootstrap) {
      Stream s(seed, static_cast<std::uint64_t>(t));
      for (std::size_t k = 0; k < n; ++k) rs.cover[s.below(n)] += 1.0;
    }
    rs.a = rs.cover;
    rs.b.resize(n);
    for (std::size_t i = 0; i < n; ++i) rs.b[i] = rs.cover[i] * y[i];
    st.trees[static_cast<std::size_t>(t)] =
        grow_tree(PX, rs, gp, derive_seed(seed, static_cast<std::uint64_t>(t), 1), false);
  }
  return st;
}

AdaBoostState fit_adaboost(const EncodedMatrix& X, std::span<const int> y, const AdaBoostParams& hp,
                           std::uint64_t seed, bool parallel) {
  const PresortedMatrix PX(X);
  const std::size_t n = X.rows;
  GrowParams gp;
  gp.criterion = SplitCriterion::kGini;
  gp.max_depth = hp.stump_depth;
  AdaBoostState st;
  RowStats rs;
  rs.a.assign(n, 1.0 / static_cast<double>(n));
  rs.cover.assign(n, 1.0);
  rs.b.resize(n);
  std::vector<int> h(n);
  for (int r = 0; r < hp.n_rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) rs.b[i] = rs.a[i] * y[i];
    Tree tree = grow_tree(PX, rs, gp, derive_seed(seed, static_cast<std::uint64_t>(r)), parallel);
    double err = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = tree.predict(X.row(i)) > 0.5 ? 1 : -1;
      total += rs.a[i];
      if ((h[i] > 0) != (y[i] == 1)) err += rs.a[i];
    }
    err /= total;
    if (err >= 0.5) {
      // Weights are unchanged, so every later round would repeat this stump.
      st.skipped_rounds = hp.n_rounds - r;
      break;
    }
    const double e = std::max(err, 1e-10);
    const double alpha = std::log((1 - e) / e);
    for (TreeNode& node : tree.nodes) node.value = alpha * (node.value > 0.5 ? 1.0 : -1.0);
    st.trees.push_back(std::move(tree));
    st.alphas.push_back(alpha);
    if (err == 0) break;
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((h[i] > 0) != (y[i] == 1)) rs.a[i] *= std::exp(alpha);
      s += rs.a[i];
    }
    for (double& w : rs.a) w /= s;
  }
  return st;
}

GradBoostState fit_gradboost(const EncodedMatrix& X, std::span<const int> y,
                             const GradBoostParams& hp, std::uint64_t seed, bool parallel) {
  const PresortedMatrix PX(X);
  const std::size_t n = X.rows;
  GrowParams gp;
  gp.criterion = SplitCriterion::kNewton;
  gp.max_depth = hp.max_depth;
  gp.l2_lambda = hp.l2_lambda;
  gp.gamma = hp.gamma_min_gain;
  gp.min_child_hessian = hp.min_child_hessian;
  gp.learning_rate = hp.learning_rate;

  GradBoostState st;
  const double prior = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  const double pc = std::clamp(prior, 1e-6, 1 - 1e-6);
  st.base_score = std::log(pc / (1 - pc));
  std::vector<double> F(n, st.base_score);
  st.train_loss.push_back(log_loss(F, y));
  RowStats rs;
  rs.a.resize(n);
  rs.b.resize(n);
  rs.cover.assign(n, 1.0);
  for (int r = 0; r < hp.n_rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double q = sigmoid(F[i]);
      rs.a[i] = q - y[i];
      rs.b[i] = std::max(q * (1 - q), 1e-16);
    }
    Tree tree = grow_tree(PX, rs, gp, derive_seed(seed, static_cast<std::uint64_t>(r)), parallel);
    for (std::size_t i = 0; i < n; ++i) F[i] += tree.predict(X.row(i));
    st.trees.push_back(std::move(tree));
    st.train_loss.push_back(log_loss(F, y));
  }
  return st;
}

// ---------------------------------------------------------------------------
// MLP

struct MlpView {
  std::size_t p, h;
  std::span<const double> theta;
  double w1(std::size_t k, std::size_t j) const { return theta[k * p + j]; }
  double b1(std::size_t k) const { return theta[h * p + k]; }
  double w2(std::size_t k) const { return theta[h * p + h + k]; }
  double b2() const { return theta[h * p + 2 * h]; }
  static std::size_t size(std::size_t p, std::size_t h) { return h * p + 2 * h + 1; }
};

double mlp_forward(const MlpView& v, std::span<const double> x, std::vector<double>& act) {
  act.resize(v.h);
  double z = v.b2();
  for (std::size_t k = 0; k < v.h; ++k) {
    double a = v.b1(k);
    for (std::size_t j = 0; j < v.p; ++j) a += v.w1(k, j) * x[j];
    act[k] = a;
    z += v.w2(k) * std::max(a, 0.0);
  }
  return z;
}

// Mean log-loss over `rows` plus ridge on the weight matrices.
double mlp_batch(const EncodedMatrix& X, std::span<const int> y, std::span<const double> theta,
                 std::size_t h, double l2, std::span<const std::size_t> rows, std::vector<double>* grad) {
  const std::size_t p = X.cols;
  const MlpView v{p, h, theta};
  if (grad) grad->assign(theta.size(), 0.0);
  std::vector<double> act;
  double loss = 0;
  for (std::size_t i : rows) {
    const auto x = X.row(i);
    const double z = mlp_forward(v, x, act);
    loss += softplus(z) - y[i] * z;
    if (!grad) continue;
    auto& g = *grad;
    const double dz = sigmoid(z) - y[i];
    g[h * p + 2 * h] += dz;
    for (std::size_t k = 0; k < h; ++k) {
      if (act[k] <= 0) continue;
      g[h * p + h + k] += dz * act[k];
      const double da = dz * v.w2(k);
      g[h * p + k] += da;
      for (std::size_t j = 0; j < p; ++j) g[k * p + j] += da * x[j];
    }
  }
  const double m = static_cast<double>(rows.size());
  loss /= m;
  double ridge = 0;
  for (std::size_t k = 0; k < h * p; ++k) ridge += theta[k] * theta[k];
  for (std::size_t k = 0; k < h; ++k) ridge += theta[h * p + h + k] * theta[h * p + h + k];
  loss += 0.5 * l2 * ridge;
  if (grad) {
    auto& g = *grad;
    for (double& e : g) e /= m;
    for (std::size_t k = 0; k < h * p; ++k) g[k] += l2 * theta[k];
    for (std::size_t k = 0; k < h; ++k) g[h * p + h + k] += l2 * theta[h * p + h + k];
  }
  return loss;
}

MlpState fit_mlp(const EncodedMatrix& X, std::span<const int> y, const MlpParams& hp,
                 std::uint64_t seed) {
  const std::size_t n = X.rows, p = X.cols, h = static_cast<std::size_t>(hp.hidden_width);
  std::vector<double> theta(MlpView::size(p, h), 0.0);
  Stream init(seed, 0x1417);
  const double r1 = std::sqrt(6.0 / static_cast<double>(p + h));
  const double r2 = std::sqrt(6.0 / static_cast<double>(h + 1));
  for (std::size_t k = 0; k < h * p; ++k) theta[k] = (2 * init.uniform() - 1) * r1;
  for (std::size_t k = 0; k < h; ++k) theta[h * p + h + k] = (2 * init.uniform() - 1) * r2;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  const auto bs = static_cast<std::size_t>(hp.batch_size);
  for (int e = 0; e < hp.epochs; ++e) {
    Stream s(seed, 0x10000 + static_cast<std::uint64_t>(e));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[s.below(i)]);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      mlp_batch(X, y, theta, h, hp.l2_lambda,
                std::span<const std::size_t>(order.data() + start, end - start), &grad);
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= hp.learning_rate * grad[k];
    }
  }
  MlpState st;
  st.hidden = hp.hidden_width;
  st.inputs = p;
  st.w1.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(h * p));
  st.b1.assign(theta.begin() + static_cast<std::ptrdiff_t>(h * p),
               theta.begin() + static_cast<std::ptrdiff_t>(h * p + h));
  st.w2.assign(theta.begin() + static_cast<std::ptrdiff_t>(h * p + h),
               theta.begin() + static_cast<std::ptrdiff_t>(h * p + 2 * h));
  st.b2 = theta.back();
  return st;
}

std::vector<double> mlp_theta(const MlpState& st) {
  std::vector<double> t = st.w1;
  t.insert(t.end(), st.b1.begin(), st.b1.end());
  t.insert(t.end(), st.w2.begin(), st.w2.end());
  t.push_back(st.b2);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Family f) {
  switch (f) {
    case Family::kLogistic: return "logistic";
    case Family::kNaiveBayes: return "naive_bayes";
    case Family::kTree: return "tree";
    case Family::kRandomForest: return "random_forest";
    case Family::kAdaBoost: return "ada_boost";
    case Family::kGradBoost: return "grad_boost";
    case Family::kMlp: return "mlp";
  }
  return "?";
}

std::optional<Family> parse_family(std::string_view s) {
  for (Family f : kAllFamilies)
    if (to_string(f) == s) return f;
  return std::nullopt;
}

std::string_view display_name(Family f) {
  switch (f) {
    case Family::kLogistic: return "LR";
    case Family::kNaiveBayes: return "Naive Bayes";
    case Family::kTree: return "Decision Tree";
    case Family::kRandomForest: return "Random Forest";
    case Family::kAdaBoost: return "AdaBoost";
    case Family::kGradBoost: return "GradBoost";
    case Family::kMlp: return "MLP";
  }
  return "?";
}

int interpretability_rank(Family f) {
  switch (f) {
    case Family::kLogistic: return 0;
    case Family::kNaiveBayes: return 1;
    case Family::kTree: return 2;
    case Family::kRandomForest:
    case Family::kAdaBoost:
    case Family::kGradBoost: return 3;
    case Family::kMlp: return 4;
  }
  return 5;
}

Family family_of(const Hyperparams& hp) { return static_cast<Family>(hp.index()); }

Hyperparams default_hyperparams(Family f) {
  switch (f) {
    case Family::kLogistic: return LogisticParams{};
    case Family::kNaiveBayes: return NaiveBayesParams{};
    case Family::kTree: return TreeParams{};
    case Family::kRandomForest: return ForestParams{};
    case Family::kAdaBoost: return AdaBoostParams{};
    case Family::kGradBoost: return GradBoostParams{};
    case Family::kMlp: return MlpParams{};
  }
  return LogisticParams{};
}

void validate(const Hyperparams& hp) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid hyperparameter: ") + what);
  };
  auto depth_ok = [](int d) { return d == -1 || d >= 1; };
  std::visit(overloaded{
                 [&](const LogisticParams& p) {
                   need(p.l2_lambda >= 0, "l2_lambda must be >= 0");
                   need(p.max_iter >= 1, "max_iter must be >= 1");
                   need(p.tol > 0, "tol must be > 0");
                 },
                 [&](const NaiveBayesParams& p) {
                   need(p.laplace_alpha >= 0, "laplace_alpha must be >= 0");
                   need(p.var_floor > 0, "var_floor must be > 0");
                 },
                 [&](const TreeParams& p) {
                   need(depth_ok(p.max_depth), "max_depth must be >= 1 or -1");
                   need(p.min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
                 },
                 [&](const ForestParams& p) {
                   need(p.n_trees >= 1, "n_trees must be >= 1");
                   need(depth_ok(p.max_depth), "max_depth must be >= 1 or -1");
                   need(p.features_per_split >= 0, "features_per_split must be >= 0");
                   need(p.min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
                 },
                 [&](const AdaBoostParams& p) {
                   need(p.n_rounds >= 1, "n_rounds must be >= 1");
                   need(p.stump_depth >= 1, "stump_depth must be >= 1");
                 },
                 [&](const GradBoostParams& p) {
                   need(p.n_rounds >= 1, "n_rounds must be >= 1");
                   need(p.learning_rate > 0, "learning_rate must be > 0");
                   need(p.max_depth >= 0, "max_depth must be >= 0");
                   need(p.l2_lambda >= 0, "l2_lambda must be >= 0");
                   need(p.gamma_min_gain >= 0, "gamma_min_gain must be >= 0");
                   need(p.min_child_hessian >= 0, "min_child_hessian must be >= 0");
                 },
                 [&](const MlpParams& p) {
                   need(p.hidden_width >= 1, "hidden_width must be >= 1");
                   need(p.learning_rate > 0, "learning_rate must be > 0");
                   need(p.epochs >= 1, "epochs must be >= 1");
                   need(p.batch_size >= 1, "batch_size must be >= 1");
                   need(p.l2_lambda >= 0, "l2_lambda must be >= 0");
                 },
             },
             hp);
}

std::string describe(const Hyperparams& hp) {
  std::ostringstream os;
  os << to_string(family_of(hp));
  std::visit(overloaded{
                 [&](const LogisticParams& p) { os << "(lambda=" << p.l2_lambda << ")"; },
                 [&](const NaiveBayesParams& p) { os << "(alpha=" << p.laplace_alpha << ")"; },
                 [&](const TreeParams& p) { os << "(depth=" << p.max_depth << ")"; },
                 [&](const ForestParams& p) {
                   os << "(trees=" << p.n_trees << ",depth=" << p.max_depth << ")";
                 },
                 [&](const AdaBoostParams& p) {
                   os << "(rounds=" << p.n_rounds << ",depth=" << p.stump_depth << ")";
                 },
                 [&](const GradBoostParams& p) {
                   os << "(rounds=" << p.n_rounds << ",lr=" << p.learning_rate
                      << ",depth=" << p.max_depth << ",lambda=" << p.l2_lambda << ")";
                 },
                 [&](const MlpParams& p) {
                   os << "(width=" << p.hidden_width << ",epochs=" << p.epochs << ")";
                 },
             },
             hp);
  return os.str();
}

double fit_cost(const Hyperparams& hp, std::size_t n_rows, std::size_t n_cols) {
  const double n = static_cast<double>(n_rows), p = static_cast<double>(std::max<std::size_t>(n_cols, 1));
  const auto depth = [&](int d) {
    return d < 0 ? std::max(1.0, std::log2(std::max(n, 2.0))) : std::max(1.0, static_cast<double>(d));
  };
  // Per-unit constants fitted to single-core timings at n = 8000, p = 14..43.
  return std::visit(overloaded{
                        [&](const LogisticParams&) { return 40.0 * n * p * (1.0 + p / 50.0); },
                        [&](const NaiveBayesParams&) { return 20.0 * n * p; },
                        [&](const TreeParams& q) { return 16.0 * n * p * depth(q.max_depth); },
                        [&](const ForestParams& q) {
                          return 10.0 * q.n_trees * n * p * depth(q.max_depth);
                        },
                        [&](const AdaBoostParams& q) {
                          return 10.0 * q.n_rounds * n * p * depth(q.stump_depth);
                        },
                        [&](const GradBoostParams& q) {
                          return 8.0 * q.n_rounds * n * p * depth(q.max_depth);
                        },
                        [&](const MlpParams& q) {
                          return 1.5 * q.epochs * n * q.hidden_width * (p + 1.0);
                        },
                    },
                    hp);
}

std::string_view to_string(OutputSpace s) {
  return s == OutputSpace::kProbability ? "probability" : "log_odds";
}

double TreeEnsemble::predict(std::span<const double> x) const {
  double s = base;
  for (std::size_t t = 0; t < trees.size(); ++t) s += weights[t] * trees[t].predict(x);
  return s;
}

OutputSpace TrainedModel::raw_space() const {
  return (family == Family::kTree || family == Family::kRandomForest) ? OutputSpace::kProbability
                                                                     : OutputSpace::kLogOdds;
}

void check_provenance(const std::vector<ColumnInfo>& expected, const EncodedMatrix& X) {
  const std::size_t k = std::min(expected.size(), X.columns.size());
  for (std::size_t j = 0; j < k; ++j)
    if (!(expected[j] == X.columns[j]))
      throw Error("column " + std::to_string(j) + " provenance mismatch: model expects '" +
                  expected[j].name() + "', got '" + X.columns[j].name() + "'");
  if (expected.size() > X.cols)
    throw Error("column '" + expected[X.cols].name() + "' expected by the model is missing");
  if (X.cols > expected.size())
    throw Error("unexpected column '" + X.columns[expected.size()].name() + "'");
}

std::vector<double> TrainedModel::predict_raw(const EncodedMatrix& X) const {
  if (X.rows == 0) return {};
  check_provenance(columns, X);
  std::vector<double> out(X.rows);
  const auto n = static_cast<std::ptrdiff_t>(X.rows);
  std::visit(
      overloaded{
          [&](const LogisticState& s) {
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
              const auto x = X.row(static_cast<std::size_t>(i));
              double z = s.intercept;
              for (std::size_t j = 0; j < x.size(); ++j) z += s.w[j] * x[j];
              out[static_cast<std::size_t>(i)] = z;
            }
          },
          [&](const NaiveBayesState& s) {
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i)
              out[static_cast<std::size_t>(i)] = nb_log_odds(s, X.row(static_cast<std::size_t>(i)));
          },
          [&](const MlpState& s) {
            const std::vector<double> theta = mlp_theta(s);
            const MlpView v{s.inputs, static_cast<std::size_t>(s.hidden), theta};
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
              std::vector<double> act;
              out[static_cast<std::size_t>(i)] = mlp_forward(v, X.row(static_cast<std::size_t>(i)), act);
            }
          },
          [&](const auto&) {
            const TreeEnsemble e = *tree_ensemble();
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i)
              out[static_cast<std::size_t>(i)] = e.predict(X.row(static_cast<std::size_t>(i)));
          },
      },
      state);
  return out;
}

std::vector<double> TrainedModel::predict_proba(const EncodedMatrix& X) const {
  std::vector<double> r = predict_raw(X);
  if (raw_space() == OutputSpace::kProbability)
    for (double& v : r) v = std::clamp(v, 0.0, 1.0);
  else
    for (double& v : r) v = sigmoid(v);
  return r;
}

std::optional<TreeEnsemble> TrainedModel::tree_ensemble() const {
  return std::visit(
      overloaded{
          [](const TreeState& s) -> std::optional<TreeEnsemble> {
            return TreeEnsemble{{s.tree}, {1.0}, 0.0, OutputSpace::kProbability};
          },
          [](const ForestState& s) -> std::optional<TreeEnsemble> {
            const double w = 1.0 / static_cast<double>(s.trees.size());
            return TreeEnsemble{s.trees, std::vector<double>(s.trees.size(), w), 0.0,
                                OutputSpace::kProbability};
          },
          [](const AdaBoostState& s) -> std::optional<TreeEnsemble> {
            return TreeEnsemble{s.trees, std::vector<double>(s.trees.size(), 1.0), 0.0,
                                OutputSpace::kLogOdds};
          },
          [](const GradBoostState& s) -> std::optional<TreeEnsemble> {
            return TreeEnsemble{s.trees, std::vector<double>(s.trees.size(), 1.0), s.base_score,
                                OutputSpace::kLogOdds};
          },
          [](const auto&) -> std::optional<TreeEnsemble> { return std::nullopt; },
      },
      state);
}

TrainedModel fit(const EncodedMatrix& X, std::span<const int> y, const Hyperparams& hp,
                 std::uint64_t seed, bool parallel) {
  validate(hp);
  const Family fam = family_of(hp);
  check_training_data(X, y, fam != Family::kNaiveBayes);
  TrainedModel m;
  m.family = fam;
  m.hp = hp;
  m.seed = seed;
  m.columns = X.columns;
  switch (fam) {
    case Family::kLogistic: m.state = fit_logistic(X, y, std::get<LogisticParams>(hp)); break;
    case Family::kNaiveBayes: m.state = fit_naive_bayes(X, y, std::get<NaiveBayesParams>(hp)); break;
    case Family::kTree: m.state = fit_tree(X, y, std::get<TreeParams>(hp), seed, parallel); break;
    case Family::kRandomForest:
      m.state = fit_forest(X, y, std::get<ForestParams>(hp), seed, parallel);
      break;
    case Family::kAdaBoost:
      m.state = fit_adaboost(X, y, std::get<AdaBoostParams>(hp), seed, parallel);
      break;
    case Family::kGradBoost:
      m.state = fit_gradboost(X, y, std::get<GradBoostParams>(hp), seed, parallel);
      break;
    case Family::kMlp: m.state = fit_mlp(X, y, std::get<MlpParams>(hp), seed); break;
  }
  return m;
}

double logistic_loss(const EncodedMatrix& X, std::span<const int> y, std::span<const double> theta,
                     double l2_lambda, std::vector<double>* grad) {
  const std::size_t n = X.rows, p = X.cols;
  if (theta.size() != p + 1) throw Error("logistic parameter vector has the wrong length");
  if (n == 0) throw Error("loss of an empty dataset");
  if (grad) grad->assign(p + 1, 0.0);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = X.row(i);
    double z = theta[p];
    for (std::size_t j = 0; j < p; ++j) z += theta[j] * x[j];
    loss += softplus(z) - y[i] * z;
    if (grad) {
      const double r = sigmoid(z) - y[i];
      for (std::size_t j = 0; j < p; ++j) (*grad)[j] += r * x[j];
      (*grad)[p] += r;
    }
  }
  const double nn = static_cast<double>(n);
  loss /= nn;
  double ridge = 0;
  for (std::size_t j = 0; j < p; ++j) ridge += theta[j] * theta[j];
  loss += 0.5 * l2_lambda * ridge;
  if (grad) {
    for (double& g : *grad) g /= nn;
    for (std::size_t j = 0; j < p; ++j) (*grad)[j] += l2_lambda * theta[j];
  }
  return loss;
}

double mlp_loss(const EncodedMatrix& X, std::span<const int> y, std::span<const double> theta,
                int hidden, double l2_lambda, std::vector<double>* grad) {
  const auto h = static_cast<std::size_t>(hidden);
  if (theta.size() != MlpView::size(X.cols, h)) throw Error("mlp parameter vector has the wrong length");
  if (X.rows == 0) throw Error("loss of an empty dataset");
  std::vector<std::size_t> rows(X.rows);
  std::iota(rows.begin(), rows.end(), 0);
  return mlp_batch(X, y, theta, h, l2_lambda, rows, grad);
}

double loss_gradient_check(const EncodedMatrix& X, std::span<const int> y, const Hyperparams& hp,
                           double eps, std::uint64_t seed) {
  if (X.rows == 0) throw Error("gradient check needs at least one row");
  if (X.rows != y.size()) throw Error("design matrix and labels differ in length");
  Stream s(seed, 0x6AAD);
  std::function<double(std::span<const double>, std::vector<double>*)> f;
  std::size_t k = 0;
  if (const auto* lp = std::get_if<LogisticParams>(&hp)) {
    k = X.cols + 1;
    f = [&, lambda = lp->l2_lambda](std::span<const double> t, std::vector<double>* g) {
      return logistic_loss(X, y, t, lambda, g);
    };
  } else if (const auto* mp = std::get_if<MlpParams>(&hp)) {
    k = MlpView::size(X.cols, static_cast<std::size_t>(mp->hidden_width));
    f = [&, h = mp->hidden_width, lambda = mp->l2_lambda](std::span<const double> t,
                                                          std::vector<double>* g) {
      return mlp_loss(X, y, t, h, lambda, g);
    };
  } else {
    throw ConfigError("gradient check supports logistic and mlp only");
  }
  std::vector<double> theta(k);
  for (double& t : theta) t = 2 * s.uniform() - 1;
  std::vector<double> grad;
  f(theta, &grad);
  double worst = 0;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> tp = theta, tm = theta;
    tp[j] += eps;
    tm[j] -= eps;
    const double fd = (f(tp, nullptr) - f(tm, nullptr)) / (2 * eps);
    const double den = std::max({std::abs(grad[j]), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(grad[j] - fd) / den);
  }
  return worst;
}

}  // namespace periop
