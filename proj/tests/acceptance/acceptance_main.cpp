// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: periop_acceptance [work_dir] [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <omp.h>

#include "oracles.hpp"
#include "periop/csv.hpp"
#include "periop/errors.hpp"
#include "periop/explain.hpp"
#include "periop/metrics.hpp"
#include "periop/models.hpp"
#include "periop/netcorr.hpp"
#include "periop/pipeline.hpp"
#include "periop/synth.hpp"

using namespace periop;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      pass = false;
      detail << what;
    }
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<void(Outcome&)> run;
};

fs::path g_work;

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

void shap_local_accuracy(Outcome& o) {
  const std::uint64_t seed = 101;
  const GenProfile prof = default_profile("all", 3000, seed);
  const Cohort cohort = sample_cohort(prof, 3000, seed);
  const PreparedData d =
      prepare_data(cohort, DatasetVariant{VariantKind::kPeriOpCognitive, "all"}, OutcomeKind::kLos, 0.2, seed);
  EncodedMatrix rows = d.X_test;
  rows.rows = std::min<std::size_t>(rows.rows, 200);
  rows.data.resize(rows.rows * rows.cols);
  o.require(rows.rows == 200, "fewer than 200 test rows");
  const EncodedMatrix bg = background_sample(d.X_train, 1000, seed);
  double worst = 0;
  for (Family f : kAllFamilies) {
    const TrainedModel m = fit(d.X_train, d.y_train, default_hyperparams(f), seed);
    const ShapMatrix sh = explain_model(m, rows, bg, ExplainOptions{1000, 200, 64, seed, true});
    // f(x) straight from the model, in the space the explainer declares.
    const std::vector<double> out = sh.space == OutputSpace::kLogOdds ? m.predict_raw(rows) : m.predict_proba(rows);
    o.require(sh.rows == rows.rows, std::string(to_string(f)) + " explained " + std::to_string(sh.rows) + " rows");
    double fam_worst = 0;
    for (std::size_t i = 0; i < sh.rows; ++i) {
      double s = sh.base_value;
      for (std::size_t j = 0; j < sh.cols; ++j) s += sh.phi[i * sh.cols + j];
      fam_worst = std::max(fam_worst, std::abs(s - out[i]));
    }
    o.require(fam_worst < 1e-6, std::string(to_string(f)) + " gap " + fmt(fam_worst));
    worst = std::max(worst, fam_worst);
  }
  o.detail << (o.pass ? "" : "; ") << "7 families x 200 rows, max gap " << fmt(worst, 3);
}

void treeshap_exactness(Outcome& o) {
  double worst = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    Stream s(t, 0xACC2);
    const std::size_t p = 1 + s.below(8);
    const Tree tree = oracle::random_tree(s, p, static_cast<int>(1 + s.below(3)));
    const EncodedMatrix X = oracle::random_matrix(s, 8, p);
    const ShapMatrix sh = tree_shap(TreeEnsemble{{tree}, {1.0}, 0.0, OutputSpace::kLogOdds}, X, false);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const auto ref = oracle::exhaustive_shap(tree, X.row(i), p);
      for (std::size_t j = 0; j < p; ++j) worst = std::max(worst, std::abs(sh.phi[i * p + j] - ref[j]));
    }
  }
  o.require(worst <= 1e-8, "max deviation " + fmt(worst));
  o.detail << (o.pass ? "" : "; ") << "50 trees x 8 rows, max deviation " << fmt(worst, 3);
}

void auroc_equivalence(Outcome& o) {
  std::size_t mismatches = 0, ties = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Stream s(t, 0xACC3);
    std::vector<double> sc;
    std::vector<int> y;
    oracle::random_scored_labels(s, 2 + s.below(199), sc, y);
    std::set<double> distinct(sc.begin(), sc.end());
    ties += distinct.size() < sc.size();
    const auto a = auroc(sc, y);
    if (!a || *a != oracle::pairwise_auroc(sc, y)) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  o.detail << (o.pass ? "" : "; ") << "100 instances (" << ties << " with ties), exact";
}

void gradient_checks(Outcome& o) {
  double lib_worst = 0, fd_worst = 0, closed_worst = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Stream s(t, 0xACC4);
    const std::size_t n = 8 + s.below(40), p = 1 + s.below(6);
    const EncodedMatrix X = oracle::random_matrix(s, n, p);
    std::vector<int> y(n);
    for (auto& v : y) v = s.uniform() < 0.5;
    y[0] = 1;
    y[1] = 0;
    const double lambda = 0.1 * s.uniform();
    const int h = static_cast<int>(1 + s.below(6));

    // Library route.
    lib_worst = std::max(lib_worst, loss_gradient_check(X, y, LogisticParams{lambda, 10, 1e-8}, 1e-5, t));
    lib_worst = std::max(lib_worst, loss_gradient_check(X, y, MlpParams{h, 0.05, 1, 8, lambda}, 1e-5, t));

    // Independent central differences on the loss functions.
    auto fd_check = [&](const std::function<double(std::span<const double>, std::vector<double>*)>& f,
                        std::size_t k) {
      std::vector<double> theta(k);
      for (double& v : theta) v = 2 * s.uniform() - 1;
      std::vector<double> g;
      f(theta, &g);
      const double eps = 1e-6;
      for (std::size_t j = 0; j < k; ++j) {
        auto tp = theta, tm = theta;
        tp[j] += eps;
        tm[j] -= eps;
        const double fd = (f(tp, nullptr) - f(tm, nullptr)) / (2 * eps);
        fd_worst = std::max(fd_worst, std::abs(g[j] - fd) / std::max({std::abs(g[j]), std::abs(fd), 1e-6}));
      }
      return std::make_pair(theta, g);
    };
    const auto [theta, g] = fd_check(
        [&](std::span<const double> th, std::vector<double>* gr) { return logistic_loss(X, y, th, lambda, gr); },
        p + 1);
    fd_check([&](std::span<const double> th, std::vector<double>* gr) { return mlp_loss(X, y, th, h, lambda, gr); },
             static_cast<std::size_t>(h) * (p + 2) + 1);

    // Closed form: X'(sigmoid(Xw + b) - y) / n + lambda w.
    std::vector<double> ref(p + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = theta[p];
      for (std::size_t j = 0; j < p; ++j) z += theta[j] * X.at(i, j);
      const double r = oracle::sigmoid(z) - y[i];
      for (std::size_t j = 0; j < p; ++j) ref[j] += r * X.at(i, j) / static_cast<double>(n);
      ref[p] += r / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < p; ++j) ref[j] += lambda * theta[j];
    for (std::size_t j = 0; j <= p; ++j) closed_worst = std::max(closed_worst, std::abs(ref[j] - g[j]));
  }
  o.require(lib_worst < 1e-4, "library check " + fmt(lib_worst));
  o.require(fd_worst < 1e-4, "finite differences " + fmt(fd_worst));
  o.require(closed_worst < 1e-10, "closed-form logistic gradient " + fmt(closed_worst));
  o.detail << (o.pass ? "" : "; ") << "20 instances, max rel err " << fmt(std::max(lib_worst, fd_worst), 3);
}

void gbm_hand_case(Outcome& o) {
  const auto X = EncodedMatrix::from_rows({{0}, {0}, {1}, {1}});
  const std::vector<int> y = {1, 1, 0, 0};
  const TrainedModel m = fit(X, y, GradBoostParams{1, 1.0, 1, 1.0, 0.0, 0.1}, 0);
  double G = 0, H = 0;
  for (int i = 0; i < 2; ++i) {
    G += 0.5 - y[static_cast<std::size_t>(i)];
    H += 0.25;
  }
  const double w = -G / (H + 1.0);
  const auto& st = std::get<GradBoostState>(m.state);
  const double leaf = st.trees.at(0).predict(std::vector<double>{0.0});
  const double p = m.predict_proba(EncodedMatrix::from_rows({{0}}))[0];
  o.require(std::abs(w - 2.0 / 3.0) < 1e-15, "oracle leaf " + fmt(w, 17));
  o.require(std::abs(leaf - 2.0 / 3.0) < 1e-12, "leaf " + fmt(leaf, 17));
  o.require(std::abs(p - oracle::sigmoid(2.0 / 3.0)) < 1e-6, "p " + fmt(p, 17));
  o.detail << (o.pass ? "" : "; ") << "leaf " << fmt(leaf, 10) << ", p " << fmt(p, 10);
}

void synthetic_calibration(Outcome& o) {
  const GenProfile prof = default_profile("all", 10000, 606);
  const std::size_t n = 10000;
  const Cohort c = sample_cohort(prof, n, 606);
  double age = 0;
  for (double v : c.feature("age").values) age += v;
  age /= static_cast<double>(n);
  o.require(std::abs(age - 73.3) <= 0.2, "mean age " + fmt(age));
  const auto& reg = *prof.registry;
  std::size_t binaries = 0;
  for (std::size_t j = 0; j < reg.size(); ++j) {
    if (reg[j].kind != FeatureKind::kBinary) continue;
    ++binaries;
    double m = 0;
    for (double v : c.features[j].values) m += v;
    m /= static_cast<double>(n);
    const double q = std::get<Bernoulli>(prof.marginals[j]).prevalence;
    const double band = 4 * std::sqrt(q * (1 - q) / static_cast<double>(n));
    o.require(std::abs(m - q) <= band, reg[j].name + " prevalence " + fmt(m) + " vs " + fmt(q));
  }
  const std::size_t nl = 100000;
  const Eigen::MatrixXd z = sample_latent(prof, nl, 607);
  const Eigen::MatrixXd target = repair_correlation(prof.corr_targets).matrix;
  double worst = 0;
  std::vector<double> a(nl), b(nl);
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    for (Eigen::Index j = i + 1; j < target.cols(); ++j) {
      for (std::size_t r = 0; r < nl; ++r) {
        a[r] = z(static_cast<Eigen::Index>(r), i);
        b[r] = z(static_cast<Eigen::Index>(r), j);
      }
      worst = std::max(worst, std::abs(oracle::two_pass_pearson(a, b) - target(i, j)));
    }
  o.require(worst <= 0.03, "latent correlation deviation " + fmt(worst));
  o.detail << (o.pass ? "" : "; ") << "age " << fmt(age, 5) << ", " << binaries
           << " binaries in band, latent dev " << fmt(worst, 3);
}

RunConfig quiet_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.surgeries = {"all"};
  cfg.outcomes = {OutcomeKind::kLos};
  cfg.figures = false;
  return cfg;
}

void planted_learnability(Outcome& o) {
  const std::uint64_t seed = 707;
  const std::size_t n = 10000;
  GenProfile prof = default_profile("all", n, seed);
  prof.mechanisms.at(OutcomeKind::kLos).target_auc = 0.90;
  calibrate_mechanism(prof, OutcomeKind::kLos);
  const double bayes = bayes_optimal_auc(prof, OutcomeKind::kLos, 200000, seed);
  o.require(std::abs(bayes - 0.90) <= 0.02, "planted task reached bayes AUROC " + fmt(bayes));

  SurgeryData sd;
  sd.cohort = sample_cohort(prof, n, seed);
  RunConfig cfg = quiet_config(seed);
  cfg.families = {Family::kGradBoost};
  cfg.variants = {VariantKind::kPeriOpCognitive};
  const CellResult cell = run_cell(sd, "all", OutcomeKind::kLos, cfg);
  o.require(cell.status == "ok", "cell " + cell.status + ": " + cell.reason);
  if (cell.status != "ok") return;
  const double auc = *cell.variants.at(0).best().ci[Metric::kAuroc].point;
  o.require(auc >= bayes - 0.05, "test AUROC " + fmt(auc) + " < bayes " + fmt(bayes) + " - 0.05");
  o.detail << (o.pass ? "" : "; ") << "bayes " << fmt(bayes, 4) << ", booster test AUROC " << fmt(auc, 4)
           << " (" << describe(cell.variants[0].best().model.hp) << ")";
}

void disruption_recovery(Outcome& o) {
  int flagged = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig cfg = quiet_config(seed);
    cfg.synth_rows = 10000;
    const SurgeryData sd = load_surgery_data(cfg, "all");
    const CellResult cell = run_cell(sd, "all", OutcomeKind::kLos, cfg);
    bool hit = false;
    for (const auto& v : cell.variants)
      for (const auto& d : v.disruptions)
        hit |= (d.a == "avg_nibp" && d.b == "sd_nibp") || (d.a == "sd_nibp" && d.b == "avg_nibp");
    flagged += hit;
    per_seed << (hit ? '1' : '0');
    if (cell.status != "ok") per_seed << "(" << cell.status << ")";
  }
  o.require(flagged >= 9, "flagged in " + std::to_string(flagged) + "/10");
  o.detail << (o.pass ? "" : "; ") << "flagged in " << flagged << "/10 seeds [" << per_seed.str() << "]";
}

void bootstrap_contract(Outcome& o) {
  o.require(kDefaultBootstrapReplicates == 100, "default B");
  // Fully constant data: every defined metric collapses to its point.
  const std::vector<double> flat(60, 0.7);
  const std::vector<int> ones(60, 1);
  const MetricCI c = bootstrap_ci(flat, ones);
  o.require(c.resamples == 100, "resamples " + std::to_string(c.resamples));
  for (Metric k : kAllMetrics) {
    const Interval& iv = c[k];
    if (!iv.point) continue;
    o.require(iv.lo95 && iv.hi95 && *iv.lo95 == *iv.point && *iv.hi95 == *iv.point,
              std::string(to_string(k)) + " did not collapse");
  }
  // Constant scores with both classes: AUROC collapses to 0.5.
  std::vector<int> mixed(60, 0);
  for (std::size_t i = 0; i < 60; i += 3) mixed[i] = 1;
  const MetricCI m = bootstrap_ci(flat, mixed, 100, 9);
  const Interval& a = m[Metric::kAuroc];
  o.require(a.point && *a.point == 0.5 && *a.lo95 == 0.5 && *a.hi95 == 0.5, "constant-score AUROC interval");

  Stream s(99, 0xACC9);
  std::vector<double> sc;
  std::vector<int> y;
  oracle::random_scored_labels(s, 400, sc, y);
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const std::string one = to_json(bootstrap_ci(sc, y, 100, 42)).dump();
  omp_set_num_threads(4);
  const std::string four = to_json(bootstrap_ci(sc, y, 100, 42)).dump();
  omp_set_num_threads(before);
  const std::string again = to_json(bootstrap_ci(sc, y, 100, 42)).dump();
  const std::string serial = to_json(bootstrap_ci(sc, y, 100, 42, 0.5, false)).dump();
  o.require(one == four, "thread count changed the intervals");
  o.require(one == again, "repeat run changed the intervals");
  o.require(one == serial, "serial reference differs");
  const MetricCI r = bootstrap_ci(sc, y, 100, 42);
  const auto& iv = r[Metric::kAuroc];
  o.require(iv.lo95 && iv.hi95 && *iv.lo95 < *iv.point && *iv.point < *iv.hi95, "AUROC interval not proper");
  o.detail << (o.pass ? "" : "; ") << "B=100, collapse, 1 vs 4 threads identical, AUROC "
           << format_ci(iv);
}

void table_shape(Outcome& o) {
  RunConfig cfg;
  cfg.seed = 1010;
  cfg.surgeries = {"each"};
  cfg.synth_rows = 5000;
  cfg.out = g_work / "table_run";
  fs::remove_all(cfg.out);
  const RunSummary s = run_all(cfg);
  o.require(s.exit_code == 0, "run_all exit code " + std::to_string(s.exit_code));

  auto read = [](const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) rows.push_back(csv::split_line(line));
    return rows;
  };
  const std::vector<std::string> t2 = {"Surgery Type",
                                       "Outcome",
                                       "Best Dataset (N0, N1)",
                                       "Best Model",
                                       "AUC (95% CI)",
                                       "Accuracy (95% C.I)",
                                       "F1 Score (95% CI)",
                                       "Precision (95% CI)",
                                       "Sensitivity (95% CI)",
                                       "Specificity (95% CI)"};
  const auto best = read(cfg.out / "best_models.csv");
  const auto metrics = read(cfg.out / "metrics.csv");
  o.require(!best.empty() && best[0] == t2, "best_models.csv header");
  o.require(!metrics.empty() && metrics[0] == t2, "metrics.csv header");

  const auto winners = read(cfg.out / "variant_winners.csv");
  const std::vector<std::string> t3 = {"Surgery Type", "Outcome", "Intra-Op", "Peri-Op", "Peri-Op Cognitive"};
  o.require(!winners.empty() && winners[0] == t3, "variant_winners.csv header");
  std::size_t mortality_rows = 0, mortality_all = 0, rows_ok = 0;
  for (std::size_t r = 1; r < winners.size(); ++r) {
    const auto& row = winners[r];
    if (row.size() != 5) continue;
    int marks = 0;
    for (std::size_t k = 2; k < 5; ++k) marks += !row[k].empty();
    rows_ok += marks == 1;
    if (row[1] == display_name(OutcomeKind::kMortality1y)) {
      ++mortality_rows;
      mortality_all += row[0] == surgery_display_name(kAllSurgeries);
    }
  }
  const std::size_t expected = 7 * (kAllOutcomes.size() - 1) + 1;
  o.require(winners.size() == expected + 1, "variant_winners.csv rows " + std::to_string(winners.size() - 1) +
                                                " vs " + std::to_string(expected));
  o.require(rows_ok == expected, "rows with exactly one winner " + std::to_string(rows_ok));
  o.require(mortality_rows == 1 && mortality_all == 1, "mortality rows");
  o.require(best.size() == expected + 1, "best_models.csv rows " + std::to_string(best.size() - 1));
  o.require(metrics.size() == 3 * expected + 1, "metrics.csv rows " + std::to_string(metrics.size() - 1));
  std::size_t skipped = 0;
  for (const auto& c : s.cells) skipped += c.status == "skipped";
  o.require(skipped == 6, "skipped cells " + std::to_string(skipped));
  o.detail << (o.pass ? "" : "; ") << expected << " cells x 3 variants, " << skipped
           << " mortality cells skipped";
}

void cohen_banding(Outcome& o) {
  struct Case {
    double r;
    Band band;
    int sign;
  };
  const std::vector<Case> cases = {
      {1.0, Band::kHigh, 1},
      {std::nextafter(0.5, 1.0), Band::kHigh, 1},
      {0.5, Band::kModerate, 1},
      {std::nextafter(0.3, 1.0), Band::kModerate, 1},
      {0.3, Band::kLow, 1},
      {0.1, Band::kLow, 1},
      {std::nextafter(0.1, 0.0), Band::kNegligible, 1},
      {0.0, Band::kNegligible, 1},
      {-0.1, Band::kLow, -1},
      {-0.3, Band::kLow, -1},
      {std::nextafter(-0.3, -1.0), Band::kModerate, -1},
      {-0.5, Band::kModerate, -1},
      {std::nextafter(-0.5, -1.0), Band::kHigh, -1},
      {-1.0, Band::kHigh, -1},
  };
  for (const auto& c : cases) {
    const CorrBand b = categorize(c.r);
    o.require(b.band == c.band && b.sign == c.sign, "r=" + fmt(c.r, 17) + " -> " + describe(b));
  }
  bool threw = false;
  try {
    categorize(1.5);
  } catch (const Error&) {
    threw = true;
  }
  o.require(threw, "r=1.5 accepted");
  o.detail << (o.pass ? "" : "; ") << cases.size() << " boundary values";
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "periop_acceptance";
  fs::create_directories(g_work);
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "shap_local_accuracy", 30, shap_local_accuracy},
      {2, "treeshap_exactness", 60, treeshap_exactness},
      {3, "auroc_pairwise_equivalence", 0, auroc_equivalence},
      {4, "gradient_checks", 0, gradient_checks},
      {5, "gradboost_hand_case", 0, gbm_hand_case},
      {6, "synthetic_calibration", 60, synthetic_calibration},
      {7, "planted_learnability", 300, planted_learnability},
      {8, "disruption_recovery", 600, disruption_recovery},
      {9, "bootstrap_contract", 0, bootstrap_contract},
      {10, "table_shape_fidelity", 900, table_shape},
      {11, "cohen_banding", 0, cohen_banding},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0) o.require(secs < c.budget_s, "over the " + fmt(c.budget_s) + " s budget");
    failed += !o.pass;
    std::printf("%s %2d %-28s %7.1f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
