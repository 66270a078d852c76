#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "periop/cohort_io.hpp"
#include "periop/errors.hpp"
#include "periop/pipeline.hpp"
#include "periop/random.hpp"
#include "periop/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace periop;

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string out;
  int jobs = 0;
  std::string surgery, outcome, variant;
  std::string cohort;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool selectors) {
  cmd->add_option("--config", f.config, "Run config JSON (or a run manifest)");
  f.seed_opt = cmd->add_option("--seed", f.seed, "Master seed; overrides PERIAIIMS_SEED and the config");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--jobs", f.jobs, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--cohort", f.cohort, "Cohort CSV; synthetic data when omitted");
  if (selectors) {
    cmd->add_option("--surgery", f.surgery, "Surgery, or a comma list; 'each' = all + every group");
    cmd->add_option("--outcome", f.outcome, "Outcome, or a comma list");
    cmd->add_option("--variant", f.variant, "Dataset variant, or a comma list");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

// Config file, then flags; seed precedence is flag > env > config.
RunConfig build_config(const CommonFlags& f, std::string* seed_source) {
  RunConfig c = f.config.empty() ? RunConfig{} : config_from_json(read_json_file(f.config));
  const auto choice = resolve_seed(
      c.seed, f.seed_opt && f.seed_opt->count() ? std::optional<std::uint64_t>(f.seed) : std::nullopt);
  c.seed = choice.seed;
  if (seed_source) *seed_source = choice.source;
  if (!f.out.empty()) c.out = f.out;
  if (f.jobs > 0) c.jobs = f.jobs;
  if (!f.cohort.empty()) {
    c.cohort = f.cohort;
    c.profile.reset();
  }
  if (!f.surgery.empty()) c.surgeries = split_list(f.surgery);
  if (!f.outcome.empty()) {
    c.outcomes.clear();
    for (const auto& s : split_list(f.outcome)) {
      const auto o = parse_outcome(s);
      if (!o) throw ConfigError("unknown outcome '" + s + "'");
      c.outcomes.push_back(*o);
    }
  }
  if (!f.variant.empty()) {
    c.variants.clear();
    for (const auto& s : split_list(f.variant)) {
      const auto v = parse_variant(s);
      if (!v) throw ConfigError("unknown variant '" + s + "'");
      c.variants.push_back(*v);
    }
  }
  validate(c);
  if (c.jobs > 0) omp_set_num_threads(c.jobs);
  return c;
}

// Single-step verbs work on exactly one (surgery, outcome, variant).
struct Target {
  std::string surgery;
  OutcomeKind outcome;
  VariantKind variant;
};

Target single_target(const RunConfig& c) {
  if (c.surgeries.size() != 1) throw ConfigError("choose exactly one surgery with --surgery");
  if (c.outcomes.size() != 1) throw ConfigError("choose exactly one outcome with --outcome");
  if (c.variants.size() != 1) throw ConfigError("choose exactly one variant with --variant");
  Target t{c.surgeries[0], c.outcomes[0], c.variants[0]};
  if (auto why = skip_reason(t.surgery, t.outcome); !why.empty()) throw ConfigError(why);
  return t;
}

void write_text(const fs::path& p, const std::string& s) { write_file_atomic(p, s); }

// ---------------------------------------------------------------------------

int cmd_synth(const CommonFlags& f, std::size_t n, const std::string& profile_path) {
  CommonFlags g = f;
  g.cohort.clear();
  RunConfig c = build_config(g, nullptr);
  if (c.surgeries.size() != 1) throw ConfigError("synth takes one surgery");
  const std::string surgery = c.surgeries[0];
  GenProfile p = profile_path.empty() ? default_profile(surgery, n, c.seed)
                                      : profile_from_json(read_json_file(profile_path));
  if (!profile_path.empty()) {
    if (n > 0) p.n = n;
    p.seed = c.seed;
  }
  validate(p);
  const Cohort cohort = sample_cohort(p);
  const fs::path out = f.out.empty() ? fs::path("periop_synth") : fs::path(f.out);
  fs::create_directories(out);
  write_cohort(cohort, out / "cohort.csv");
  write_text(out / "profile.json", to_json(p).dump(1) + "\n");
  std::cout << "wrote " << cohort.rows() << " rows to " << (out / "cohort.csv").string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& f) {
  std::string seed_source;
  RunConfig c = build_config(f, &seed_source);
  const Target t = single_target(c);
  const SurgeryData sd = load_surgery_data(c, t.surgery);
  const std::uint64_t cell = cell_seed(c.seed, t.surgery, t.outcome);
  const PreparedData d = prepare_data(sd.cohort, {t.variant, t.surgery}, t.outcome, c.test_fraction,
                                      split_seed(cell));
  std::vector<FamilyResult> results;
  std::vector<Candidate> cands;
  json fams = json::array();
  for (Family fam : c.families) {
    try {
      FamilyResult r = train_family(d, fam, c.grid(fam), c.folds, c.bootstrap,
                                    family_seed(cell, t.variant, fam), true);
      cands.push_back({fam, t.variant, r.grid.best_hp(), r.ci, r.cost});
      fams.push_back({{"family", to_string(fam)},
                      {"hyperparams", to_json(r.grid.best_hp())},
                      {"cv_auroc", r.grid.best_auroc()},
                      {"cost", r.cost}});
      results.push_back(std::move(r));
    } catch (const std::exception& e) {
      fams.push_back({{"family", to_string(fam)}, {"error", e.what()}});
      std::cerr << to_string(fam) << ": " << e.what() << "\n";
    }
  }
  if (results.empty()) throw Error("every model family failed");
  const std::size_t w = select_best(cands).index;
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "model.json", to_json(results[w].model).dump(1) + "\n");
  json train = {{"format", "periop-train"},
                {"config", to_json(c)},
                {"seed_source", seed_source},
                {"surgery", t.surgery},
                {"outcome", to_string(t.outcome)},
                {"variant", to_string(t.variant)},
                {"n0", d.n0},
                {"n1", d.n1},
                {"n_train", d.X_train.rows},
                {"n_test", d.X_test.rows},
                {"encoder", d.encoder.to_json()},
                {"winner", to_string(results[w].family)},
                {"families", fams}};
  write_text(out / "train.json", train.dump(1) + "\n");
  std::cout << "winner " << display_name(results[w].family) << " ("
            << describe(results[w].grid.best_hp()) << "), cv AUROC "
            << results[w].grid.best_auroc() << "\n";
  return 0;
}

struct Loaded {
  RunConfig cfg;
  Target t;
  TrainedModel model;
  PreparedData data;
  std::uint64_t cell = 0;
};

// Rebuilds the training split behind a `train` output directory.
Loaded load_trained(const fs::path& dir, const CommonFlags& f) {
  const json train = read_json_file(dir / "train.json");
  if (train.value("format", "") != "periop-train") throw ConfigError(dir.string() + " is not a train output");
  Loaded l;
  l.cfg = config_from_json(train.at("config"));
  if (!f.cohort.empty()) {
    l.cfg.cohort = f.cohort;
    l.cfg.profile.reset();
  }
  validate(l.cfg);
  if (f.jobs > 0) omp_set_num_threads(f.jobs);
  l.t = single_target(l.cfg);
  l.model = model_from_json(read_json_file(dir / "model.json"));
  const SurgeryData sd = load_surgery_data(l.cfg, l.t.surgery);
  l.cell = cell_seed(l.cfg.seed, l.t.surgery, l.t.outcome);
  l.data = prepare_data(sd.cohort, {l.t.variant, l.t.surgery}, l.t.outcome, l.cfg.test_fraction,
                        split_seed(l.cell));
  if (l.data.encoder.to_json() != train.at("encoder"))
    throw Error("cohort does not reproduce the training encoder; was it trained on this data?");
  return l;
}

int cmd_evaluate(const CommonFlags& f, const std::string& model_dir) {
  Loaded l = load_trained(model_dir, f);
  check_provenance(l.model.columns, l.data.X_test);
  const auto p = l.model.predict_proba(l.data.X_test);
  const MetricCI ci = bootstrap_ci(p, l.data.y_test, l.cfg.bootstrap,
                                   derive_seed(family_seed(l.cell, l.t.variant, l.model.family), 4));
  const fs::path out = f.out.empty() ? fs::path(model_dir) : fs::path(f.out);
  fs::create_directories(out);
  json ev = {{"model", to_string(l.model.family)},
             {"n_test", l.data.X_test.rows},
             {"metrics", to_json(ci)}};
  write_text(out / "evaluation.json", ev.dump(1) + "\n");
  for (Metric m : kAllMetrics) std::cout << to_string(m) << " " << format_ci(ci[m]) << "\n";
  return 0;
}

int cmd_explain(const CommonFlags& f, const std::string& model_dir, std::size_t top_k) {
  Loaded l = load_trained(model_dir, f);
  const ShapMatrix shap = explain_model(l.model, l.data.X_test, l.data.X_train,
                                        explain_options(l.cfg, explain_seed(l.cell, l.t.variant)));
  std::vector<std::size_t> rows(shap.rows);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const EncodedMatrix X = l.data.X_test.take_rows(rows);
  const auto impacts = rank_impacts(shap, X, top_k > 0 ? top_k : l.cfg.top_k);
  const fs::path out = f.out.empty() ? fs::path(model_dir) : fs::path(f.out);
  fs::create_directories(out);
  write_shap_csv(shap, out / "shap.csv");
  write_impacts_csv(impacts, out / "impacts.csv");
  write_text(out / "beeswarm.svg",
             beeswarm_svg(shap, X, impacts,
                          std::string(surgery_display_name(l.t.surgery)) + " / " +
                              std::string(display_name(l.t.outcome)) + " / " +
                              std::string(display_name(l.model.family))));
  for (const auto& i : impacts)
    std::cout << i.rank + 1 << " " << i.name << " " << i.mean_abs_phi << " " << i.directionality << "\n";
  return 0;
}

int cmd_corr(const CommonFlags& f) {
  RunConfig c = build_config(f, nullptr);
  if (c.surgeries.size() != 1) throw ConfigError("corr takes one surgery");
  const std::string s = c.surgeries[0];
  const SurgeryData sd = load_surgery_data(c, s);
  if (!sd.baseline) throw Error(sd.corr_error);
  const fs::path out = f.out.empty() ? fs::path("periop_corr") : fs::path(f.out);
  fs::create_directories(out);
  write_corr_csv(*sd.baseline, out / (s + ".csv"));
  write_text(out / (s + "_network.json"), to_json(*sd.network).dump(1) + "\n");
  write_text(out / (s + "_heatmap.svg"),
             heatmap_svg(*sd.baseline, "Intraoperative correlations: " + std::string(surgery_display_name(s))));
  write_text(out / (s + "_network.svg"),
             network_svg(*sd.network, "Correlation network: " + std::string(surgery_display_name(s))));
  for (const auto& e : sd.network->edges)
    std::cout << sd.network->vars[e.a] << " " << sd.network->vars[e.b] << " " << e.r << " "
              << describe(e.band) << "\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const ReportResult r = render_report(run_dir);
  write_text(fs::path(run_dir) / "report.md", r.markdown);
  for (const auto& m : r.missing) std::cerr << "missing: " << m << "\n";
  std::cout << "wrote " << (fs::path(run_dir) / "report.md").string() << "\n";
  return r.missing.empty() ? 0 : kExitPartial;
}

int cmd_run_all(const CommonFlags& f) {
  std::string seed_source;
  RunConfig c = build_config(f, &seed_source);
  const RunSummary s = run_all(c, seed_source);
  for (const auto& cell : s.cells) {
    std::cout << cell.surgery << " " << to_string(cell.outcome) << " " << cell.status;
    if (cell.status == "ok") {
      const auto& v = cell.variants[cell.best_variant];
      std::cout << " " << to_string(v.variant) << " " << display_name(v.best().family) << " AUC "
                << format_ci(v.best().ci[Metric::kAuroc]);
    } else {
      std::cout << ": " << cell.reason;
    }
    std::cout << "\n";
  }
  std::cout << "outputs in " << s.out.string() << "\n";
  return s.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perioperative outcome modelling: synthetic cohorts, model search, SHAP and correlation reports"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, eval_f, explain_f, corr_f, run_f;
  std::size_t synth_n = 1000;
  std::string synth_profile, eval_model, explain_model_dir, report_dir;
  std::size_t top_k = 0;

  auto* synth = app.add_subcommand("synth", "Sample a synthetic cohort");
  add_common(synth, synth_f, false);
  synth->add_option("--surgery", synth_f.surgery, "Surgery group or 'all'")->default_val("all");
  synth->add_option("--n", synth_n, "Rows")->check(CLI::PositiveNumber);
  synth->add_option("--profile", synth_profile, "Generation profile JSON");

  auto* train = app.add_subcommand("train", "Grid-search every family on one dataset and keep the winner");
  add_common(train, train_f, true);

  auto* evaluate = app.add_subcommand("evaluate", "Test metrics with bootstrap CIs for a trained model");
  add_common(evaluate, eval_f, false);
  evaluate->add_option("--model", eval_model, "Directory written by train")->required();

  auto* explain = app.add_subcommand("explain", "SHAP values, feature ranking and beeswarm plot");
  add_common(explain, explain_f, false);
  explain->add_option("--model", explain_model_dir, "Directory written by train")->required();
  explain->add_option("--top-k", top_k, "Features in the ranking");

  auto* corr = app.add_subcommand("corr", "Intraoperative correlation matrix and network");
  add_common(corr, corr_f, true);

  auto* report = app.add_subcommand("report", "Render report.md for a run directory");
  report->add_option("--run", report_dir, "Run directory")->required();

  auto* run = app.add_subcommand("run-all", "Full pipeline over surgeries, outcomes and variants");
  add_common(run, run_f, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_f, synth_n, synth_profile);
    if (train->parsed()) return cmd_train(train_f);
    if (evaluate->parsed()) return cmd_evaluate(eval_f, eval_model);
    if (explain->parsed()) return cmd_explain(explain_f, explain_model_dir, top_k);
    if (corr->parsed()) return cmd_corr(corr_f);
    if (report->parsed()) return cmd_report(report_dir);
    if (run->parsed()) return cmd_run_all(run_f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
