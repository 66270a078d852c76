#include "periop/pipeline.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "periop/cohort_io.hpp"
#include "periop/csv.hpp"
#include "periop/errors.hpp"
#include "periop/random.hpp"
#include "periop/synth.hpp"

namespace periop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

std::string cell_name(const std::string& surgery, OutcomeKind o) {
  return surgery + "__" + std::string(to_string(o));
}

template <class T>
T get_key(const json& j, const char* key, std::set<std::string>& used, T fallback) {
  used.insert(key);
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

const std::vector<Hyperparams>& RunConfig::grid(Family f) const {
  static const std::map<Family, std::vector<Hyperparams>> defaults = [] {
    std::map<Family, std::vector<Hyperparams>> m;
    for (Family fam : kAllFamilies) m[fam] = default_grid(fam);
    return m;
  }();
  const auto it = grids.find(f);
  return it != grids.end() ? it->second : defaults.at(f);
}

RunConfig config_from_json(const json& j0) {
  if (!j0.is_object()) throw ConfigError("config must be a JSON object");
  const json& j = j0.value("format", "") == "periop-manifest" ? j0.at("config") : j0;
  RunConfig c;
  std::set<std::string> used;
  if (auto s = get_key<std::string>(j, "cohort", used, ""); !s.empty()) c.cohort = s;
  if (auto s = get_key<std::string>(j, "profile", used, ""); !s.empty()) c.profile = s;
  c.synth_rows = get_key(j, "synth_rows", used, c.synth_rows);
  c.seed = get_key(j, "seed", used, c.seed);
  c.surgeries = get_key(j, "surgeries", used, c.surgeries);

  auto names = [&](const char* key, auto parse, auto& field, const char* what) {
    used.insert(key);
    if (!j.contains(key)) return;
    field.clear();
    for (const auto& v : j.at(key)) {
      const auto s = v.get<std::string>();
      const auto k = parse(s);
      if (!k) throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
      field.push_back(*k);
    }
  };
  names("outcomes", [](const std::string& s) { return parse_outcome(s); }, c.outcomes, "outcome");
  names("variants", [](const std::string& s) { return parse_variant(s); }, c.variants, "variant");
  names("families", [](const std::string& s) { return parse_family(s); }, c.families, "model family");

  used.insert("grids");
  if (j.contains("grids")) {
    for (const auto& [fam_name, points] : j.at("grids").items()) {
      const auto fam = parse_family(fam_name);
      if (!fam) throw ConfigError("unknown model family '" + fam_name + "' in grids");
      std::vector<Hyperparams> g;
      for (json p : points) {
        if (!p.contains("family")) p["family"] = fam_name;
        g.push_back(hyperparams_from_json(p));
        if (family_of(g.back()) != *fam) throw ConfigError("grid for " + fam_name + " lists another family");
      }
      c.grids[*fam] = std::move(g);
    }
  }
  c.folds = get_key(j, "folds", used, c.folds);
  c.bootstrap = get_key(j, "bootstrap", used, c.bootstrap);
  c.test_fraction = get_key(j, "test_fraction", used, c.test_fraction);
  c.top_k = get_key(j, "top_k", used, c.top_k);
  c.background_cap = get_key(j, "background_cap", used, c.background_cap);
  c.sampling_rows = get_key(j, "sampling_rows", used, c.sampling_rows);
  c.shap_samples = get_key(j, "shap_samples", used, c.shap_samples);
  c.figures = get_key(j, "figures", used, c.figures);
  c.jobs = get_key(j, "jobs", used, c.jobs);
  c.out = get_key<std::string>(j, "out", used, c.out.string());
  for (const auto& [key, _] : j.items())
    if (!used.count(key)) throw ConfigError("unknown config key '" + key + "'");
  return c;
}

json to_json(const RunConfig& c) {
  json grids = json::object();
  for (Family f : c.families) {
    json g = json::array();
    for (const auto& hp : c.grid(f)) g.push_back(to_json(hp));
    grids[std::string(to_string(f))] = g;
  }
  auto strs = [](const auto& v) {
    std::vector<std::string> out;
    for (auto k : v) out.emplace_back(to_string(k));
    return out;
  };
  return {{"cohort", c.cohort ? json(c.cohort->string()) : json(nullptr)},
          {"profile", c.profile ? json(c.profile->string()) : json(nullptr)},
          {"synth_rows", c.synth_rows},
          {"seed", c.seed},
          {"surgeries", c.surgeries},
          {"outcomes", strs(c.outcomes)},
          {"variants", strs(c.variants)},
          {"families", strs(c.families)},
          {"grids", grids},
          {"folds", c.folds},
          {"bootstrap", c.bootstrap},
          {"test_fraction", c.test_fraction},
          {"top_k", c.top_k},
          {"background_cap", c.background_cap},
          {"sampling_rows", c.sampling_rows},
          {"shap_samples", c.shap_samples},
          {"figures", c.figures},
          {"jobs", c.jobs},
          {"out", c.out.string()}};
}

void validate(RunConfig& c) {
  const auto reg = default_registry_ptr();
  std::vector<std::string> surgeries;
  for (const auto& s : c.surgeries) {
    if (s == "each") {
      surgeries.emplace_back(kAllSurgeries);
      for (const auto& t : reg->surgery_types()) surgeries.push_back(t);
    } else if (s == kAllSurgeries || reg->has_surgery(s)) {
      surgeries.push_back(s);
    } else {
      throw ConfigError("unknown surgery '" + s + "'");
    }
  }
  std::vector<std::string> dedup;
  for (const auto& s : surgeries)
    if (std::find(dedup.begin(), dedup.end(), s) == dedup.end()) dedup.push_back(s);
  c.surgeries = dedup;
  if (c.surgeries.empty()) throw ConfigError("no surgeries selected");
  if (c.outcomes.empty()) throw ConfigError("no outcomes selected");
  if (c.variants.empty()) throw ConfigError("no dataset variants selected");
  if (c.families.empty()) throw ConfigError("no model families selected");
  if (c.folds < 2) throw ConfigError("folds must be at least 2");
  if (c.bootstrap < 1) throw ConfigError("bootstrap must be at least 1");
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (c.top_k < 1) throw ConfigError("top_k must be at least 1");
  if (c.background_cap < 1 || c.sampling_rows < 1) throw ConfigError("SHAP caps must be positive");
  if (c.jobs < 0) throw ConfigError("jobs must be >= 0");
  if (c.cohort && c.profile) throw ConfigError("give either a cohort or a profile, not both");
  if (!c.cohort && !c.profile && c.synth_rows < 50) throw ConfigError("synth_rows must be at least 50");
  for (const auto& [f, g] : c.grids) {
    if (g.empty()) throw ConfigError("empty grid for " + std::string(to_string(f)));
    for (const auto& hp : g) validate(hp);
  }
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("jobs");  // parallelism does not change results
  j.erase("out");
  return hex64(fnv1a(j.dump()));
}

SeedChoice resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag) {
  if (flag) return {*flag, "flag"};
  if (const char* env = std::getenv(std::string(kSeedEnvVar).c_str()); env && *env) {
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError(std::string(kSeedEnvVar) + " is not an unsigned integer: '" + env + "'");
    return {v, "env"};
  }
  return {config_seed, "config"};
}

std::string_view surgery_display_name(std::string_view s) {
  if (s == kAllSurgeries) return "All surgeries";
  if (s == "orthopedics") return "Orthopedics";
  if (s == "neurosurgery") return "Neurology";
  if (s == "cardiovascular") return "Cardiac and vascular";
  if (s == "urology") return "Urology";
  if (s == "gynecology") return "Gynecology";
  if (s == "otolaryngology") return "Otolaryngology";
  return s;
}

std::uint64_t cell_seed(std::uint64_t master, std::string_view surgery, OutcomeKind outcome) {
  return derive_seed(master, fnv1a(surgery), fnv1a(to_string(outcome)));
}

std::uint64_t split_seed(std::uint64_t cell) { return derive_seed(cell, 0x5B117); }

std::uint64_t family_seed(std::uint64_t cell, VariantKind variant, Family family) {
  return derive_seed(cell, fnv1a(to_string(variant)), fnv1a(to_string(family)));
}

std::uint64_t explain_seed(std::uint64_t cell, VariantKind variant) {
  return derive_seed(cell, 0x5A4, static_cast<std::uint64_t>(variant));
}

ExplainOptions explain_options(const RunConfig& cfg, std::uint64_t seed) {
  ExplainOptions eo;
  eo.background_cap = cfg.background_cap;
  eo.sampling_rows_cap = cfg.sampling_rows;
  eo.n_samples = cfg.shap_samples;
  eo.seed = seed;
  return eo;
}

std::string skip_reason(std::string_view surgery, OutcomeKind outcome) {
  if (outcome == OutcomeKind::kMortality1y && surgery != kAllSurgeries)
    return "1-year mortality is classified for all surgeries only; single-surgery groups have too few deaths";
  return {};
}

// ---------------------------------------------------------------------------

PreparedData prepare_data(const Cohort& cohort, const DatasetVariant& variant, OutcomeKind outcome,
                          double test_fraction, std::uint64_t split_seed) {
  PreparedData d;
  d.variant = variant;
  d.outcome = outcome;
  FilterResult fr = filter_complete(cohort, variant, outcome);
  d.filter = fr.report;
  const LabelVector lab = binarize_outcome(fr.cohort, outcome);
  d.cohort = fr.cohort.subset(lab.kept_rows);
  d.y = lab;
  for (std::size_t i = 0; i < d.y.kept_rows.size(); ++i) d.y.kept_rows[i] = i;
  d.n1 = d.y.positives();
  d.n0 = d.y.size() - d.n1;
  d.split = train_test_split(d.y, test_fraction, split_seed);
  const Cohort train = d.cohort.subset(d.split.train);
  const Cohort test = d.cohort.subset(d.split.test);
  d.encoder = Encoder::fit(train, variant);
  d.X_train = d.encoder.transform(train);
  d.X_test = d.encoder.transform(test);
  for (std::size_t i : d.split.train) d.y_train.push_back(d.y.y[i]);
  for (std::size_t i : d.split.test) d.y_test.push_back(d.y.y[i]);
  return d;
}

FamilyResult train_family(const PreparedData& d, Family family, const std::vector<Hyperparams>& grid,
                          std::size_t folds, std::size_t bootstrap, std::uint64_t seed, bool parallel) {
  FamilyResult r;
  r.family = family;
  const LabelVector ytr = subset(d.y, d.split.train);
  const FoldPlan plan = stratified_kfold(ytr, folds, derive_seed(seed, 1));
  r.grid = grid_search(grid, d.X_train, d.y_train, plan, derive_seed(seed, 2), parallel);
  r.model = fit(d.X_train, d.y_train, r.grid.best_hp(), derive_seed(seed, 3), parallel);
  const auto p = r.model.predict_proba(d.X_test);
  r.ci = bootstrap_ci(p, d.y_test, bootstrap, derive_seed(seed, 4), 0.5, parallel);
  r.cost = fit_cost(r.grid.best_hp(), d.X_train.rows, d.X_train.cols);
  return r;
}

CellResult run_cell(const SurgeryData& data, const std::string& surgery, OutcomeKind outcome,
                    const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  CellResult c;
  c.surgery = surgery;
  c.outcome = outcome;
  c.seed = cell_seed(cfg.seed, surgery, outcome);
  if (auto why = skip_reason(surgery, outcome); !why.empty()) {
    c.status = "skipped";
    c.reason = why;
    return c;
  }
  try {
    std::vector<Candidate> variant_winners;
    for (VariantKind vk : cfg.variants) {
      const auto tv = std::chrono::steady_clock::now();
      VariantResult v;
      v.variant = vk;
      const PreparedData d = prepare_data(data.cohort, {vk, surgery}, outcome, cfg.test_fraction,
                                          split_seed(c.seed));
      v.n0 = d.n0;
      v.n1 = d.n1;
      v.n_train = d.X_train.rows;
      v.n_test = d.X_test.rows;
      v.warnings = d.encoder.warnings();
      v.warnings.insert(v.warnings.end(), d.X_test.warnings.begin(), d.X_test.warnings.end());

      std::vector<Candidate> cands;
      for (Family f : cfg.families) {
        try {
          FamilyResult r = train_family(d, f, cfg.grid(f), cfg.folds, cfg.bootstrap,
                                        family_seed(c.seed, vk, f), true);
          cands.push_back({f, vk, r.grid.best_hp(), r.ci, r.cost});
          v.families.push_back(std::move(r));
        } catch (const std::exception& e) {
          v.failures.emplace_back(f, e.what());
        }
      }
      if (v.families.empty()) {
        std::string msg = "every model family failed for " + std::string(to_string(vk));
        for (const auto& [f, e] : v.failures) msg += "; " + std::string(to_string(f)) + ": " + e;
        throw Error(msg);
      }
      v.winner = select_best(cands).index;
      variant_winners.push_back(cands[v.winner]);

      v.shap = explain_model(v.best().model, d.X_test, d.X_train, explain_options(cfg, explain_seed(c.seed, vk)));
      std::vector<std::size_t> rows(v.shap.rows);
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
      v.explained = d.X_test.take_rows(rows);
      v.impacts = rank_impacts(v.shap, v.explained, cfg.top_k);
      if (data.network) v.disruptions = disruption_report(*data.network, v.impacts);
      v.seconds = seconds_since(tv);
      c.variants.push_back(std::move(v));
    }
    c.best_variant = select_best(variant_winners).index;
    c.status = "ok";
  } catch (const std::exception& e) {
    c.status = "failed";
    c.reason = e.what();
    c.variants.clear();
  }
  c.seconds = seconds_since(t0);
  return c;
}

// ---------------------------------------------------------------------------
// Data

SurgeryData load_surgery_data(const RunConfig& cfg, const std::string& surgery) {
  SurgeryData sd;
  if (cfg.cohort) {
    sd.cohort = load_cohort(*cfg.cohort);
  } else {
    GenProfile p = cfg.profile ? profile_from_json(read_json(*cfg.profile))
                               : default_profile(surgery, cfg.synth_rows, 0);
    p.seed = derive_seed(cfg.seed, fnv1a(cfg.profile ? std::string("profile") : surgery), 0xC0407);
    validate(p);
    sd.cohort = sample_cohort(p);
    sd.profile = to_json(p);
  }
  try {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < sd.cohort.rows(); ++i)
      if (surgery == kAllSurgeries || sd.cohort.surgery[i] == surgery) rows.push_back(i);
    const Cohort sub = sd.cohort.subset(rows);
    sd.baseline = pearson_matrix(sub, intraop_variables(*sd.cohort.registry));
    sd.network = build_network(*sd.baseline);
  } catch (const std::exception& e) {
    sd.corr_error = e.what();
  }
  return sd;
}

// ---------------------------------------------------------------------------
// Tables

std::string format_ci(const Interval& iv) {
  if (!iv.point) return "NA";
  std::string s = csv::format_fixed(*iv.point, 2);
  if (iv.lo95 && iv.hi95)
    s += " (" + csv::format_fixed(*iv.lo95, 2) + " - " + csv::format_fixed(*iv.hi95, 2) + ")";
  return s;
}

namespace {

const std::vector<std::string> kTable2Header = {
    "Surgery Type",       "Outcome",           "Best Dataset (N0, N1)", "Best Model",
    "AUC (95% CI)",       "Accuracy (95% C.I)", "F1 Score (95% CI)",     "Precision (95% CI)",
    "Sensitivity (95% CI)", "Specificity (95% CI)"};

constexpr std::array<Metric, 6> kTable2Metrics = {Metric::kAuroc,     Metric::kAccuracy,
                                                  Metric::kF1,        Metric::kPrecision,
                                                  Metric::kSensitivity, Metric::kSpecificity};

std::vector<std::string> table2_row(const CellResult& c, const VariantResult& v) {
  const FamilyResult& b = v.best();
  std::vector<std::string> row = {
      std::string(surgery_display_name(c.surgery)), std::string(display_name(c.outcome)),
      std::string(display_name(v.variant)) + " (0: " + std::to_string(v.n0) +
          ", 1: " + std::to_string(v.n1) + ")",
      std::string(display_name(b.family))};
  for (Metric m : kTable2Metrics) row.push_back(format_ci(b.ci[m]));
  return row;
}

std::string table_text(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) csv::write_row(os, r);
  return os.str();
}

}  // namespace

void write_table2(const std::vector<CellResult>& cells, bool winners_only, const fs::path& path) {
  std::vector<std::vector<std::string>> rows = {kTable2Header};
  for (const auto& c : cells) {
    if (c.status != "ok") continue;
    if (winners_only) {
      rows.push_back(table2_row(c, c.variants[c.best_variant]));
    } else {
      for (const auto& v : c.variants) rows.push_back(table2_row(c, v));
    }
  }
  write_file_atomic(path, table_text(rows));
}

void write_table3(const std::vector<CellResult>& cells, const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Surgery Type", "Outcome"};
  for (VariantKind v : kAllVariants) header.emplace_back(display_name(v));
  rows.push_back(header);
  for (const auto& c : cells) {
    if (c.status != "ok") continue;
    std::vector<std::string> row = {std::string(surgery_display_name(c.surgery)),
                                    std::string(display_name(c.outcome))};
    for (VariantKind v : kAllVariants)
      row.push_back(c.variants[c.best_variant].variant == v ? "✓" : "");
    rows.push_back(row);
  }
  write_file_atomic(path, table_text(rows));
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Run

namespace {

json family_json(const FamilyResult& r) {
  json grid = json::array();
  for (const auto& pt : r.grid.points) {
    json g = {{"hyperparams", to_json(pt.hp)}, {"fold_auroc", pt.fold_auroc}};
    g["mean_auroc"] = pt.mean_auroc ? json(*pt.mean_auroc) : json(nullptr);
    if (pt.failed()) g["error"] = pt.error;
    grid.push_back(g);
  }
  return {{"family", to_string(r.family)},
          {"model", display_name(r.family)},
          {"hyperparams", to_json(r.grid.best_hp())},
          {"cv_auroc", r.grid.best_auroc()},
          {"cost", r.cost},
          {"test", to_json(r.ci)},
          {"grid", grid}};
}

json variant_json(const VariantResult& v) {
  json fams = json::array();
  for (const auto& f : v.families) fams.push_back(family_json(f));
  json fails = json::array();
  for (const auto& [f, e] : v.failures) fails.push_back({{"family", to_string(f)}, {"error", e}});
  json imp = json::array();
  for (const auto& i : v.impacts)
    imp.push_back({{"rank", i.rank + 1},
                   {"feature", i.name},
                   {"mean_abs_shap", i.mean_abs_phi},
                   {"directionality", i.directionality}});
  json dis = json::array();
  for (const auto& d : v.disruptions) dis.push_back(to_json(d));
  return {{"variant", to_string(v.variant)},
          {"n0", v.n0},
          {"n1", v.n1},
          {"n_train", v.n_train},
          {"n_test", v.n_test},
          {"winner", to_string(v.best().family)},
          {"families", fams},
          {"failures", fails},
          {"shap", {{"method", v.shap.method},
                    {"space", to_string(v.shap.space)},
                    {"rows", v.shap.rows},
                    {"base_value", v.shap.base_value}}},
          {"impacts", imp},
          {"disruptions", dis},
          {"warnings", v.warnings},
          {"seconds", v.seconds}};
}

// Writes one cell's directory through a temporary sibling and a rename.
std::vector<std::string> write_cell(const CellResult& c, const RunConfig& cfg, const fs::path& cells_dir) {
  std::vector<std::string> artifacts;
  const std::string name = cell_name(c.surgery, c.outcome);
  const fs::path tmp = cells_dir / (name + ".partial");
  const fs::path dst = cells_dir / name;
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  json cell = {{"surgery", c.surgery},
               {"outcome", to_string(c.outcome)},
               {"status", c.status},
               {"reason", c.reason},
               {"seed", c.seed}};
  json vars = json::array();
  for (const auto& v : c.variants) {
    const std::string vn(to_string(v.variant));
    const fs::path vd = tmp / vn;
    fs::create_directories(vd);
    vars.push_back(variant_json(v));
    {
      std::ofstream out(vd / "model.json");
      out << to_json(v.best().model).dump(1) << "\n";
    }
    write_shap_csv(v.shap, vd / "shap.csv");
    write_impacts_csv(v.impacts, vd / "impacts.csv");
    artifacts.push_back("cells/" + name + "/" + vn + "/model.json");
    artifacts.push_back("cells/" + name + "/" + vn + "/shap.csv");
    artifacts.push_back("cells/" + name + "/" + vn + "/impacts.csv");
    if (cfg.figures) {
      const std::string title = std::string(surgery_display_name(c.surgery)) + " / " +
                                std::string(display_name(c.outcome)) + " / " +
                                std::string(display_name(v.variant)) + " / " +
                                std::string(display_name(v.best().family));
      std::ofstream out(vd / "beeswarm.svg");
      out << beeswarm_svg(v.shap, v.explained, v.impacts, title);
      artifacts.push_back("cells/" + name + "/" + vn + "/beeswarm.svg");
    }
  }
  cell["variants"] = vars;
  if (c.status == "ok") cell["best_variant"] = to_string(c.variants[c.best_variant].variant);
  {
    std::ofstream out(tmp / "cell.json");
    out << cell.dump(1) << "\n";
  }
  artifacts.push_back("cells/" + name + "/cell.json");
  fs::remove_all(dst);
  fs::rename(tmp, dst);
  return artifacts;
}

std::vector<std::string> write_surgery_data(const SurgeryData& sd, const std::string& surgery,
                                            const RunConfig& cfg, const fs::path& out) {
  std::vector<std::string> artifacts;
  if (!sd.profile.is_null()) {
    fs::create_directories(out / "cohorts");
    write_cohort(sd.cohort, out / "cohorts" / (surgery + ".csv"));
    write_file_atomic(out / "cohorts" / (surgery + ".profile.json"), sd.profile.dump(1) + "\n");
    artifacts.push_back("cohorts/" + surgery + ".csv");
    artifacts.push_back("cohorts/" + surgery + ".profile.json");
  }
  if (sd.baseline) {
    fs::create_directories(out / "corr");
    write_corr_csv(*sd.baseline, out / "corr" / (surgery + ".csv"));
    write_file_atomic(out / "corr" / (surgery + "_network.json"), to_json(*sd.network).dump(1) + "\n");
    artifacts.push_back("corr/" + surgery + ".csv");
    artifacts.push_back("corr/" + surgery + "_network.json");
    if (cfg.figures) {
      const std::string title(surgery_display_name(surgery));
      write_file_atomic(out / "corr" / (surgery + "_heatmap.svg"),
                        heatmap_svg(*sd.baseline, "Intraoperative correlations: " + title));
      write_file_atomic(out / "corr" / (surgery + "_network.svg"),
                        network_svg(*sd.network, "Correlation network: " + title));
      artifacts.push_back("corr/" + surgery + "_heatmap.svg");
      artifacts.push_back("corr/" + surgery + "_network.svg");
    }
  }
  return artifacts;
}

json build_info() {
  return {{"tool", "periop"},
          {"version", kToolVersion},
          {"compiler", __VERSION__},
          {"cxx_standard", __cplusplus},
          {"openmp", _OPENMP},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"model_format", kModelFormatVersion}};
}

}  // namespace

RunSummary run_all(RunConfig cfg, const std::string& seed_source) {
  validate(cfg);
  if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = cfg.out;
  fs::create_directories(out / "cells");

  RunSummary summary;
  summary.out = out;
  json data_info = json::array();
  json cells_json = json::array();
  json disruptions = json::array();
  json metrics = json::array();
  std::vector<std::string> artifacts;

  for (const auto& surgery : cfg.surgeries) {
    const auto ts = std::chrono::steady_clock::now();
    SurgeryData sd;
    std::string load_error;
    try {
      sd = load_surgery_data(cfg, surgery);
      const auto a = write_surgery_data(sd, surgery, cfg, out);
      artifacts.insert(artifacts.end(), a.begin(), a.end());
    } catch (const std::exception& e) {
      load_error = e.what();
    }
    json di = {{"surgery", surgery},
               {"source", cfg.cohort ? cfg.cohort->string() : cfg.profile ? "profile" : "synthetic"},
               {"rows", load_error.empty() ? sd.cohort.rows() : 0},
               {"seconds", seconds_since(ts)}};
    if (!sd.profile.is_null()) di["profile_seed"] = sd.profile.at("seed");
    if (!load_error.empty()) di["error"] = load_error;
    if (!sd.corr_error.empty()) di["corr_error"] = sd.corr_error;
    if (sd.network) di["network"] = to_json(*sd.network);
    data_info.push_back(di);

    for (OutcomeKind o : cfg.outcomes) {
      CellResult c;
      if (!load_error.empty()) {
        c.surgery = surgery;
        c.outcome = o;
        c.seed = cell_seed(cfg.seed, surgery, o);
        c.status = skip_reason(surgery, o).empty() ? "failed" : "skipped";
        c.reason = c.status == "failed" ? "cohort unavailable: " + load_error : skip_reason(surgery, o);
      } else {
        c = run_cell(sd, surgery, o, cfg);
      }
      std::vector<std::string> cell_artifacts;
      try {
        cell_artifacts = write_cell(c, cfg, out / "cells");
      } catch (const std::exception& e) {
        c.status = "failed";
        c.reason = std::string("writing artifacts: ") + e.what();
      }
      artifacts.insert(artifacts.end(), cell_artifacts.begin(), cell_artifacts.end());
      json cj = {{"surgery", c.surgery},
                 {"outcome", to_string(c.outcome)},
                 {"status", c.status},
                 {"reason", c.reason},
                 {"seed", c.seed},
                 {"seconds", c.seconds},
                 {"artifacts", cell_artifacts}};
      if (c.status == "ok") {
        const VariantResult& bv = c.variants[c.best_variant];
        cj["best_variant"] = to_string(bv.variant);
        cj["best_model"] = to_string(bv.best().family);
        json vt = json::array();
        for (const auto& v : c.variants)
          vt.push_back({{"variant", to_string(v.variant)},
                        {"winner", to_string(v.best().family)},
                        {"hyperparams", to_json(v.best().grid.best_hp())},
                        {"seconds", v.seconds}});
        cj["variants"] = vt;
        for (const auto& v : c.variants) {
          json pairs = json::array();
          for (const auto& d : v.disruptions) pairs.push_back(to_json(d));
          disruptions.push_back({{"surgery", c.surgery},
                                 {"outcome", to_string(c.outcome)},
                                 {"variant", to_string(v.variant)},
                                 {"model", to_string(v.best().family)},
                                 {"best_variant", &v == &bv},
                                 {"pairs", pairs}});
          json mv = variant_json(v);
          mv["surgery"] = c.surgery;
          mv["outcome"] = to_string(c.outcome);
          metrics.push_back(mv);
        }
      }
      if (c.status == "failed") summary.exit_code = 3;
      cells_json.push_back(cj);
      summary.cells.push_back(std::move(c));
    }
  }

  write_table2(summary.cells, false, out / "metrics.csv");
  write_table2(summary.cells, true, out / "best_models.csv");
  write_table3(summary.cells, out / "variant_winners.csv");
  for (auto& m : metrics) m.erase("seconds");
  write_file_atomic(out / "metrics.json", metrics.dump(1) + "\n");
  write_file_atomic(out / "disruptions.json", disruptions.dump(1) + "\n");
  artifacts.insert(artifacts.end(), {"metrics.csv", "best_models.csv", "variant_winners.csv",
                                     "metrics.json", "disruptions.json"});

  json manifest = {{"format", "periop-manifest"},
                   {"version", 1},
                   {"build", build_info()},
                   {"config", to_json(cfg)},
                   {"config_hash", config_hash(cfg)},
                   {"seed", cfg.seed},
                   {"seed_source", seed_source},
                   {"threads", omp_get_max_threads()},
                   {"data", data_info},
                   {"cells", cells_json},
                   {"artifacts", artifacts},
                   {"exit_code", summary.exit_code},
                   {"total_seconds", seconds_since(t0)}};
  write_file_atomic(out / "manifest.json", manifest.dump(1) + "\n");
  const ReportResult rep = render_report(out);
  write_file_atomic(out / "report.md", rep.markdown);
  return summary;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(csv::split_line(line));
  return rows;
}

void markdown_table(std::ostringstream& os, const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  auto emit = [&](const std::vector<std::string>& r) {
    os << "|";
    for (const auto& f : r) os << " " << f << " |";
    os << "\n";
  };
  emit(rows[0]);
  os << "|";
  for (std::size_t i = 0; i < rows[0].size(); ++i) os << " --- |";
  os << "\n";
  for (std::size_t i = 1; i < rows.size(); ++i) emit(rows[i]);
  os << "\n";
}

}  // namespace

ReportResult render_report(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw Error("no manifest.json in " + dir.string());
  const json m = read_json(mpath);
  ReportResult r;
  std::ostringstream os;
  os << "# periop run report\n\n";
  os << "- seed: " << m.value("seed", 0ULL) << " (from " << m.value("seed_source", "config") << ")\n";
  os << "- config hash: " << m.value("config_hash", "") << "\n";
  if (m.contains("total_seconds"))
    os << "- wall time: " << csv::format_fixed(m.at("total_seconds").get<double>(), 1) << " s\n";
  os << "\n";

  auto table = [&](const char* file, const char* heading) {
    const fs::path p = dir / file;
    os << "## " << heading << "\n\n";
    if (!fs::exists(p)) {
      r.missing.emplace_back(file);
      os << "_missing: " << file << "_\n\n";
      return;
    }
    markdown_table(os, read_csv_rows(p));
  };
  table("best_models.csv", "Best model per surgery and outcome");
  table("variant_winners.csv", "Best dataset per surgery and outcome");
  table("metrics.csv", "Best model per dataset");

  os << "## Cells\n\n";
  for (const auto& c : m.value("cells", json::array())) {
    const std::string surgery = c.value("surgery", "");
    const auto o = parse_outcome(c.value("outcome", ""));
    os << "### " << surgery_display_name(surgery) << " / "
       << (o ? display_name(*o) : std::string_view(c.value("outcome", ""))) << "\n\n";
    const std::string status = c.value("status", "");
    if (status == "skipped") {
      os << "Skipped: " << c.value("reason", "") << "\n\n";
      continue;
    }
    if (status == "failed") {
      os << "Failed: " << c.value("reason", "") << "\n\n";
      continue;
    }
    os << "Best: " << c.value("best_variant", "") << " / " << c.value("best_model", "") << "\n\n";
    for (const auto& a : c.value("artifacts", json::array())) {
      const std::string rel = a.get<std::string>();
      if (!fs::exists(dir / rel)) {
        r.missing.push_back(rel);
        continue;
      }
      if (rel.size() > 4 && rel.ends_with(".svg")) os << "![" << rel << "](" << rel << ")\n\n";
    }
  }

  os << "## Baseline correlation networks\n\n";
  for (const auto& d : m.value("data", json::array())) {
    const std::string s = d.value("surgery", "");
    for (const char* suffix : {"_heatmap.svg", "_network.svg"}) {
      const std::string rel = "corr/" + s + suffix;
      if (fs::exists(dir / rel)) os << "![" << rel << "](" << rel << ")\n\n";
    }
    if (d.contains("corr_error")) os << s << ": " << d.at("corr_error").get<std::string>() << "\n\n";
  }

  os << "## Flagged disruptions\n\n";
  const fs::path dpath = dir / "disruptions.json";
  if (fs::exists(dpath)) {
    bool any = false;
    for (const auto& e : read_json(dpath))
      for (const auto& p : e.at("pairs")) {
        any = true;
        os << "- " << surgery_display_name(e.value("surgery", "")) << " / " << e.value("outcome", "")
           << " / " << e.value("variant", "") << " (" << e.value("model", "") << "): "
           << p.at("pair")[0].get<std::string>() << " & " << p.at("pair")[1].get<std::string>()
           << ", baseline " << p.value("baseline_band", "") << "\n";
      }
    if (!any) os << "None.\n";
    os << "\n";
  } else {
    r.missing.emplace_back("disruptions.json");
  }

  for (const auto& a : m.value("artifacts", json::array())) {
    const std::string rel = a.get<std::string>();
    if (!fs::exists(dir / rel) && std::find(r.missing.begin(), r.missing.end(), rel) == r.missing.end())
      r.missing.push_back(rel);
  }
  if (!r.missing.empty()) {
    os << "## Missing artifacts\n\n";
    for (const auto& x : r.missing) os << "- " << x << "\n";
    os << "\n";
  }
  r.markdown = os.str();
  return r;
}

}  // namespace periop
