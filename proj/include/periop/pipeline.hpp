#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "periop/data_model.hpp"
#include "periop/encode.hpp"
#include "periop/evalx.hpp"
#include "periop/explain.hpp"
#include "periop/metrics.hpp"
#include "periop/models.hpp"
#include "periop/netcorr.hpp"

namespace periop {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kSeedEnvVar = "PERIAIIMS_SEED";

struct RunConfig {
  // Input cohort CSV. When absent, each surgery gets its own synthetic cohort
  // (or every cell reads the cohort sampled from `profile`, when given).
  std::optional<std::filesystem::path> cohort;
  std::optional<std::filesystem::path> profile;
  std::size_t synth_rows = 5000;

  std::uint64_t seed = 0;
  std::vector<std::string> surgeries = {std::string(kAllSurgeries)};
  std::vector<OutcomeKind> outcomes = {kAllOutcomes.begin(), kAllOutcomes.end()};
  std::vector<VariantKind> variants = {kAllVariants.begin(), kAllVariants.end()};
  std::vector<Family> families = {kAllFamilies.begin(), kAllFamilies.end()};
  std::map<Family, std::vector<Hyperparams>> grids;  // families not listed use default_grid

  std::size_t folds = kDefaultFolds;
  std::size_t bootstrap = kDefaultBootstrapReplicates;
  double test_fraction = kDefaultTestFraction;
  std::size_t top_k = 10;
  std::size_t background_cap = 1000;
  std::size_t sampling_rows = 200;
  std::size_t shap_samples = 64;
  bool figures = true;

  int jobs = 0;  // 0 keeps the OpenMP default
  std::filesystem::path out = "periop_run";

  const std::vector<Hyperparams>& grid(Family f) const;
};

// Accepts either a config object or a run manifest (its "config" member).
// Unknown keys and bad values raise ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
// "each" in the surgery list expands to "all" plus every registry surgery.
void validate(RunConfig& c);
std::string config_hash(const RunConfig& c);

// Flag beats environment beats config.
struct SeedChoice {
  std::uint64_t seed = 0;
  std::string source;  // "flag", "env" or "config"
};
SeedChoice resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag);

std::string_view surgery_display_name(std::string_view surgery);

// Seed tree shared by run-all and the single-step verbs, so both produce the
// same split, models and intervals.
std::uint64_t cell_seed(std::uint64_t master, std::string_view surgery, OutcomeKind outcome);
std::uint64_t split_seed(std::uint64_t cell);
std::uint64_t family_seed(std::uint64_t cell, VariantKind variant, Family family);
std::uint64_t explain_seed(std::uint64_t cell, VariantKind variant);


ExplainOptions explain_options(const RunConfig& cfg, std::uint64_t seed);

// Empty when the combination is valid; otherwise the reason it is skipped.
std::string skip_reason(std::string_view surgery, OutcomeKind outcome);

// ---------------------------------------------------------------------------
// One dataset: filter, binarize, split, encode.

struct PreparedData {
  DatasetVariant variant;
  OutcomeKind outcome = OutcomeKind::kLos;
  FilterReport filter;
  Cohort cohort;  // complete rows with a defined label
  LabelVector y;  // parallel to cohort rows
  SplitResult split;
  Encoder encoder;
  EncodedMatrix X_train, X_test;
  std::vector<int> y_train, y_test;
  std::size_t n0 = 0, n1 = 0;  // class counts before the split
};

PreparedData prepare_data(const Cohort& cohort, const DatasetVariant& variant, OutcomeKind outcome,
                          double test_fraction, std::uint64_t split_seed);

struct FamilyResult {
  Family family = Family::kLogistic;
  GridResult grid;
  TrainedModel model;
  MetricCI ci;
  double cost = 0;
};

// Grid search on the training split, refit on all of it, score the test split.
FamilyResult train_family(const PreparedData& d, Family family, const std::vector<Hyperparams>& grid,
                          std::size_t folds, std::size_t bootstrap, std::uint64_t seed, bool parallel);

struct VariantResult {
  VariantKind variant = VariantKind::kIntraOp;
  std::size_t n0 = 0, n1 = 0, n_train = 0, n_test = 0;
  std::vector<FamilyResult> families;  // successful families, in config order
  std::vector<std::pair<Family, std::string>> failures;
  std::size_t winner = 0;  // index into families
  ShapMatrix shap;
  EncodedMatrix explained;  // the test rows behind `shap`
  std::vector<FeatureImpact> impacts;
  std::vector<FlaggedPair> disruptions;
  std::vector<std::string> warnings;
  double seconds = 0;

  const FamilyResult& best() const { return families[winner]; }
};

struct CellResult {
  std::string surgery;
  OutcomeKind outcome = OutcomeKind::kLos;
  std::string status;  // "ok", "skipped" or "failed"
  std::string reason;
  std::uint64_t seed = 0;
  std::vector<VariantResult> variants;
  std::size_t best_variant = 0;
  double seconds = 0;
};

struct SurgeryData {
  Cohort cohort;
  nlohmann::json profile;  // generating profile, null for a cohort file
  std::optional<CorrMatrix> baseline;
  std::optional<CorrelationNetwork> network;
  std::string corr_error;
};

// Runs one (surgery, outcome) cell over every configured variant. Never
// throws: failures are reported through the status.
CellResult run_cell(const SurgeryData& data, const std::string& surgery, OutcomeKind outcome,
                    const RunConfig& cfg);

struct RunSummary {
  std::vector<CellResult> cells;
  int exit_code = 0;  // 0, or 3 when any cell failed
  std::filesystem::path out;
};

// Whole pipeline; writes every artifact under cfg.out (validated first).
RunSummary run_all(RunConfig cfg, const std::string& seed_source = "config");

// Per-surgery data for a run: the input CSV, the given profile, or a
// default synthetic profile seeded from the master seed; plus the baseline
// correlation network over that surgery's rows.
SurgeryData load_surgery_data(const RunConfig& cfg, const std::string& surgery);

// Results-table layout, one row per variant winner (metrics.csv) or, with
// winners_only, one row per cell (best_models.csv).
void write_table2(const std::vector<CellResult>& cells, bool winners_only,
                  const std::filesystem::path& path);
void write_table3(const std::vector<CellResult>& cells, const std::filesystem::path& path);
std::string format_ci(const Interval& iv);

struct ReportResult {
  std::string markdown;
  std::vector<std::string> missing;
};
// Reads a run directory; throws Error when it has no manifest.
ReportResult render_report(const std::filesystem::path& run_dir);

// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace periop
