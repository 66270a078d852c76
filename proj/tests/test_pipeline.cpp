#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "periop/csv.hpp"
#include "periop/errors.hpp"
#include "periop/pipeline.hpp"

using namespace periop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("periop_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(csv::split_line(line));
  return rows;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(PERIOP_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

RunConfig tiny_config(const fs::path& out) {
  RunConfig c;
  c.synth_rows = 700;
  c.seed = 5;
  c.outcomes = {OutcomeKind::kLos};
  c.families = {Family::kLogistic, Family::kTree};
  c.grids[Family::kLogistic] = {LogisticParams{}};
  c.grids[Family::kTree] = {TreeParams{3, 5}};
  c.folds = 3;
  c.bootstrap = 20;
  c.sampling_rows = 20;
  c.out = out;
  return c;
}

}  // namespace

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"seed", 1}, {"sed", 2}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"outcomes", {"bmi"}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"grids", {{"svm", nlohmann::json::array()}}}}), ConfigError);
}

TEST(Config, JsonRoundTripAndHash) {
  RunConfig c = tiny_config("x");
  validate(c);
  const RunConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(config_hash(back), config_hash(c));
  RunConfig d = c;
  d.jobs = 3;
  d.out = "elsewhere";
  EXPECT_EQ(config_hash(d), config_hash(c));
  d.seed = 6;
  EXPECT_NE(config_hash(d), config_hash(c));
  // A manifest is accepted in place of a config.
  const nlohmann::json manifest = {{"format", "periop-manifest"}, {"config", to_json(c)}};
  EXPECT_EQ(to_json(config_from_json(manifest)).dump(), to_json(c).dump());
}

TEST(Config, ValidateExpandsEachAndRejectsBadValues) {
  RunConfig c;
  c.surgeries = {"each"};
  validate(c);
  EXPECT_EQ(c.surgeries.size(), 7u);
  EXPECT_EQ(c.surgeries[0], "all");
  RunConfig bad;
  bad.surgeries = {"dentistry"};
  EXPECT_THROW(validate(bad), ConfigError);
  RunConfig bad2;
  bad2.folds = 1;
  EXPECT_THROW(validate(bad2), ConfigError);
  RunConfig bad3;
  bad3.test_fraction = 1.5;
  EXPECT_THROW(validate(bad3), ConfigError);
}

TEST(Config, SeedPrecedence) {
  ::unsetenv(std::string(kSeedEnvVar).c_str());
  EXPECT_EQ(resolve_seed(7, std::nullopt).source, "config");
  EXPECT_EQ(resolve_seed(7, std::nullopt).seed, 7u);
  ::setenv(std::string(kSeedEnvVar).c_str(), "11", 1);
  EXPECT_EQ(resolve_seed(7, std::nullopt).seed, 11u);
  EXPECT_EQ(resolve_seed(7, std::nullopt).source, "env");
  EXPECT_EQ(resolve_seed(7, 13).seed, 13u);
  EXPECT_EQ(resolve_seed(7, 13).source, "flag");
  ::setenv(std::string(kSeedEnvVar).c_str(), "eleven", 1);
  EXPECT_THROW(resolve_seed(7, std::nullopt), ConfigError);
  ::unsetenv(std::string(kSeedEnvVar).c_str());
}

TEST(Config, MortalityOnlyForAllSurgeries) {
  EXPECT_TRUE(skip_reason("all", OutcomeKind::kMortality1y).empty());
  EXPECT_FALSE(skip_reason("orthopedics", OutcomeKind::kMortality1y).empty());
  EXPECT_TRUE(skip_reason("orthopedics", OutcomeKind::kLos).empty());
}

TEST(Format, ConfidenceInterval) {
  Interval iv;
  EXPECT_EQ(format_ci(iv), "NA");
  iv.point = 0.9312;
  iv.lo95 = 0.9049;
  iv.hi95 = 0.944;
  EXPECT_EQ(format_ci(iv), "0.93 (0.90 - 0.94)");
}

TEST(RunAll, TablesAndSkippedCell) {
  const fs::path out = scratch("runall");
  RunConfig c = tiny_config(out);
  c.surgeries = {"all", "orthopedics"};
  c.outcomes = {OutcomeKind::kLos, OutcomeKind::kMortality1y};
  const RunSummary s = run_all(c);
  EXPECT_EQ(s.exit_code, 0);
  ASSERT_EQ(s.cells.size(), 4u);
  std::size_t skipped = 0;
  for (const auto& cell : s.cells) {
    if (cell.surgery == "orthopedics" && cell.outcome == OutcomeKind::kMortality1y) {
      EXPECT_EQ(cell.status, "skipped");
      EXPECT_FALSE(cell.reason.empty());
      ++skipped;
    } else {
      EXPECT_EQ(cell.status, "ok") << cell.reason;
      EXPECT_EQ(cell.variants.size(), 3u);
    }
  }
  EXPECT_EQ(skipped, 1u);

  const auto metrics = read_csv(out / "metrics.csv");
  const std::vector<std::string> header = {
      "Surgery Type",          "Outcome",
      "Best Dataset (N0, N1)", "Best Model",
      "AUC (95% CI)",          "Accuracy (95% C.I)",
      "F1 Score (95% CI)",     "Precision (95% CI)",
      "Sensitivity (95% CI)",  "Specificity (95% CI)"};
  ASSERT_FALSE(metrics.empty());
  EXPECT_EQ(metrics[0], header);
  EXPECT_EQ(metrics.size(), 1u + 3 * 3);  // three ok cells, three variants each
  const auto best = read_csv(out / "best_models.csv");
  EXPECT_EQ(best[0], header);
  EXPECT_EQ(best.size(), 1u + 3);
  const auto winners = read_csv(out / "variant_winners.csv");
  EXPECT_EQ(winners[0], (std::vector<std::string>{"Surgery Type", "Outcome", "Intra-Op", "Peri-Op",
                                                  "Peri-Op Cognitive"}));
  EXPECT_EQ(winners.size(), 1u + 3);
  for (std::size_t r = 1; r < winners.size(); ++r) {
    int marks = 0;
    for (std::size_t k = 2; k < 5; ++k) marks += winners[r][k] == "✓";
    EXPECT_EQ(marks, 1);
  }

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 5u);
  EXPECT_EQ(manifest.at("config_hash").get<std::string>(), config_hash(c));

  const auto rep = render_report(out);
  EXPECT_TRUE(rep.missing.empty());
  EXPECT_NE(rep.markdown.find("Skipped: "), std::string::npos);
  EXPECT_NE(rep.markdown.find("single-surgery groups have too few deaths"), std::string::npos);
}

TEST(RunAll, ReportNeedsManifest) {
  const fs::path empty = scratch("empty");
  EXPECT_THROW(render_report(empty), Error);
  EXPECT_EQ(run_cli("report --run " + empty.string()), 1);
}

TEST(Cli, SynthIsByteIdentical) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(run_cli("synth --n 1000 --seed 9 --out " + a.string()), 0);
  ASSERT_EQ(run_cli("synth --n 1000 --seed 9 --out " + b.string()), 0);
  const std::string ca = slurp(a / "cohort.csv");
  EXPECT_EQ(ca, slurp(b / "cohort.csv"));
  EXPECT_EQ(std::count(ca.begin(), ca.end(), '\n'), 1001);
  EXPECT_EQ(run_cli("synth --n 1000 --seed 9 --out " + b.string(), std::string(kSeedEnvVar) + "=4"), 0);
  EXPECT_EQ(ca, slurp(b / "cohort.csv"));
  ASSERT_EQ(run_cli("synth --n 1000 --out " + b.string(), std::string(kSeedEnvVar) + "=9"), 0);
  EXPECT_EQ(ca, slurp(b / "cohort.csv"));
}

TEST(Cli, UsageErrorsExitTwo) {
  const fs::path a = scratch("synth_bad");
  EXPECT_EQ(run_cli("synth --surgery dentistry --out " + a.string()), 2);
  EXPECT_EQ(run_cli("synth --n -3 --out " + a.string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  const fs::path cfg = a / "bad.json";
  std::ofstream(cfg) << R"({"seed": 1, "colour": "blue"})";
  EXPECT_EQ(run_cli("run-all --config " + cfg.string() + " --out " + (a / "r").string()), 2);
  EXPECT_EQ(run_cli("train --surgery orthopedics --outcome mortality --variant intra_op --out " +
                    (a / "t").string()),
            2);
}

TEST(Cli, RunAllDeterministicAcrossJobs) {
  const fs::path dir = scratch("det");
  RunConfig c = tiny_config(dir / "unused");
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << to_json(c).dump();
  ASSERT_EQ(run_cli("run-all --config " + cfg.string() + " --jobs 1 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("run-all --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
  const std::string m = slurp(dir / "a" / "metrics.csv");
  EXPECT_FALSE(m.empty());
  EXPECT_EQ(m, slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "metrics.json"), slurp(dir / "b" / "metrics.json"));
  EXPECT_EQ(slurp(dir / "a" / "disruptions.json"), slurp(dir / "b" / "disruptions.json"));
  // The manifest alone reproduces the run.
  ASSERT_EQ(run_cli("run-all --config " + (dir / "a" / "manifest.json").string() + " --out " +
                    (dir / "c").string()),
            0);
  EXPECT_EQ(m, slurp(dir / "c" / "metrics.csv"));
  EXPECT_EQ(run_cli("report --run " + (dir / "a").string()), 0);
}

TEST(Cli, SingleStepVerbsAgreeWithRunAll) {
  const fs::path dir = scratch("steps");
  RunConfig c = tiny_config(dir / "unused");
  c.variants = {VariantKind::kPeriOp};
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << to_json(c).dump();
  const std::string common = "--config " + cfg.string() + " --surgery all --outcome los --variant peri_op";
  ASSERT_EQ(run_cli("train " + common + " --out " + (dir / "m").string()), 0);
  const std::string cfg_flag = "--config " + cfg.string();
  ASSERT_EQ(run_cli("evaluate " + cfg_flag + " --model " + (dir / "m").string() + " --out " +
                    (dir / "e").string()),
            0);
  ASSERT_EQ(run_cli("explain " + cfg_flag + " --model " + (dir / "m").string() + " --out " +
                    (dir / "x").string()),
            0);
  ASSERT_EQ(run_cli("corr --config " + cfg.string() + " --surgery all --out " + (dir / "c").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "x" / "beeswarm.svg"));
  EXPECT_TRUE(fs::exists(dir / "c" / "all_network.svg"));
  ASSERT_EQ(run_cli("run-all " + common + " --out " + (dir / "r").string()), 0);
  const auto run_model = nlohmann::json::parse(slurp(dir / "r" / "cells" / "all__los" / "peri_op" / "model.json"));
  const auto step_model = nlohmann::json::parse(slurp(dir / "m" / "model.json"));
  EXPECT_EQ(run_model.dump(), step_model.dump());
  EXPECT_EQ(slurp(dir / "r" / "cells" / "all__los" / "peri_op" / "shap.csv"), slurp(dir / "x" / "shap.csv"));
}
