#include <algorithm>
#include <bit>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "periop/cohort_io.hpp"
#include "periop/data_model.hpp"
#include "periop/errors.hpp"
#include "periop/synth.hpp"

using namespace periop;

TEST(Registry, CanonicalShape) {
  const auto reg = default_registry();
  EXPECT_EQ(reg.in_category(FeatureCategory::kIntraoperative).size(), 8u);
  EXPECT_EQ(reg.in_category(FeatureCategory::kClockLatent).size(), 10u);
  EXPECT_EQ(reg.surgery_types().size(), 6u);
  for (auto i : reg.in_category(FeatureCategory::kIntraoperative))
    EXPECT_EQ(reg[i].kind, FeatureKind::kNumeric) << reg[i].name;
}

TEST(Registry, RejectsDuplicatesAndBadClockCount) {
  FeatureSpec a{"a", FeatureKind::kNumeric, FeatureCategory::kDemographic, "", {}};
  EXPECT_THROW(FeatureRegistry({a, a}, {"x"}), SchemaError);
  FeatureSpec c{"c", FeatureKind::kCategorical, FeatureCategory::kDemographic, "", {}};
  EXPECT_THROW(FeatureRegistry({c}, {"x"}), SchemaError);
  FeatureSpec z{"z1", FeatureKind::kNumeric, FeatureCategory::kClockLatent, "", {}};
  EXPECT_THROW(FeatureRegistry({z}, {"x"}), SchemaError);
}

TEST(Registry, JsonRoundTrip) {
  const auto reg = default_registry();
  const auto back = registry_from_json(to_json(reg));
  ASSERT_EQ(back.size(), reg.size());
  for (std::size_t i = 0; i < reg.size(); ++i) {
    EXPECT_EQ(back[i].name, reg[i].name);
    EXPECT_EQ(back[i].kind, reg[i].kind);
    EXPECT_EQ(back[i].category, reg[i].category);
    EXPECT_EQ(back[i].levels, reg[i].levels);
  }
  EXPECT_EQ(back.surgery_types(), reg.surgery_types());
}

TEST(Registry, VariantNesting) {
  const auto reg = default_registry();
  auto as_set = [&](VariantKind k) {
    auto v = variant_features(reg, k);
    return std::set<std::size_t>(v.begin(), v.end());
  };
  const auto a = as_set(VariantKind::kIntraOp);
  const auto b = as_set(VariantKind::kPeriOp);
  const auto c = as_set(VariantKind::kPeriOpCognitive);
  EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  EXPECT_TRUE(std::includes(c.begin(), c.end(), b.begin(), b.end()));
  EXPECT_LT(a.size(), b.size());
  EXPECT_EQ(c.size(), b.size() + kClockLatentDims);
}

TEST(Names, OutcomeAndVariantStrings) {
  for (auto o : kAllOutcomes) EXPECT_EQ(parse_outcome(to_string(o)), o);
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_FALSE(parse_outcome("bmi").has_value());
  EXPECT_EQ(display_name(OutcomeKind::kMortality1y), "1-year Mortality");
}

namespace {

Cohort small_cohort(std::size_t n, std::uint64_t seed) {
  static const GenProfile prof = default_profile("all", 200, 5);
  return sample_cohort(prof, n, seed);
}

void expect_same_column(const Column& a, const Column& b) {
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.missing, b.missing);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a.is_missing(i)) EXPECT_EQ(std::bit_cast<std::uint64_t>(a.values[i]),
                                    std::bit_cast<std::uint64_t>(b.values[i]));
}

}  // namespace

TEST(CohortIo, RoundTripIsBitExact) {
  Cohort c = small_cohort(60, 11);
  auto& iso = c.features[c.registry->index_of("iso_sev_mac")];
  iso.missing[3] = 1;
  iso.values[3] = 0;
  c.avg_pain.missing[7] = 1;
  c.avg_pain.values[7] = 0;
  std::stringstream ss;
  write_cohort(c, ss);
  const Cohort back = read_cohort(ss);
  ASSERT_EQ(back.rows(), c.rows());
  EXPECT_EQ(back.surgery, c.surgery);
  for (std::size_t j = 0; j < c.features.size(); ++j) expect_same_column(c.features[j], back.features[j]);
  expect_same_column(c.los_hours, back.los_hours);
  expect_same_column(c.charges_dollars, back.charges_dollars);
  expect_same_column(c.days_to_death, back.days_to_death);
  expect_same_column(c.avg_pain, back.avg_pain);
}

TEST(CohortIo, LoadsThreeRowsAndMasksBlank) {
  Cohort c = small_cohort(3, 1);
  std::stringstream ss;
  write_cohort(c, ss);
  // Blank the iso_sev_mac cell of the second data row.
  std::string header, r1, r2, r3;
  std::getline(ss, header);
  std::getline(ss, r1);
  std::getline(ss, r2);
  std::getline(ss, r3);
  std::vector<std::string> cols;
  {
    std::stringstream hs(header);
    std::string f;
    while (std::getline(hs, f, ',')) cols.push_back(f);
  }
  const auto idx = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "iso_sev_mac") - cols.begin());
  std::vector<std::string> cells;
  {
    std::stringstream rs(r2);
    std::string f;
    while (std::getline(rs, f, ',')) cells.push_back(f);
    if (!r2.empty() && r2.back() == ',') cells.push_back("");
  }
  cells[idx] = "";
  std::string blanked;
  for (std::size_t i = 0; i < cells.size(); ++i) blanked += (i ? "," : "") + cells[i];
  std::stringstream in(header + "\n" + r1 + "\n" + blanked + "\n" + r3 + "\n");
  const Cohort back = read_cohort(in);
  EXPECT_EQ(back.rows(), 3u);
  EXPECT_TRUE(back.feature("iso_sev_mac").is_missing(1));
  EXPECT_FALSE(back.feature("iso_sev_mac").is_missing(0));
}

TEST(CohortIo, UnknownColumnNamed) {
  Cohort c = small_cohort(2, 1);
  std::stringstream ss;
  write_cohort(c, ss);
  std::string header, rest;
  std::getline(ss, header);
  std::string body((std::istreambuf_iterator<char>(ss)), {});
  std::string patched;
  std::stringstream bs(body);
  std::string line;
  while (std::getline(bs, line)) patched += line + ",27.5\n";
  std::stringstream in(header + ",bmi_admission\n" + patched);
  try {
    read_cohort(in);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("bmi_admission"), std::string::npos);
  }
}

TEST(CohortIo, BadCellIsParseError) {
  Cohort c = small_cohort(1, 1);
  std::stringstream ss;
  write_cohort(c, ss);
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  // First registry column is numeric.
  const auto comma = row.find(',');
  std::stringstream in(header + "\nabc" + row.substr(comma) + "\n");
  EXPECT_THROW(read_cohort(in), ParseError);
}

TEST(CohortIo, EmptyFileIsSchemaError) {
  std::stringstream in("");
  EXPECT_THROW(read_cohort(in), SchemaError);
}
