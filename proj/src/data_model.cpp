#include "periop/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "periop/errors.hpp"

namespace periop {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table,
                std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw SchemaError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<FeatureKind, std::string_view>, 3> kKindNames = {{
    {FeatureKind::kNumeric, "numeric"},
    {FeatureKind::kCategorical, "categorical"},
    {FeatureKind::kBinary, "binary"},
}};

constexpr std::array<std::pair<FeatureCategory, std::string_view>, 4> kCategoryNames = {{
    {FeatureCategory::kIntraoperative, "intraoperative"},
    {FeatureCategory::kDemographic, "demographic"},
    {FeatureCategory::kPhysicalStatus, "physical_status"},
    {FeatureCategory::kClockLatent, "clock_latent"},
}};

}  // namespace

std::string_view to_string(FeatureKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

std::string_view to_string(FeatureCategory category) {
  for (const auto& [c, name] : kCategoryNames)
    if (c == category) return name;
  return "?";
}

FeatureKind parse_feature_kind(std::string_view s) { return parse_enum(s, kKindNames, "feature kind"); }

FeatureCategory parse_feature_category(std::string_view s) {
  return parse_enum(s, kCategoryNames, "feature category");
}

FeatureRegistry::FeatureRegistry(std::vector<FeatureSpec> specs,
                                 std::vector<std::string> surgery_types)
    : specs_(std::move(specs)), surgery_types_(std::move(surgery_types)) {
  std::set<std::string_view> seen;
  std::size_t clock = 0;
  for (const auto& spec : specs_) {
    if (spec.name.empty()) throw SchemaError("feature with empty name");
    if (!seen.insert(spec.name).second) throw SchemaError("duplicate feature '" + spec.name + "'");
    if (spec.kind == FeatureKind::kCategorical && spec.levels.empty())
      throw SchemaError("categorical feature '" + spec.name + "' has no levels");
    if (spec.kind != FeatureKind::kCategorical && !spec.levels.empty())
      throw SchemaError("non-categorical feature '" + spec.name + "' declares levels");
    if (spec.category == FeatureCategory::kClockLatent) {
      if (spec.kind != FeatureKind::kNumeric)
        throw SchemaError("clock latent '" + spec.name + "' must be numeric");
      ++clock;
    }
  }
  if (clock != 0 && clock != kClockLatentDims)
    throw SchemaError("registry has " + std::to_string(clock) + " clock latents, expected 10");
  std::set<std::string_view> surgeries;
  for (const auto& s : surgery_types_) {
    if (s == kAllSurgeries) throw SchemaError("'all' is reserved and cannot be a surgery type");
    if (!surgeries.insert(s).second) throw SchemaError("duplicate surgery type '" + s + "'");
  }
}

std::optional<std::size_t> FeatureRegistry::find(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return i;
  return std::nullopt;
}

std::size_t FeatureRegistry::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw SchemaError("unknown feature '" + std::string(name) + "'");
}

std::vector<std::size_t> FeatureRegistry::in_category(FeatureCategory category) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].category == category) out.push_back(i);
  return out;
}

bool FeatureRegistry::has_surgery(std::string_view surgery) const {
  return std::find(surgery_types_.begin(), surgery_types_.end(), surgery) != surgery_types_.end();
}

FeatureRegistry default_registry() {
  using K = FeatureKind;
  using C = FeatureCategory;
  std::vector<FeatureSpec> specs = {
      {"duration_min", K::kNumeric, C::kIntraoperative, "minutes", {}},
      {"propofol_mg", K::kNumeric, C::kIntraoperative, "mg", {}},
      {"oral_mme_mg", K::kNumeric, C::kIntraoperative, "mg", {}},
      {"iso_sev_mac", K::kNumeric, C::kIntraoperative, "dimensionless", {}},
      {"avg_nibp", K::kNumeric, C::kIntraoperative, "mmHg", {}},
      {"sd_nibp", K::kNumeric, C::kIntraoperative, "mmHg", {}},
      {"phenylephrine_mcg", K::kNumeric, C::kIntraoperative, "mcg", {}},
      {"ephedrine_mg", K::kNumeric, C::kIntraoperative, "mg", {}},

      {"age", K::kNumeric, C::kDemographic, "years", {}},
      {"sex", K::kCategorical, C::kDemographic, "", {"Male", "Female"}},
      {"race", K::kCategorical, C::kDemographic, "", {"White", "Black", "Other"}},
      {"ethnicity", K::kCategorical, C::kDemographic, "", {"NonHispanic", "Hispanic", "Other"}},
      {"education_years", K::kNumeric, C::kDemographic, "years", {}},
      {"adi", K::kNumeric, C::kDemographic, "national percentile", {}},

      {"asa", K::kNumeric, C::kPhysicalStatus, "ordinal 1-5", {}},
      {"frailty", K::kNumeric, C::kPhysicalStatus, "score 0-5", {}},
      {"sleep_apnea", K::kBinary, C::kPhysicalStatus, "", {}},
      {"diabetes", K::kBinary, C::kPhysicalStatus, "", {}},
      {"hyperlipidemia", K::kBinary, C::kPhysicalStatus, "", {}},
      {"hypertension", K::kBinary, C::kPhysicalStatus, "", {}},
      {"movement_disorder", K::kBinary, C::kPhysicalStatus, "", {}},
      {"cognitive_disorder", K::kBinary, C::kPhysicalStatus, "", {}},
  };
  for (auto name : kClockLatentNames)
    specs.push_back({std::string(name), K::kNumeric, C::kClockLatent, "dimensionless", {}});

  return FeatureRegistry(std::move(specs), {"orthopedics", "neurosurgery", "cardiovascular",
                                            "urology", "gynecology", "otolaryngology"});
}

std::shared_ptr<const FeatureRegistry> default_registry_ptr() {
  static const auto registry = std::make_shared<const FeatureRegistry>(default_registry());
  return registry;
}

nlohmann::json to_json(const FeatureRegistry& registry) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& spec : registry.specs()) {
    nlohmann::json f = {{"name", spec.name},
                        {"kind", to_string(spec.kind)},
                        {"category", to_string(spec.category)},
                        {"units", spec.units}};
    if (!spec.levels.empty()) f["levels"] = spec.levels;
    features.push_back(std::move(f));
  }
  return {{"features", features}, {"surgery_types", registry.surgery_types()}};
}

FeatureRegistry registry_from_json(const nlohmann::json& j) {
  std::vector<FeatureSpec> specs;
  for (const auto& f : j.at("features")) {
    FeatureSpec spec;
    spec.name = f.at("name").get<std::string>();
    spec.kind = parse_feature_kind(f.at("kind").get<std::string>());
    spec.category = parse_feature_category(f.at("category").get<std::string>());
    spec.units = f.value("units", "");
    if (f.contains("levels")) spec.levels = f.at("levels").get<std::vector<std::string>>();
    specs.push_back(std::move(spec));
  }
  return FeatureRegistry(std::move(specs),
                         j.at("surgery_types").get<std::vector<std::string>>());
}

ClockLatent::ClockLatent(std::span<const double> z) {
  if (z.size() != kClockLatentDims)
    throw Error("clock latent needs 10 values, got " + std::to_string(z.size()));
  for (std::size_t i = 0; i < kClockLatentDims; ++i) {
    if (!std::isfinite(z[i])) throw Error("clock latent value is not finite");
    z_[i] = z[i];
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::pair<OutcomeKind, std::string_view>, 4> kOutcomeNames = {{
    {OutcomeKind::kLos, "los"},
    {OutcomeKind::kCharges, "charges"},
    {OutcomeKind::kMortality1y, "mortality"},
    {OutcomeKind::kAvgPain, "avg_pain"},
}};

constexpr std::array<std::pair<VariantKind, std::string_view>, 3> kVariantNames = {{
    {VariantKind::kIntraOp, "intra_op"},
    {VariantKind::kPeriOp, "peri_op"},
    {VariantKind::kPeriOpCognitive, "peri_op_cognitive"},
}};

}  // namespace

std::string_view to_string(OutcomeKind kind) {
  for (const auto& [k, name] : kOutcomeNames)
    if (k == kind) return name;
  return "?";
}

std::optional<OutcomeKind> parse_outcome(std::string_view s) {
  for (const auto& [k, name] : kOutcomeNames)
    if (name == s) return k;
  return std::nullopt;
}

std::string_view display_name(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kLos: return "LOS";
    case OutcomeKind::kCharges: return "Charges";
    case OutcomeKind::kMortality1y: return "1-year Mortality";
    case OutcomeKind::kAvgPain: return "Average Pain";
  }
  return "?";
}

std::string_view to_string(VariantKind kind) {
  for (const auto& [k, name] : kVariantNames)
    if (k == kind) return name;
  return "?";
}

std::optional<VariantKind> parse_variant(std::string_view s) {
  for (const auto& [k, name] : kVariantNames)
    if (name == s) return k;
  return std::nullopt;
}

std::string_view display_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::kIntraOp: return "Intra-Op";
    case VariantKind::kPeriOp: return "Peri-Op";
    case VariantKind::kPeriOpCognitive: return "Peri-Op Cognitive";
  }
  return "?";
}

std::vector<std::size_t> variant_features(const FeatureRegistry& registry, VariantKind kind) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto c = registry[i].category;
    bool use = c == FeatureCategory::kIntraoperative;
    if (kind != VariantKind::kIntraOp)
      use = use || c == FeatureCategory::kDemographic || c == FeatureCategory::kPhysicalStatus;
    if (kind == VariantKind::kPeriOpCognitive) use = use || c == FeatureCategory::kClockLatent;
    if (use) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

Cohort::Cohort(std::shared_ptr<const FeatureRegistry> reg) : registry(std::move(reg)) {
  features.resize(registry->size());
}

const Column& Cohort::feature(std::string_view name) const {
  return features[registry->index_of(name)];
}

const Column& Cohort::outcome(OutcomeKind kind) const {
  switch (kind) {
    case OutcomeKind::kLos: return los_hours;
    case OutcomeKind::kCharges: return charges_dollars;
    case OutcomeKind::kMortality1y: return days_to_death;
    case OutcomeKind::kAvgPain: return avg_pain;
  }
  throw Error("bad outcome kind");
}

namespace {

Column take(const Column& c, std::span<const std::size_t> rows) {
  Column out;
  out.values.reserve(rows.size());
  out.missing.reserve(rows.size());
  for (auto r : rows) {
    out.values.push_back(c.values[r]);
    out.missing.push_back(c.missing[r]);
  }
  return out;
}

}  // namespace

Cohort Cohort::subset(std::span<const std::size_t> rows) const {
  Cohort out(registry);
  for (std::size_t f = 0; f < features.size(); ++f) out.features[f] = take(features[f], rows);
  out.surgery.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (auto r : rows) {
    out.surgery.push_back(surgery[r]);
    out.ids.push_back(ids[r]);
  }
  out.los_hours = take(los_hours, rows);
  out.charges_dollars = take(charges_dollars, rows);
  out.days_to_death = take(days_to_death, rows);
  out.avg_pain = take(avg_pain, rows);
  return out;
}

void Cohort::validate() const {
  const std::size_t n = rows();
  auto check_len = [n](const Column& c, std::string_view name) {
    if (c.values.size() != n || c.missing.size() != n)
      throw Error("column '" + std::string(name) + "' has wrong length");
  };
  if (ids.size() != n) throw Error("id column has wrong length");
  if (features.size() != registry->size()) throw Error("cohort does not match registry");
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& spec = (*registry)[f];
    check_len(features[f], spec.name);
    for (std::size_t i = 0; i < n; ++i) {
      if (features[f].is_missing(i)) continue;
      const double v = features[f].values[i];
      if (!std::isfinite(v)) throw Error("non-finite value in '" + spec.name + "'");
      if (spec.kind == FeatureKind::kBinary && v != 0.0 && v != 1.0)
        throw Error("binary feature '" + spec.name + "' holds " + std::to_string(v));
      if (spec.kind == FeatureKind::kCategorical &&
          (v < 0 || v >= static_cast<double>(spec.levels.size()) || v != std::floor(v)))
        throw Error("bad level code in '" + spec.name + "'");
      if (spec.name == "frailty" && v < 0) throw Error("frailty must be non-negative");
    }
  }
  check_len(los_hours, "los_hours");
  check_len(charges_dollars, "charges_dollars");
  check_len(days_to_death, "days_to_death");
  check_len(avg_pain, "avg_pain");
  for (std::size_t i = 0; i < n; ++i) {
    if (!avg_pain.is_missing(i) && (avg_pain.values[i] < 0 || avg_pain.values[i] > 10))
      throw Error("avg_pain outside [0, 10] at row " + std::to_string(i));
    if (!surgery[i].empty() && !registry->has_surgery(surgery[i]))
      throw Error("unknown surgery '" + surgery[i] + "'");
  }
}

}  // namespace periop
