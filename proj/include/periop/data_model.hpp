#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace periop {

enum class FeatureKind { kNumeric, kCategorical, kBinary };

enum class FeatureCategory {
  kIntraoperative,
  kDemographic,
  kPhysicalStatus,
  kClockLatent,
};

std::string_view to_string(FeatureKind kind);
std::string_view to_string(FeatureCategory category);
FeatureKind parse_feature_kind(std::string_view s);
FeatureCategory parse_feature_category(std::string_view s);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  FeatureCategory category = FeatureCategory::kIntraoperative;
  std::string units;
  // Level dictionary for categorical features, in one-hot column order.
  std::vector<std::string> levels;
};

// Ordered, validated list of feature specs plus the surgery vocabulary.
class FeatureRegistry {
 public:
  // Throws SchemaError on duplicate names, categorical specs without levels,
  // non-numeric clock latents, or a clock-latent count other than 0 or 10.
  FeatureRegistry(std::vector<FeatureSpec> specs, std::vector<std::string> surgery_types);

  const std::vector<FeatureSpec>& specs() const { return specs_; }
  const std::vector<std::string>& surgery_types() const { return surgery_types_; }
  std::size_t size() const { return specs_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return specs_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws SchemaError
  std::vector<std::size_t> in_category(FeatureCategory category) const;
  bool has_surgery(std::string_view surgery) const;

 private:
  std::vector<FeatureSpec> specs_;
  std::vector<std::string> surgery_types_;
};

FeatureRegistry default_registry();
std::shared_ptr<const FeatureRegistry> default_registry_ptr();

nlohmann::json to_json(const FeatureRegistry& registry);
FeatureRegistry registry_from_json(const nlohmann::json& j);

inline constexpr std::size_t kClockLatentDims = 10;
inline constexpr std::array<std::string_view, kClockLatentDims> kClockLatentNames = {
    "clock_size",         "rotated_ellipse",      "rotated_vertical_ellipse",
    "upward_displaced_hands", "ovate_obovate_shape", "obtuse_hand_angle",
    "z7",                 "z8",                   "z9",
    "z10"};

// Precomputed clock-drawing embedding. Construction rejects non-finite values.
class ClockLatent {
 public:
  explicit ClockLatent(std::span<const double> z);
  const std::array<double, kClockLatentDims>& values() const { return z_; }
  double operator[](std::size_t i) const { return z_[i]; }

 private:
  std::array<double, kClockLatentDims> z_{};
};

// ---------------------------------------------------------------------------
// Outcomes

enum class OutcomeKind { kLos, kCharges, kMortality1y, kAvgPain };

inline constexpr std::array<OutcomeKind, 4> kAllOutcomes = {
    OutcomeKind::kLos, OutcomeKind::kCharges, OutcomeKind::kAvgPain,
    OutcomeKind::kMortality1y};

std::string_view to_string(OutcomeKind kind);
std::optional<OutcomeKind> parse_outcome(std::string_view s);
// Human label used in report tables ("LOS", "Charges", ...).
std::string_view display_name(OutcomeKind kind);

// Binarization constants. These are fixed, not configurable.
struct OutcomeSpec {
  OutcomeKind kind;

  // Discharge within this many hours counts as same-day (class 0).
  static constexpr double kSameDayHours = 24.0;
  static constexpr double kChargesThreshold = 30000.0;
  static constexpr double kMortalityWindowDays = 365.0;
  static constexpr double kPainHigh = 1.0;
};

// ---------------------------------------------------------------------------
// Dataset variants

enum class VariantKind { kIntraOp, kPeriOp, kPeriOpCognitive };

inline constexpr std::array<VariantKind, 3> kAllVariants = {
    VariantKind::kIntraOp, VariantKind::kPeriOp, VariantKind::kPeriOpCognitive};

std::string_view to_string(VariantKind kind);
std::optional<VariantKind> parse_variant(std::string_view s);
std::string_view display_name(VariantKind kind);

inline constexpr std::string_view kAllSurgeries = "all";

struct DatasetVariant {
  VariantKind kind = VariantKind::kIntraOp;
  std::string surgery = std::string(kAllSurgeries);

  bool all_surgeries() const { return surgery == kAllSurgeries; }
};

// Registry indices of the features a variant uses, in registry order.
std::vector<std::size_t> variant_features(const FeatureRegistry& registry, VariantKind kind);

// ---------------------------------------------------------------------------
// Cohort

// One value per row plus an explicit missingness mask. Categorical values are
// stored as the level index into FeatureSpec::levels.
struct Column {
  std::vector<double> values;
  std::vector<std::uint8_t> missing;

  std::size_t size() const { return values.size(); }
  bool is_missing(std::size_t i) const { return missing[i] != 0; }
  void push(double v) {
    values.push_back(v);
    missing.push_back(0);
  }
  void push_missing() {
    values.push_back(0.0);
    missing.push_back(1);
  }
};

inline constexpr double kSurvived = std::numeric_limits<double>::infinity();

struct Cohort {
  std::shared_ptr<const FeatureRegistry> registry;
  std::vector<Column> features;  // parallel to registry->specs()
  std::vector<std::string> surgery;
  std::vector<std::uint64_t> ids;  // stable row identity, preserved by subset()

  Column los_hours;
  Column charges_dollars;
  Column days_to_death;  // kSurvived when no death was recorded
  Column avg_pain;

  explicit Cohort(std::shared_ptr<const FeatureRegistry> reg = default_registry_ptr());

  std::size_t rows() const { return surgery.size(); }
  const Column& feature(std::string_view name) const;
  const Column& outcome(OutcomeKind kind) const;

  Cohort subset(std::span<const std::size_t> rows) const;

  // Checks column lengths, level codes, binary values and outcome ranges.
  // Throws Error describing the first violation.
  void validate() const;
};

}  // namespace periop
