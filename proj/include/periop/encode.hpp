#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "periop/data_model.hpp"

namespace periop {

// ---------------------------------------------------------------------------
// Completeness filtering

struct FilterReport {
  std::size_t input_rows = 0;
  std::size_t kept_rows = 0;
  std::size_t dropped_surgery = 0;  // rows outside the requested surgery
  // Stepwise: a row is charged to the first modality (registry category name,
  // or "outcome") in which it has a missing value.
  std::map<std::string, std::size_t> dropped_by_modality;
};

struct FilterResult {
  Cohort cohort;
  std::vector<std::size_t> source_rows;  // row index in the input cohort
  FilterReport report;
};

// Keeps rows of the variant's surgery with no missing value among the
// variant's features (and the outcome, when given). An empty result is legal.
FilterResult filter_complete(const Cohort& cohort, const DatasetVariant& variant,
                             std::optional<OutcomeKind> outcome = std::nullopt);

// ---------------------------------------------------------------------------
// Outcome binarization

struct LabelVector {
  OutcomeKind outcome = OutcomeKind::kLos;
  std::vector<int> y;                  // one label per kept row
  std::vector<std::size_t> kept_rows;  // cohort row for each label
  std::vector<std::size_t> excluded_rows;
  std::vector<std::uint64_t> row_ids;  // cohort ids of kept rows

  std::size_t size() const { return y.size(); }
  std::size_t positives() const;
};

// LOS: hours < 24 -> 0, else 1. Charges: < 30000 -> 0, else 1.
// Mortality: death within 365 days of discharge -> 1. AvgPain: 0 -> 0,
// >= 1 -> 1, rows strictly between are excluded.
// Throws Error if the outcome is missing on any row, or LOS / charges are
// negative.
LabelVector binarize_outcome(const Cohort& cohort, OutcomeKind outcome);

// Label-only convenience for callers that already know the rows (tests).
LabelVector make_labels(std::vector<int> y, OutcomeKind outcome = OutcomeKind::kLos);

// ---------------------------------------------------------------------------
// Encoding

enum class ColumnRole { kScaledNumeric, kBinary, kOneHot };

std::string_view to_string(ColumnRole role);
ColumnRole parse_role(std::string_view s);  // throws SchemaError

struct ColumnInfo {
  std::string source;  // registry feature name, or "surgery"
  ColumnRole role = ColumnRole::kScaledNumeric;
  std::string level;   // one-hot level, empty otherwise

  // "age", "sex=Female", "surgery=urology"
  std::string name() const;
  bool operator==(const ColumnInfo&) const = default;
};

struct ScalerState {
  std::string source;
  double min = 0;
  double max = 0;
  bool constant() const { return !(max > min); }
  bool operator==(const ScalerState&) const = default;
};

nlohmann::json to_json(const ColumnInfo& c);
ColumnInfo column_from_json(const nlohmann::json& j);

// Dense row-major design matrix with column provenance.
struct EncodedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<ColumnInfo> columns;
  std::vector<std::string> warnings;

  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }

  std::vector<std::string> column_names() const;
  std::optional<std::size_t> find_column(std::string_view name) const;
  EncodedMatrix take_rows(std::span<const std::size_t> idx) const;

  // Bare matrix from raw values; every column is tagged scaled-numeric and
  // named x0, x1, ... unless names are given.
  static EncodedMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                 std::vector<std::string> names = {});
};

// Fitted encoding: min-max scalers and one-hot level sets from training rows.
class Encoder {
 public:
  static Encoder fit(const Cohort& train, const DatasetVariant& variant);

  // Applies the fitted state. Numerics outside the training range clip to
  // [0, 1]; levels unseen in training give an all-zero block and a warning.
  EncodedMatrix transform(const Cohort& cohort) const;

  const std::vector<ColumnInfo>& columns() const { return columns_; }
  const std::vector<ScalerState>& scalers() const { return scalers_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const DatasetVariant& variant() const { return variant_; }

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j, std::shared_ptr<const FeatureRegistry> reg);

  bool operator==(const Encoder& o) const {
    return columns_ == o.columns_ && scalers_ == o.scalers_;
  }

 private:
  struct Block {
    std::size_t feature = 0;       // registry index; npos for surgery
    std::size_t first_column = 0;
    std::size_t scaler = 0;        // scaled-numeric only
    std::vector<std::string> levels;  // one-hot only
    ColumnRole role = ColumnRole::kScaledNumeric;
  };
  static constexpr std::size_t kSurgeryBlock = static_cast<std::size_t>(-1);

  void rebuild_blocks();

  std::shared_ptr<const FeatureRegistry> registry_;
  DatasetVariant variant_;
  std::vector<ColumnInfo> columns_;
  std::vector<ScalerState> scalers_;
  std::vector<Block> blocks_;
  std::vector<std::string> warnings_;
};

// Fits on `train` only and encodes both cohorts.
std::pair<EncodedMatrix, EncodedMatrix> encode(const Cohort& train, const Cohort& apply_to,
                                               const DatasetVariant& variant);

// Writes the matrix as CSV plus a JSON sidecar (<path>.columns.json) listing
// every column's source and role.
void write_matrix(const EncodedMatrix& m, const std::filesystem::path& csv_path);

}  // namespace periop
