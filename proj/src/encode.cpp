#include "periop/encode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "periop/csv.hpp"
#include "periop/errors.hpp"

namespace periop {

namespace {

bool modality_complete(const Cohort& c, const std::vector<std::size_t>& feats, std::size_t row) {
  for (auto f : feats)
    if (c.features[f].is_missing(row)) return false;
  return true;
}

}  // namespace

FilterResult filter_complete(const Cohort& cohort, const DatasetVariant& variant,
                             std::optional<OutcomeKind> outcome) {
  const auto& reg = *cohort.registry;
  if (!variant.all_surgeries() && !reg.has_surgery(variant.surgery))
    throw Error("unknown surgery '" + variant.surgery + "'");

  // Stepwise modality order: intraoperative, demographic, physical status,
  // clock latents, then the outcome.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> steps;
  const auto used = variant_features(reg, variant.kind);
  for (auto cat : {FeatureCategory::kIntraoperative, FeatureCategory::kDemographic,
                   FeatureCategory::kPhysicalStatus, FeatureCategory::kClockLatent}) {
    std::vector<std::size_t> feats;
    for (auto f : used)
      if (reg[f].category == cat) feats.push_back(f);
    if (!feats.empty()) steps.emplace_back(std::string(to_string(cat)), std::move(feats));
  }

  FilterResult result{Cohort(cohort.registry), {}, {}};
  result.report.input_rows = cohort.rows();
  for (const auto& [name, feats] : steps) result.report.dropped_by_modality[name] = 0;
  if (outcome) result.report.dropped_by_modality["outcome"] = 0;

  for (std::size_t i = 0; i < cohort.rows(); ++i) {
    if (!variant.all_surgeries() && cohort.surgery[i] != variant.surgery) {
      ++result.report.dropped_surgery;
      continue;
    }
    bool keep = true;
    for (const auto& [name, feats] : steps) {
      if (!modality_complete(cohort, feats, i)) {
        ++result.report.dropped_by_modality[name];
        keep = false;
        break;
      }
    }
    if (keep && outcome && cohort.outcome(*outcome).is_missing(i)) {
      ++result.report.dropped_by_modality["outcome"];
      keep = false;
    }
    if (keep) result.source_rows.push_back(i);
  }
  result.cohort = cohort.subset(result.source_rows);
  result.report.kept_rows = result.source_rows.size();
  return result;
}

std::size_t LabelVector::positives() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

LabelVector binarize_outcome(const Cohort& cohort, OutcomeKind outcome) {
  const Column& col = cohort.outcome(outcome);
  LabelVector out;
  out.outcome = outcome;
  for (std::size_t i = 0; i < cohort.rows(); ++i) {
    if (col.is_missing(i))
      throw Error(std::string(to_string(outcome)) + " is missing at row " + std::to_string(i) +
                  "; filter the cohort first");
    const double v = col.values[i];
    int label = 0;
    switch (outcome) {
      case OutcomeKind::kLos:
        if (v < 0) throw Error("negative length of stay at row " + std::to_string(i));
        label = v < OutcomeSpec::kSameDayHours ? 0 : 1;
        break;
      case OutcomeKind::kCharges:
        if (v < 0) throw Error("negative charges at row " + std::to_string(i));
        label = v < OutcomeSpec::kChargesThreshold ? 0 : 1;
        break;
      case OutcomeKind::kMortality1y:
        if (v < 0) throw Error("negative days to death at row " + std::to_string(i));
        label = v <= OutcomeSpec::kMortalityWindowDays ? 1 : 0;
        break;
      case OutcomeKind::kAvgPain:
        if (v == 0.0) {
          label = 0;
        } else if (v >= OutcomeSpec::kPainHigh) {
          label = 1;
        } else {
          out.excluded_rows.push_back(i);
          continue;
        }
        break;
    }
    out.y.push_back(label);
    out.kept_rows.push_back(i);
    out.row_ids.push_back(cohort.ids[i]);
  }
  return out;
}

LabelVector make_labels(std::vector<int> y, OutcomeKind outcome) {
  LabelVector out;
  out.outcome = outcome;
  out.y = std::move(y);
  for (std::size_t i = 0; i < out.y.size(); ++i) {
    out.kept_rows.push_back(i);
    out.row_ids.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::kScaledNumeric: return "scaled_numeric";
    case ColumnRole::kBinary: return "binary";
    case ColumnRole::kOneHot: return "one_hot";
  }
  return "?";
}

ColumnRole parse_role(std::string_view s) {
  for (auto r : {ColumnRole::kScaledNumeric, ColumnRole::kBinary, ColumnRole::kOneHot})
    if (to_string(r) == s) return r;
  throw SchemaError("unknown column role '" + std::string(s) + "'");
}

nlohmann::json to_json(const ColumnInfo& c) {
  return {{"source", c.source}, {"role", to_string(c.role)}, {"level", c.level}};
}

ColumnInfo column_from_json(const nlohmann::json& j) {
  return {j.at("source").get<std::string>(), parse_role(j.at("role").get<std::string>()),
          j.at("level").get<std::string>()};
}

std::string ColumnInfo::name() const {
  return role == ColumnRole::kOneHot ? source + "=" + level : source;
}

std::vector<std::string> EncodedMatrix::column_names() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.name());
  return out;
}

std::optional<std::size_t> EncodedMatrix::find_column(std::string_view name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j].name() == name) return j;
  return std::nullopt;
}

EncodedMatrix EncodedMatrix::take_rows(std::span<const std::size_t> idx) const {
  EncodedMatrix out;
  out.rows = idx.size();
  out.cols = cols;
  out.columns = columns;
  out.data.resize(out.rows * cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = row(idx[r]);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return out;
}

EncodedMatrix EncodedMatrix::from_rows(const std::vector<std::vector<double>>& rows,
                                       std::vector<std::string> names) {
  EncodedMatrix m;
  m.rows = rows.size();
  m.cols = rows.empty() ? names.size() : rows.front().size();
  if (names.empty())
    for (std::size_t j = 0; j < m.cols; ++j) names.push_back("x" + std::to_string(j));
  if (names.size() != m.cols) throw Error("column name count does not match row width");
  for (auto& n : names) m.columns.push_back({std::move(n), ColumnRole::kScaledNumeric, ""});
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rows) {
    if (r.size() != m.cols) throw Error("ragged rows");
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

// ---------------------------------------------------------------------------

Encoder Encoder::fit(const Cohort& train, const DatasetVariant& variant) {
  Encoder enc;
  enc.registry_ = train.registry;
  enc.variant_ = variant;
  const auto& reg = *train.registry;

  for (auto f : variant_features(reg, variant.kind)) {
    const auto& spec = reg[f];
    const auto& col = train.features[f];
    switch (spec.kind) {
      case FeatureKind::kNumeric: {
        ScalerState s{spec.name, 0.0, 0.0};
        bool any = false;
        for (std::size_t i = 0; i < train.rows(); ++i) {
          if (col.is_missing(i)) continue;
          const double v = col.values[i];
          if (!any) {
            s.min = s.max = v;
            any = true;
          } else {
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
          }
        }
        if (s.constant())
          enc.warnings_.push_back("constant numeric column '" + spec.name +
                                  "' on training rows; emitted as zeros");
        enc.scalers_.push_back(s);
        enc.columns_.push_back({spec.name, ColumnRole::kScaledNumeric, ""});
        break;
      }
      case FeatureKind::kBinary:
        enc.columns_.push_back({spec.name, ColumnRole::kBinary, ""});
        break;
      case FeatureKind::kCategorical: {
        std::vector<bool> seen(spec.levels.size(), false);
        for (std::size_t i = 0; i < train.rows(); ++i)
          if (!col.is_missing(i)) seen[static_cast<std::size_t>(col.values[i])] = true;
        for (std::size_t l = 0; l < spec.levels.size(); ++l)
          if (seen[l]) enc.columns_.push_back({spec.name, ColumnRole::kOneHot, spec.levels[l]});
        break;
      }
    }
  }
  if (variant.all_surgeries()) {
    std::set<std::string_view> seen(train.surgery.begin(), train.surgery.end());
    for (const auto& s : reg.surgery_types())
      if (seen.count(s)) enc.columns_.push_back({"surgery", ColumnRole::kOneHot, s});
  }
  enc.rebuild_blocks();
  return enc;
}

void Encoder::rebuild_blocks() {
  blocks_.clear();
  std::size_t scaler = 0;
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const auto& c = columns_[j];
    const bool continues = c.role == ColumnRole::kOneHot && !blocks_.empty() &&
                           blocks_.back().role == ColumnRole::kOneHot &&
                           columns_[blocks_.back().first_column].source == c.source;
    if (continues) {
      blocks_.back().levels.push_back(c.level);
      continue;
    }
    Block b;
    b.first_column = j;
    b.role = c.role;
    b.feature = c.source == "surgery" && c.role == ColumnRole::kOneHot
                    ? kSurgeryBlock
                    : registry_->index_of(c.source);
    if (c.role == ColumnRole::kScaledNumeric) b.scaler = scaler++;
    if (c.role == ColumnRole::kOneHot) b.levels.push_back(c.level);
    blocks_.push_back(std::move(b));
  }
}

EncodedMatrix Encoder::transform(const Cohort& cohort) const {
  const auto& reg = *registry_;
  EncodedMatrix m;
  m.rows = cohort.rows();
  m.cols = columns_.size();
  m.columns = columns_;
  m.warnings = warnings_;
  m.data.assign(m.rows * m.cols, 0.0);

  std::map<std::string, std::size_t> unseen;
  for (const auto& b : blocks_) {
    for (std::size_t i = 0; i < m.rows; ++i) {
      double* out = &m.data[i * m.cols + b.first_column];
      if (b.feature == kSurgeryBlock) {
        const auto& s = cohort.surgery[i];
        auto it = std::find(b.levels.begin(), b.levels.end(), s);
        if (it == b.levels.end()) {
          ++unseen["surgery=" + s];
        } else {
          out[it - b.levels.begin()] = 1.0;
        }
        continue;
      }
      const auto& col = cohort.features[b.feature];
      if (col.is_missing(i))
        throw Error("missing value in '" + reg[b.feature].name + "' at row " + std::to_string(i) +
                    "; filter the cohort first");
      const double v = col.values[i];
      switch (b.role) {
        case ColumnRole::kScaledNumeric: {
          const auto& s = scalers_[b.scaler];
          *out = s.constant() ? 0.0 : std::clamp((v - s.min) / (s.max - s.min), 0.0, 1.0);
          break;
        }
        case ColumnRole::kBinary:
          *out = v;
          break;
        case ColumnRole::kOneHot: {
          const auto& level = reg[b.feature].levels[static_cast<std::size_t>(v)];
          auto it = std::find(b.levels.begin(), b.levels.end(), level);
          if (it == b.levels.end()) {
            ++unseen[reg[b.feature].name + "=" + level];
          } else {
            out[it - b.levels.begin()] = 1.0;
          }
          break;
        }
      }
    }
  }
  for (const auto& [level, count] : unseen)
    m.warnings.push_back("level '" + level + "' unseen in training (" + std::to_string(count) +
                         " rows); encoded as all zeros");
  return m;
}

nlohmann::json Encoder::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns_)
    cols.push_back(periop::to_json(c));
  nlohmann::json scalers = nlohmann::json::array();
  for (const auto& s : scalers_)
    scalers.push_back({{"source", s.source}, {"min", s.min}, {"max", s.max}});
  return {{"variant", to_string(variant_.kind)},
          {"surgery", variant_.surgery},
          {"columns", cols},
          {"scalers", scalers}};
}

Encoder Encoder::from_json(const nlohmann::json& j, std::shared_ptr<const FeatureRegistry> reg) {
  Encoder enc;
  enc.registry_ = std::move(reg);
  auto kind = parse_variant(j.at("variant").get<std::string>());
  if (!kind) throw SchemaError("bad variant in encoder state");
  enc.variant_ = {*kind, j.at("surgery").get<std::string>()};
  for (const auto& c : j.at("columns"))
    enc.columns_.push_back(column_from_json(c));
  for (const auto& s : j.at("scalers"))
    enc.scalers_.push_back(
        {s.at("source").get<std::string>(), s.at("min").get<double>(), s.at("max").get<double>()});
  enc.rebuild_blocks();
  return enc;
}

std::pair<EncodedMatrix, EncodedMatrix> encode(const Cohort& train, const Cohort& apply_to,
                                               const DatasetVariant& variant) {
  const Encoder enc = Encoder::fit(train, variant);
  return {enc.transform(train), enc.transform(apply_to)};
}

void write_matrix(const EncodedMatrix& m, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write " + csv_path.string());
  csv::write_row(out, m.column_names());
  std::vector<std::string> fields(m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) fields[j] = csv::format_double(m.at(i, j));
    csv::write_row(out, fields);
  }
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : m.columns)
    cols.push_back({{"name", c.name()}, {"source", c.source}, {"role", to_string(c.role)},
                    {"level", c.level}});
  std::ofstream side(csv_path.string() + ".columns.json");
  side << nlohmann::json{{"columns", cols}, {"warnings", m.warnings}}.dump(2) << '\n';
}

}  // namespace periop
