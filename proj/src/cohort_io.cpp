#include "periop/cohort_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "periop/csv.hpp"
#include "periop/errors.hpp"

namespace periop {

namespace {

enum class Slot { kFeature, kSurgery, kLos, kCharges, kDeath, kPain };

struct ColumnBinding {
  Slot slot;
  std::size_t feature = 0;
  std::string name;
};

double parse_number(std::string_view cell, std::size_t row, const std::string& column) {
  auto v = csv::parse_double(cell);
  if (!v || !std::isfinite(*v))
    throw ParseError(row, column, "expected a number, got '" + std::string(cell) + "'");
  return *v;
}

void parse_outcome_cell(Column& col, std::string_view cell, std::size_t row,
                        const std::string& column) {
  if (cell.empty()) {
    col.push_missing();
    return;
  }
  col.push(parse_number(cell, row, column));
}

}  // namespace

Cohort read_cohort(std::istream& in, std::shared_ptr<const FeatureRegistry> registry) {
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) == std::vector<std::string>{""})
    throw SchemaError("empty cohort file");

  const auto header = csv::split_line(line);
  std::vector<ColumnBinding> bindings;
  std::map<std::string, int> seen;
  for (const auto& name : header) {
    if (seen[name]++) throw SchemaError("duplicate column '" + name + "'");
    if (auto f = registry->find(name)) {
      bindings.push_back({Slot::kFeature, *f, name});
    } else if (name == "surgery") {
      bindings.push_back({Slot::kSurgery, 0, name});
    } else if (name == "los_hours") {
      bindings.push_back({Slot::kLos, 0, name});
    } else if (name == "charges_dollars") {
      bindings.push_back({Slot::kCharges, 0, name});
    } else if (name == "days_to_death") {
      bindings.push_back({Slot::kDeath, 0, name});
    } else if (name == "avg_pain") {
      bindings.push_back({Slot::kPain, 0, name});
    } else {
      throw SchemaError("unknown column '" + name + "'");
    }
  }
  for (const auto& spec : registry->specs())
    if (!seen.count(spec.name)) throw SchemaError("missing column '" + spec.name + "'");
  for (auto name : kReservedColumns)
    if (!seen.count(std::string(name)))
      throw SchemaError("missing column '" + std::string(name) + "'");

  Cohort cohort(registry);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = csv::split_line(line);
    if (cells.size() != bindings.size())
      throw ParseError(row, "*", "expected " + std::to_string(bindings.size()) + " cells, got " +
                                     std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& b = bindings[c];
      const std::string& cell = cells[c];
      switch (b.slot) {
        case Slot::kFeature: {
          const auto& spec = (*registry)[b.feature];
          Column& col = cohort.features[b.feature];
          if (cell.empty()) {
            col.push_missing();
          } else if (spec.kind == FeatureKind::kCategorical) {
            auto it = std::find(spec.levels.begin(), spec.levels.end(), cell);
            if (it == spec.levels.end())
              throw ParseError(row, b.name, "unknown level '" + cell + "'");
            col.push(static_cast<double>(it - spec.levels.begin()));
          } else {
            const double v = parse_number(cell, row, b.name);
            if (spec.kind == FeatureKind::kBinary && v != 0.0 && v != 1.0)
              throw ParseError(row, b.name, "binary value must be 0 or 1");
            col.push(v);
          }
          break;
        }
        case Slot::kSurgery:
          if (!cell.empty() && !registry->has_surgery(cell))
            throw ParseError(row, b.name, "unknown surgery '" + cell + "'");
          cohort.surgery.push_back(cell);
          break;
        case Slot::kLos: parse_outcome_cell(cohort.los_hours, cell, row, b.name); break;
        case Slot::kCharges: parse_outcome_cell(cohort.charges_dollars, cell, row, b.name); break;
        case Slot::kDeath:
          if (cell == kSurvivedToken) {
            cohort.days_to_death.push(kSurvived);
          } else {
            parse_outcome_cell(cohort.days_to_death, cell, row, b.name);
          }
          break;
        case Slot::kPain:
          parse_outcome_cell(cohort.avg_pain, cell, row, b.name);
          if (!cell.empty() && (cohort.avg_pain.values.back() < 0 || cohort.avg_pain.values.back() > 10))
            throw ParseError(row, b.name, "average pain must lie in [0, 10]");
          break;
      }
    }
    cohort.ids.push_back(row - 1);
  }
  cohort.validate();
  return cohort;
}

Cohort load_cohort(const std::filesystem::path& path,
                   std::shared_ptr<const FeatureRegistry> registry) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_cohort(in, std::move(registry));
}

void write_cohort(const Cohort& cohort, std::ostream& out) {
  const auto& reg = *cohort.registry;
  std::vector<std::string> fields;
  for (const auto& spec : reg.specs()) fields.push_back(spec.name);
  for (auto name : kReservedColumns) fields.emplace_back(name);
  csv::write_row(out, fields);

  auto cell = [](const Column& c, std::size_t i) {
    return c.is_missing(i) ? std::string() : csv::format_double(c.values[i]);
  };
  for (std::size_t i = 0; i < cohort.rows(); ++i) {
    fields.clear();
    for (std::size_t f = 0; f < reg.size(); ++f) {
      const auto& col = cohort.features[f];
      if (col.is_missing(i)) {
        fields.emplace_back();
      } else if (reg[f].kind == FeatureKind::kCategorical) {
        fields.push_back(reg[f].levels[static_cast<std::size_t>(col.values[i])]);
      } else {
        fields.push_back(csv::format_double(col.values[i]));
      }
    }
    fields.push_back(cohort.surgery[i]);
    fields.push_back(cell(cohort.los_hours, i));
    fields.push_back(cell(cohort.charges_dollars, i));
    if (!cohort.days_to_death.is_missing(i) && cohort.days_to_death.values[i] == kSurvived) {
      fields.emplace_back(kSurvivedToken);
    } else {
      fields.push_back(cell(cohort.days_to_death, i));
    }
    fields.push_back(cell(cohort.avg_pain, i));
    csv::write_row(out, fields);
  }
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_cohort(cohort, out);
}

}  // namespace periop
