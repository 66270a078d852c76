#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "periop/data_model.hpp"

namespace periop {

// Cohort CSV layout: UTF-8, one header row. Columns are the registry feature
// names plus the reserved columns below, in any order. An empty cell is a
// missing value. Categorical cells hold the level name; binary cells 0 or 1;
// days_to_death holds a day count or the token "survived".
inline constexpr std::array<std::string_view, 5> kReservedColumns = {
    "surgery", "los_hours", "charges_dollars", "days_to_death", "avg_pain"};
inline constexpr std::string_view kSurvivedToken = "survived";

// Throws SchemaError for header problems (unknown or missing column, empty
// file) and ParseError for bad cells.
Cohort load_cohort(const std::filesystem::path& path,
                   std::shared_ptr<const FeatureRegistry> registry = default_registry_ptr());
Cohort read_cohort(std::istream& in,
                   std::shared_ptr<const FeatureRegistry> registry = default_registry_ptr());

// Writes registry columns in registry order, then the reserved columns.
// Values use shortest round-trip formatting, so load(write(c)) == c.
void write_cohort(const Cohort& cohort, std::ostream& out);
void write_cohort(const Cohort& cohort, const std::filesystem::path& path);

}  // namespace periop
