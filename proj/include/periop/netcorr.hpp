#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "periop/data_model.hpp"
#include "periop/explain.hpp"

namespace periop {

struct CorrMatrix {
  std::vector<std::string> vars;
  std::vector<double> r;             // row-major, vars.size() squared
  std::vector<std::size_t> n_pair;   // complete rows behind each entry
  std::size_t n = 0;                 // cohort rows considered

  std::size_t size() const { return vars.size(); }
  double at(std::size_t i, std::size_t j) const { return r[i * vars.size() + j]; }
};

// The intraoperative numerics of the registry, in registry order.
std::vector<std::string> intraop_variables(const FeatureRegistry& registry);

// Pairwise-complete Pearson r. Throws Error naming a variable with zero
// variance, or a pair with fewer than 3 complete rows.
CorrMatrix pearson_matrix(const Cohort& cohort, const std::vector<std::string>& vars);
CorrMatrix pearson_matrix(const std::vector<Column>& columns, const std::vector<std::string>& names);

enum class Band { kNegligible, kLow, kModerate, kHigh };
std::string_view to_string(Band b);

struct CorrBand {
  Band band = Band::kNegligible;
  int sign = 1;  // +1 or -1; r == 0 counts as +1
  bool operator==(const CorrBand&) const = default;
};

// |r| > 0.5 high, 0.3 < |r| <= 0.5 moderate, 0.1 <= |r| <= 0.3 low,
// below 0.1 negligible.
CorrBand categorize(double r);
std::string describe(const CorrBand& b);  // e.g. "moderate-"

struct CorrEdge {
  std::size_t a = 0;  // a < b, indices into vars
  std::size_t b = 0;
  double r = 0;
  CorrBand band;
};

struct CorrelationNetwork {
  std::vector<std::string> vars;
  std::vector<CorrEdge> edges;  // ordered by (a, b)

  const CorrEdge* find(std::string_view x, std::string_view y) const;
};

CorrelationNetwork build_network(const CorrMatrix& m);

inline constexpr double kDirectionalityFloor = 0.1;

struct FlaggedPair {
  std::string a, b;
  double r = 0;
  CorrBand band;
  double dir_a = 0, dir_b = 0;
  std::size_t rank_a = 0, rank_b = 0;
};

// Flags a network edge (A, B) with sign s when both features appear in
// `impacts` with |directionality| >= kDirectionalityFloor and
// sign(dir_A) * sign(dir_B) == -s.
std::vector<FlaggedPair> disruption_report(const CorrelationNetwork& net,
                                          const std::vector<FeatureImpact>& impacts);

nlohmann::json to_json(const CorrMatrix& m);
nlohmann::json to_json(const CorrelationNetwork& net);
nlohmann::json to_json(const FlaggedPair& d);

void write_corr_csv(const CorrMatrix& m, const std::filesystem::path& path);
std::string heatmap_svg(const CorrMatrix& m, const std::string& title);
// Nodes on a circle; solid edges for positive r, dashed for negative, stroke
// width by band.
std::string network_svg(const CorrelationNetwork& net, const std::string& title);

}  // namespace periop
