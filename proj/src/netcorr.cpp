#include "periop/netcorr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "periop/csv.hpp"
#include "periop/errors.hpp"
#include "periop/svg.hpp"

namespace periop {

std::vector<std::string> intraop_variables(const FeatureRegistry& registry) {
  std::vector<std::string> out;
  for (std::size_t i : registry.in_category(FeatureCategory::kIntraoperative))
    if (registry[i].kind == FeatureKind::kNumeric) out.push_back(registry[i].name);
  return out;
}

CorrMatrix pearson_matrix(const Cohort& cohort, const std::vector<std::string>& vars) {
  std::vector<Column> cols;
  cols.reserve(vars.size());
  for (const auto& v : vars) {
    const std::size_t idx = cohort.registry->index_of(v);
    if ((*cohort.registry)[idx].kind != FeatureKind::kNumeric)
      throw Error("correlation variable '" + v + "' is not numeric");
    cols.push_back(cohort.features[idx]);
  }
  return pearson_matrix(cols, vars);
}

CorrMatrix pearson_matrix(const std::vector<Column>& columns, const std::vector<std::string>& names) {
  if (columns.size() != names.size()) throw Error("column and name counts differ");
  const std::size_t p = columns.size();
  const std::size_t n = p ? columns[0].size() : 0;
  for (const auto& c : columns)
    if (c.size() != n) throw Error("correlation columns differ in length");

  for (std::size_t j = 0; j < p; ++j) {
    double lo = 0, hi = 0;
    bool seen = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (columns[j].is_missing(i)) continue;
      const double v = columns[j].values[i];
      lo = seen ? std::min(lo, v) : v;
      hi = seen ? std::max(hi, v) : v;
      seen = true;
    }
    if (!(hi > lo)) throw Error("variable '" + names[j] + "' has zero variance");
  }

  CorrMatrix m;
  m.vars = names;
  m.n = n;
  m.r.assign(p * p, 0.0);
  m.n_pair.assign(p * p, 0);
  for (std::size_t a = 0; a < p; ++a) {
    m.r[a * p + a] = 1.0;
    std::size_t na = 0;
    for (std::size_t i = 0; i < n; ++i) na += columns[a].is_missing(i) ? 0 : 1;
    m.n_pair[a * p + a] = na;
    for (std::size_t b = a + 1; b < p; ++b) {
      const Column& x = columns[a];
      const Column& y = columns[b];
      std::size_t k = 0;
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x.is_missing(i) || y.is_missing(i)) continue;
        mx += x.values[i];
        my += y.values[i];
        ++k;
      }
      if (k < 3)
        throw Error("pair (" + names[a] + ", " + names[b] + ") has " + std::to_string(k) +
                    " complete rows, need 3");
      mx /= static_cast<double>(k);
      my /= static_cast<double>(k);
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x.is_missing(i) || y.is_missing(i)) continue;
        const double dx = x.values[i] - mx, dy = y.values[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
      }
      if (sxx == 0 || syy == 0)
        throw Error("variable '" + (sxx == 0 ? names[a] : names[b]) +
                    "' has zero variance over the rows it shares with '" +
                    (sxx == 0 ? names[b] : names[a]) + "'");
      const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
      m.r[a * p + b] = m.r[b * p + a] = r;
      m.n_pair[a * p + b] = m.n_pair[b * p + a] = k;
    }
  }
  return m;
}

std::string_view to_string(Band b) {
  switch (b) {
    case Band::kNegligible: return "negligible";
    case Band::kLow: return "low";
    case Band::kModerate: return "moderate";
    case Band::kHigh: return "high";
  }
  return "?";
}

CorrBand categorize(double r) {
  if (!(std::abs(r) <= 1.0 + 1e-12)) throw Error("correlation outside [-1, 1]");
  const double a = std::abs(r);
  CorrBand b;
  b.sign = r < 0 ? -1 : 1;
  if (a > 0.5)
    b.band = Band::kHigh;
  else if (a > 0.3)
    b.band = Band::kModerate;
  else if (a >= 0.1)
    b.band = Band::kLow;
  else
    b.band = Band::kNegligible;
  return b;
}

std::string describe(const CorrBand& b) {
  return std::string(to_string(b.band)) + (b.sign < 0 ? "-" : "+");
}

const CorrEdge* CorrelationNetwork::find(std::string_view x, std::string_view y) const {
  for (const auto& e : edges) {
    const auto& a = vars[e.a];
    const auto& b = vars[e.b];
    if ((a == x && b == y) || (a == y && b == x)) return &e;
  }
  return nullptr;
}

CorrelationNetwork build_network(const CorrMatrix& m) {
  CorrelationNetwork net;
  net.vars = m.vars;
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = a + 1; b < m.size(); ++b) {
      const CorrBand band = categorize(m.at(a, b));
      if (band.band != Band::kNegligible) net.edges.push_back({a, b, m.at(a, b), band});
    }
  return net;
}

std::vector<FlaggedPair> disruption_report(const CorrelationNetwork& net,
                                          const std::vector<FeatureImpact>& impacts) {
  auto lookup = [&](const std::string& v) -> const FeatureImpact* {
    for (const auto& f : impacts)
      if (f.name == v) return &f;
    return nullptr;
  };
  std::vector<FlaggedPair> out;
  for (const auto& e : net.edges) {
    const FeatureImpact* fa = lookup(net.vars[e.a]);
    const FeatureImpact* fb = lookup(net.vars[e.b]);
    if (!fa || !fb) continue;
    if (std::abs(fa->directionality) < kDirectionalityFloor ||
        std::abs(fb->directionality) < kDirectionalityFloor)
      continue;
    const int sa = fa->directionality > 0 ? 1 : -1;
    const int sb = fb->directionality > 0 ? 1 : -1;
    if (sa * sb != -e.band.sign) continue;
    out.push_back({net.vars[e.a], net.vars[e.b], e.r, e.band, fa->directionality,
                   fb->directionality, fa->rank, fb->rank});
  }
  return out;
}

nlohmann::json to_json(const CorrMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.size(); ++i)
    rows.push_back(std::vector<double>(m.r.begin() + static_cast<std::ptrdiff_t>(i * m.size()),
                                       m.r.begin() + static_cast<std::ptrdiff_t>((i + 1) * m.size())));
  return {{"variables", m.vars}, {"r", rows}, {"n", m.n}};
}

nlohmann::json to_json(const CorrelationNetwork& net) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : net.edges)
    edges.push_back({{"a", net.vars[e.a]},
                     {"b", net.vars[e.b]},
                     {"r", e.r},
                     {"band", to_string(e.band.band)},
                     {"sign", e.band.sign > 0 ? "+" : "-"}});
  return {{"nodes", net.vars}, {"edges", edges}};
}

nlohmann::json to_json(const FlaggedPair& d) {
  return {{"pair", {d.a, d.b}},
          {"baseline_r", d.r},
          {"baseline_band", describe(d.band)},
          {"directionality", {d.dir_a, d.dir_b}},
          {"shap_rank", {d.rank_a + 1, d.rank_b + 1}}};
}

void write_corr_csv(const CorrMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  std::vector<std::string> header = {"variable"};
  header.insert(header.end(), m.vars.begin(), m.vars.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<std::string> row = {m.vars[i]};
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(csv::format_fixed(m.at(i, j), 6));
    csv::write_row(out, row);
  }
}

std::string heatmap_svg(const CorrMatrix& m, const std::string& title) {
  constexpr double kCell = 56, kLeft = 170, kTop = 170;
  const double p = static_cast<double>(m.size());
  svg::Document doc(kLeft + p * kCell + 40, kTop + p * kCell + 40);
  doc.text((kLeft + p * kCell) / 2, 24, title, 14, "middle");
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double y = kTop + static_cast<double>(i) * kCell;
    doc.text(kLeft - 8, y + kCell / 2 + 4, m.vars[i], 11, "end");
    const double x = kLeft + static_cast<double>(i) * kCell + kCell / 2;
    doc.text(x + 4, kTop - 8, m.vars[i], 11, "start", -60);
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double cx = kLeft + static_cast<double>(j) * kCell;
      const double r = m.at(i, j);
      doc.rect(cx, y, kCell, kCell, svg::ramp((r + 1) / 2), "#ffffff");
      doc.text(cx + kCell / 2, y + kCell / 2 + 4, svg::num(r), 11, "middle");
    }
  }
  return doc.str();
}

std::string network_svg(const CorrelationNetwork& net, const std::string& title) {
  constexpr double kSize = 640, kRadius = 220, kNode = 7;
  const double c = kSize / 2 + 10;
  const std::size_t p = net.vars.size();
  std::vector<double> xs(p), ys(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double t = 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(p, 1)) -
                     std::numbers::pi / 2;
    xs[i] = c + kRadius * std::cos(t);
    ys[i] = c + kRadius * std::sin(t);
  }
  svg::Document doc(kSize + 20, kSize + 60);
  doc.text(c, 24, title, 14, "middle");
  for (const auto& e : net.edges) {
    const double w = e.band.band == Band::kHigh ? 4.0 : e.band.band == Band::kModerate ? 2.5 : 1.2;
    const bool pos = e.band.sign > 0;
    doc.line(xs[e.a], ys[e.a], xs[e.b], ys[e.b], pos ? "#1f5fbf" : "#c0392b", w, pos ? "" : "5,4");
  }
  for (std::size_t i = 0; i < p; ++i) {
    doc.circle(xs[i], ys[i], kNode, "#333333");
    const bool right = xs[i] >= c - 1;
    doc.text(xs[i] + (right ? 12 : -12), ys[i] + 4, net.vars[i], 12, right ? "start" : "end");
  }
  doc.text(20, kSize + 40, "solid: positive r, dashed: negative r, width: high > moderate > low", 11);
  return doc.str();
}

}  // namespace periop
