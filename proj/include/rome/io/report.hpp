#pragma once

#include <cmath>
#include <string>

#include "json.hpp"

#include "rome/eval.hpp"
#include "rome/io/csv.hpp"

namespace rome::io {

/// Column order of the per-subgroup table.
inline std::vector<std::string> report_columns() {
  return {"subgroup", "n", "mse", "r2", "qualifies", "worst_mse", "worst_r2"};
}

/// One row per subgroup followed by an "overall" row. `min_n` decides the
/// qualifies column.
inline std::string report_csv(const eval::MetricReport& rep, std::size_t min_n) {
  Table t(report_columns());
  for (const auto& g : rep.per_subgroup) {
    t.add({g.label, std::to_string(g.n), num(g.mse), g.r2 ? num(*g.r2) : "", g.n >= min_n ? "1" : "0",
           g.label == rep.worst_mse_subgroup ? "1" : "0", g.label == rep.worst_r2_subgroup ? "1" : "0"});
  }
  std::size_t n = 0;
  for (const auto& g : rep.per_subgroup) n += g.n;
  t.add({"overall", std::to_string(n), num(rep.overall_mse), rep.overall_r2 ? num(*rep.overall_r2) : "", "", "", ""});
  return t.str();
}

namespace detail {

inline nlohmann::ordered_json maybe(double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); }

}  // namespace detail

inline nlohmann::ordered_json report_json(const eval::MetricReport& rep) {
  nlohmann::ordered_json j;
  j["overall_mse"] = detail::maybe(rep.overall_mse);
  j["overall_r2"] = rep.overall_r2 ? detail::maybe(*rep.overall_r2) : nullptr;
  j["worst_mse"] = detail::maybe(rep.worst_mse);
  j["worst_r2"] = detail::maybe(rep.worst_r2);
  j["worst_mse_subgroup"] = rep.worst_mse_subgroup;
  j["worst_r2_subgroup"] = rep.worst_r2_subgroup;
  j["per_subgroup"] = nlohmann::ordered_json::array();
  for (const auto& g : rep.per_subgroup) {
    nlohmann::ordered_json s;
    s["subgroup"] = g.label;
    s["n"] = g.n;
    s["mse"] = detail::maybe(g.mse);
    s["r2"] = g.r2 ? detail::maybe(*g.r2) : nullptr;
    j["per_subgroup"].push_back(std::move(s));
  }
  return j;
}

}  // namespace rome::io
