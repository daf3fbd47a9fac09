#pragma once

// Overall and worst-subgroup metrics, seed aggregation and paired t-tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/error.hpp"

namespace rome::eval {

enum class BinRule { Categorical, Median, Quartile };

inline std::string to_string(BinRule r) {
  switch (r) {
    case BinRule::Categorical: return "categorical";
    case BinRule::Median: return "median";
    case BinRule::Quartile: return "quartile";
  }
  return "categorical";
}

inline BinRule parse_bin_rule(const std::string& s) {
  if (s == "categorical") return BinRule::Categorical;
  if (s == "median") return BinRule::Median;
  if (s == "quartile") return BinRule::Quartile;
  throw ConfigError("subgroup scheme: unknown rule '" + s + "' (expected categorical, median or quartile)");
}

struct AttributeRule {
  std::size_t column = 0;  // position in the S matrix
  std::string name;
  BinRule rule = BinRule::Categorical;
};

struct SubgroupScheme {
  std::string name;
  std::vector<AttributeRule> rules;
};

/// A scheme with cut points learned on a reference split.
struct FittedScheme {
  SubgroupScheme scheme;
  std::vector<std::vector<double>> cuts;  // per rule; empty for categorical
};

struct Partition {
  std::vector<std::size_t> ids;     // per row
  std::vector<std::string> labels;  // per subgroup id
  std::size_t count() const { return labels.size(); }
};

/// Linear-interpolation sample quantile.
inline double quantile(std::vector<double> values, double p) {
  rome::detail::require(!values.empty(), "quantile: empty input");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline FittedScheme fit_scheme(const SubgroupScheme& scheme, const Matrix& reference) {
  if (scheme.rules.empty()) throw ConfigError("subgroup scheme '" + scheme.name + "' selects no attributes");
  FittedScheme fs{scheme, {}};
  for (const auto& rule : scheme.rules) {
    if (static_cast<Index>(rule.column) >= reference.cols()) {
      throw ConfigError("subgroup scheme: attribute '" + rule.name + "' is not a sensitive column");
    }
    std::vector<double> col(reference.rows());
    for (Index i = 0; i < reference.rows(); ++i) col[static_cast<std::size_t>(i)] = reference(i, static_cast<Index>(rule.column));
    std::vector<double> cuts;
    if (rule.rule != BinRule::Categorical) {
      if (col.empty()) throw ConfigError("subgroup scheme: empty reference split for '" + rule.name + "'");
      const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
      if (*mn == *mx) throw ConfigError("subgroup scheme: attribute '" + rule.name + "' is constant, quantile cuts are degenerate");
      if (rule.rule == BinRule::Median) {
        cuts = {quantile(col, 0.5)};
      } else {
        cuts = {quantile(col, 0.25), quantile(col, 0.5), quantile(col, 0.75)};
      }
      for (std::size_t k = 1; k < cuts.size(); ++k) {
        if (!(cuts[k] > cuts[k - 1])) {
          throw ConfigError("subgroup scheme: attribute '" + rule.name + "' has tied quartiles, cut points are degenerate");
        }
      }
    }
    fs.cuts.push_back(std::move(cuts));
  }
  return fs;
}

namespace detail {

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

/// Maps each row of `s` to the cell of the cross-product of per-attribute bins.
/// Ids are ordered by the bin tuple; empty cells do not appear.
inline Partition partition(const Matrix& s, const FittedScheme& fs) {
  const auto& rules = fs.scheme.rules;
  std::vector<std::vector<double>> keys(static_cast<std::size_t>(s.rows()));
  for (Index i = 0; i < s.rows(); ++i) {
    auto& key = keys[static_cast<std::size_t>(i)];
    for (std::size_t r = 0; r < rules.size(); ++r) {
      rome::detail::require(static_cast<Index>(rules[r].column) < s.cols(), "partition: attribute column out of range");
      const double x = s(i, static_cast<Index>(rules[r].column));
      if (rules[r].rule == BinRule::Categorical) {
        key.push_back(x);
      } else {
        const auto& cuts = fs.cuts[r];
        key.push_back(static_cast<double>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin()));
      }
    }
  }
  std::map<std::vector<double>, std::size_t> index;
  for (const auto& k : keys) index.emplace(k, 0);
  Partition p;
  for (auto& [key, id] : index) {
    id = p.labels.size();
    std::string label;
    for (std::size_t r = 0; r < rules.size(); ++r) {
      if (r) label += "|";
      label += rules[r].name + "=";
      switch (rules[r].rule) {
        case BinRule::Categorical: label += detail::format_value(key[r]); break;
        case BinRule::Median: label += key[r] == 0.0 ? "low" : "high"; break;
        case BinRule::Quartile: label += "q" + std::to_string(static_cast<int>(key[r]) + 1); break;
      }
    }
    p.labels.push_back(std::move(label));
  }
  p.ids.reserve(keys.size());
  for (const auto& k : keys) p.ids.push_back(index.at(k));
  return p;
}

inline Partition partition(const Matrix& s, const SubgroupScheme& scheme, const Matrix& reference) {
  return partition(s, fit_scheme(scheme, reference));
}

/// Subgroups given directly by integer labels (e.g. the true latent groups).
inline Partition partition_from_labels(const std::vector<int>& labels, const std::string& prefix = "group") {
  std::map<int, std::size_t> index;
  for (int z : labels) index.emplace(z, 0);
  Partition p;
  for (auto& [z, id] : index) {
    id = p.labels.size();
    p.labels.push_back(prefix + "=" + std::to_string(z + 1));
  }
  for (int z : labels) p.ids.push_back(index.at(z));
  return p;
}

/// One subgroup covering every row.
inline Partition whole_set(std::size_t n) { return {std::vector<std::size_t>(n, 0), {"all"}}; }

enum class R2Centering { Local, Global };

struct SubgroupMetrics {
  std::string label;
  std::size_t n = 0;
  double mse = 0.0;
  std::optional<double> r2;  // empty when the subgroup's outcome has zero variance
};

struct MetricReport {
  double overall_mse = 0.0;
  std::optional<double> overall_r2;
  double worst_mse = std::numeric_limits<double>::quiet_NaN();
  double worst_r2 = std::numeric_limits<double>::quiet_NaN();
  std::vector<SubgroupMetrics> per_subgroup;
  std::string worst_mse_subgroup;  // empty when no subgroup qualifies
  std::string worst_r2_subgroup;
};

/// Subgroups with fewer than min_n rows are reported but do not compete for
/// the worst-group extremum.
inline MetricReport metrics(const Vector& y, const Vector& yhat, const Partition& part, std::size_t min_n = 30,
                            R2Centering centering = R2Centering::Local) {
  rome::detail::require(y.size() == yhat.size() && static_cast<std::size_t>(y.size()) == part.ids.size(),
                        "metrics: length mismatch");
  rome::detail::require(min_n >= 1, "metrics: min_n must be >= 1");
  rome::detail::require(y.size() >= 1, "metrics: empty evaluation set");
  const std::size_t n = part.ids.size();
  const std::size_t k = part.count();
  const double global_mean = y.mean();

  std::vector<std::size_t> cnt(k, 0);
  std::vector<double> sse(k, 0.0), ysum(k, 0.0);
  double total_sse = 0.0, total_sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = part.ids[i];
    const double r = y(static_cast<Index>(i)) - yhat(static_cast<Index>(i));
    ++cnt[id];
    sse[id] += r * r;
    ysum[id] += y(static_cast<Index>(i));
    total_sse += r * r;
    const double dy = y(static_cast<Index>(i)) - global_mean;
    total_sst += dy * dy;
  }
  std::vector<double> sst(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = part.ids[i];
    const double center = centering == R2Centering::Local ? ysum[id] / static_cast<double>(cnt[id]) : global_mean;
    const double dy = y(static_cast<Index>(i)) - center;
    sst[id] += dy * dy;
  }

  MetricReport rep;
  rep.overall_mse = total_sse / static_cast<double>(n);
  if (total_sst > 0.0) rep.overall_r2 = 1.0 - total_sse / total_sst;
  for (std::size_t g = 0; g < k; ++g) {
    SubgroupMetrics sm;
    sm.label = part.labels[g];
    sm.n = cnt[g];
    if (cnt[g] == 0) continue;
    sm.mse = sse[g] / static_cast<double>(cnt[g]);
    if (sst[g] > 0.0) sm.r2 = 1.0 - sse[g] / sst[g];
    if (cnt[g] >= min_n) {
      if (rep.worst_mse_subgroup.empty() || sm.mse > rep.worst_mse) {
        rep.worst_mse = sm.mse;
        rep.worst_mse_subgroup = sm.label;
      }
      if (sm.r2 && (rep.worst_r2_subgroup.empty() || *sm.r2 < rep.worst_r2)) {
        rep.worst_r2 = *sm.r2;
        rep.worst_r2_subgroup = sm.label;
      }
    }
    rep.per_subgroup.push_back(std::move(sm));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Student t tails via the regularized incomplete beta function.

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  rome::detail::require(a > 0.0 && b > 0.0, "incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student t with df degrees of freedom.
inline double student_t_sf(double t, double df) {
  rome::detail::require(df > 0.0, "student_t_sf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);  // P(T > |t|)
  return t >= 0.0 ? tail : 1.0 - tail;
}

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double p_less = 0.5;     // H1: mean(a - b) < 0
  double p_greater = 0.5;  // H1: mean(a - b) > 0
  double mean_diff = 0.0;
};

inline TTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("paired_ttest: samples have different lengths");
  if (a.size() < 2) throw ContractError("paired_ttest: need at least two pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw DegenerateTestError("paired_ttest: differences have zero variance");
  TTest res;
  res.mean_diff = mean;
  res.df = n - 1.0;
  res.t = mean / (sd / std::sqrt(n));
  res.p_greater = student_t_sf(res.t, res.df);
  res.p_less = student_t_sf(-res.t, res.df);
  res.p_two_sided = std::min(1.0, 2.0 * student_t_sf(std::abs(res.t), res.df));
  return res;
}

/// "***", "**", "*" at 0.001 / 0.01 / 0.05, otherwise "ns".
inline std::string significance_code(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "ns";
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t k = 0;
};

/// Mean and s / sqrt(k), ignoring NaN entries.
inline MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++out.k;
  }
  if (out.k == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0};
  out.mean = sum / static_cast<double>(out.k);
  if (out.k > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (!std::isnan(v)) ss += (v - out.mean) * (v - out.mean);
    }
    out.se = std::sqrt(ss / static_cast<double>(out.k - 1)) / std::sqrt(static_cast<double>(out.k));
  }
  return out;
}

struct AggregateReport {
  MeanSe overall_mse, overall_r2, worst_mse, worst_r2;
};

inline AggregateReport aggregate_seeds(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ContractError("aggregate_seeds: no reports");
  std::vector<double> om, orr, wm, wr;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : reports) {
    om.push_back(r.overall_mse);
    orr.push_back(r.overall_r2.value_or(nan));
    wm.push_back(r.worst_mse);
    wr.push_back(r.worst_r2);
  }
  return {mean_se(om), mean_se(orr), mean_se(wm), mean_se(wr)};
}

}  // namespace rome::eval
