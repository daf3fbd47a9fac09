#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rome/cli/config.hpp"
#include "rome/core_model.hpp"
#include "rome/dro_weights.hpp"
#include "rome/em_mixture.hpp"
#include "rome/eval.hpp"
#include "rome/io/checkpoint.hpp"
#include "rome/io/csv.hpp"
#include "rome/io/report.hpp"
#include "rome/io/svg.hpp"
#include "rome/moe.hpp"
#include "rome/parallel.hpp"
#include "rome/simgen.hpp"

namespace rome::cli {

namespace fs = std::filesystem;

inline std::string path_in(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

struct LoadedData {
  Dataset data;
  std::vector<int> labels;  // true latent groups, simulated source only
  std::string source;
};

namespace detail {

inline std::vector<std::size_t> name_indices(const std::vector<std::string>& names, const std::vector<std::string>& s_names,
                                             const std::string& key) {
  std::vector<std::size_t> out;
  if (names.empty()) {
    for (std::size_t k = 0; k < s_names.size(); ++k) out.push_back(k);
    return out;
  }
  for (const auto& n : names) {
    auto it = std::find(s_names.begin(), s_names.end(), n);
    if (it == s_names.end()) throw ConfigError(key + ": '" + n + "' is not listed in data.s");
    out.push_back(static_cast<std::size_t>(it - s_names.begin()));
  }
  return out;
}

}  // namespace detail

/// Builds the dataset named by the `data` section. For the simulated source the
/// feature names are fixed and the true group labels are kept.
inline LoadedData load_data(const json& cfg, std::ostream& log) {
  LoadedData out;
  out.source = get<std::string>(cfg, "data.source");
  if (out.source == "sim") {
    sim::SimSpec spec;
    spec.seed = get<std::uint64_t>(cfg, "data.sim.seed");
    spec.noise_sd = get<double>(cfg, "data.sim.noise_sd");
    const int n = get<int>(cfg, "data.sim.n");
    if (n < 10) throw ConfigError("data.sim.n must be at least 10");
    auto sd = sim::generate(spec, n, 0);
    out.data = std::move(sd.data);
    out.labels = std::move(sd.labels);
    return out;
  }
  if (out.source != "csv") throw ConfigError("data.source must be 'csv' or 'sim'");
  const auto path = get<std::string>(cfg, "data.path");
  if (path.empty()) throw ConfigError("data.path is required for a csv source");
  if (!fs::exists(path)) throw DataError("data.path '" + path + "' does not exist");
  FeatureSpec spec;
  spec.a_names = get<std::vector<std::string>>(cfg, "data.a");
  spec.s_names = get<std::vector<std::string>>(cfg, "data.s");
  spec.y_name = get<std::string>(cfg, "data.y");
  if (spec.y_name.empty()) throw ConfigError("data.y is required for a csv source");
  spec.mem_indices = detail::name_indices(get<std::vector<std::string>>(cfg, "data.mem"), spec.s_names, "data.mem");
  spec.out_indices = detail::name_indices(get<std::vector<std::string>>(cfg, "data.out"), spec.s_names, "data.out");
  auto res = io::ingest_csv(path, spec);
  if (res.dropped > 0) log << "dropped " << res.dropped << " row(s) with missing or non-numeric values\n";
  out.data = std::move(res.data);
  return out;
}

/// One seed's split, standardized with training statistics.
struct Prepared {
  Dataset train_raw, test_raw;
  Dataset train, val, test;
  Standardizer standardizer;
  std::vector<int> train_labels, test_labels;
  io::DataStamp stamp;
};

inline Prepared prepare(const LoadedData& ld, const SplitFractions& f, std::uint64_t seed) {
  const Split sp = split_rows(ld.data.n(), f, seed);
  Prepared p;
  p.train_raw = ld.data.subset(sp.train);
  p.test_raw = ld.data.subset(sp.test);
  p.standardizer = Standardizer::fit(p.train_raw);
  p.train = p.standardizer.apply(p.train_raw);
  p.val = p.standardizer.apply(ld.data.subset(sp.val));
  p.test = p.standardizer.apply(p.test_raw);
  if (!ld.labels.empty()) {
    for (auto i : sp.train) p.train_labels.push_back(ld.labels[static_cast<std::size_t>(i)]);
    for (auto i : sp.test) p.test_labels.push_back(ld.labels[static_cast<std::size_t>(i)]);
  }
  p.stamp = {ld.source,
             static_cast<std::int64_t>(ld.data.n()),
             static_cast<std::int64_t>(sp.train.size()),
             static_cast<std::int64_t>(sp.val.size()),
             static_cast<std::int64_t>(sp.test.size()),
             seed};
  return p;
}

/// Subgroup schemes from eval.schemes, attribute names resolved against S.
inline std::vector<eval::SubgroupScheme> schemes(const json& cfg, const FeatureSpec& spec) {
  std::vector<eval::SubgroupScheme> out;
  const json& arr = cfg.at("eval").at("schemes");
  if (!arr.is_array()) throw ConfigError("eval.schemes must be an array");
  for (const auto& js : arr) {
    eval::SubgroupScheme sc;
    try {
      sc.name = js.at("name").get<std::string>();
      for (const auto& jr : js.at("rules")) {
        eval::AttributeRule r;
        r.name = jr.at("attribute").get<std::string>();
        r.rule = eval::parse_bin_rule(jr.value("rule", "categorical"));
        auto it = std::find(spec.s_names.begin(), spec.s_names.end(), r.name);
        if (it == spec.s_names.end()) throw ConfigError("scheme '" + sc.name + "': '" + r.name + "' is not a sensitive attribute");
        r.column = static_cast<std::size_t>(it - spec.s_names.begin());
        sc.rules.push_back(r);
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("eval.schemes: ") + e.what());
    }
    out.push_back(std::move(sc));
  }
  return out;
}

/// Named test-set partitions: the configured schemes with cut points from the
/// raw training split, plus the true groups for simulated data.
inline std::vector<std::pair<std::string, eval::Partition>> test_partitions(const json& cfg, const Prepared& p) {
  std::vector<std::pair<std::string, eval::Partition>> out;
  if (!p.test_labels.empty()) out.emplace_back("true-groups", eval::partition_from_labels(p.test_labels));
  for (const auto& sc : schemes(cfg, p.train_raw.spec)) {
    out.emplace_back(sc.name, eval::partition(p.test_raw.s, eval::fit_scheme(sc, p.train_raw.s)));
  }
  if (out.empty()) throw ConfigError("eval.schemes is empty; at least one subgroup scheme is needed for a csv source");
  return out;
}

inline eval::R2Centering r2_centering(const json& cfg) {
  const auto c = get<std::string>(cfg, "eval.r2_centering");
  if (c == "local") return eval::R2Centering::Local;
  if (c == "global") return eval::R2Centering::Global;
  throw ConfigError("eval.r2_centering must be 'local' or 'global'");
}

inline std::size_t min_n(const json& cfg) {
  const int m = get<int>(cfg, "eval.min_n");
  if (m < 1) throw ConfigError("eval.min_n must be >= 1");
  return static_cast<std::size_t>(m);
}

inline unsigned threads(const json& cfg) {
  const int t = get<int>(cfg, "threads");
  if (t < 0) throw ConfigError("threads must be >= 0");
  return static_cast<unsigned>(t);
}

inline std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// ---------------------------------------------------------------- simulate

inline void cmd_simulate(const json& cfg, std::ostream& log) {
  const auto spec = sim_spec(cfg);
  auto em_cfg = em_config(cfg);
  em_cfg.g = spec.g;
  const auto grid = c_grid(cfg);
  const auto seed_list = seeds(cfg);
  const auto dir = prepare_output_dir(cfg);

  const auto reps = sim::replication_run(spec, em_cfg, grid, seed_list, threads(cfg));
  const auto summary = sim::summarize(reps);

  std::vector<std::string> header{"seed", "method", "c", "overall_mse", "worst_mse", "worst_group"};
  for (int j = 1; j <= spec.g; ++j) header.push_back("group" + std::to_string(j) + "_mse");
  for (int j = 1; j <= spec.g; ++j) header.push_back("v" + std::to_string(j));
  header.push_back("objective");
  io::Table results(header);
  for (const auto& r : reps) {
    for (const auto& row : r.rows) {
      std::vector<std::string> cells{std::to_string(row.seed), row.method, io::num(row.c), io::num(row.overall_mse), io::num(row.worst_mse),
                                     std::to_string(row.worst_group)};
      for (double m : row.group_mse) cells.push_back(io::num(m));
      for (int j = 0; j < spec.g; ++j) cells.push_back(row.v.empty() ? "" : io::num(row.v[static_cast<std::size_t>(j)]));
      cells.push_back(io::num(row.objective));
      results.add(cells);
    }
  }
  io::write_text(path_in(dir, "sim_results.csv"), results.str());

  io::Table recovery({"seed", "method", "group", "parameter", "estimate", "truth", "error"});
  for (const auto& r : reps) {
    for (const auto& rr : r.recovery) {
      recovery.add({std::to_string(rr.seed), rr.method, std::to_string(rr.group), rr.parameter, io::num(rr.estimate), io::num(rr.truth),
                    io::num(rr.estimate - rr.truth)});
    }
  }
  io::write_text(path_in(dir, "param_recovery.csv"), recovery.str());

  io::Table sum({"method", "c", "mean_worst_mse", "best", "relative_reduction", "t", "p_one_sided", "significance", "mean_abs_param_error"});
  const std::string t = summary.test ? io::num(summary.test->t) : "";
  const std::string p = summary.test ? io::num(summary.test->p_less) : "";
  const std::string code = summary.test ? eval::significance_code(summary.test->p_less) : "n/a";
  sum.add({"pooled", "", io::num(summary.pooled_mean_worst), "", "", "", "", "", io::num(summary.pooled_mae)});
  for (const auto& pc : summary.per_c) {
    const bool best = pc.c == summary.best_c;
    sum.add({"rome-em", io::num(pc.c), io::num(pc.mean_worst_mse), best ? "1" : "0", best ? io::num(summary.relative_reduction) : "",
             best ? t : "", best ? p : "", best ? code : "", io::num(summary.rome_mae)});
  }
  io::write_text(path_in(dir, "sim_summary.csv"), sum.str());

  char title[128];
  std::snprintf(title, sizeof title, "Worst-group test MSE over %zu replications", reps.size());
  io::write_text(path_in(dir, "worst_group_mse.svg"),
                 io::svg::box_plot(title, "worst-group MSE", {{"Pooled", summary.pooled_worst}, {"ROME-EM (c=" + io::num(summary.best_c) + ")", summary.best_worst}}));
  std::map<std::string, std::vector<double>> by_param;
  std::vector<std::string> param_order;
  for (const auto& r : reps) {
    for (const auto& rr : r.recovery) {
      if (rr.method != "rome-em") continue;
      if (!by_param.count(rr.parameter)) param_order.push_back(rr.parameter);
      by_param[rr.parameter].push_back(rr.estimate - rr.truth);
    }
  }
  std::vector<io::svg::Series> boxes;
  for (const auto& name : param_order) boxes.push_back({name, by_param[name]});
  io::write_text(path_in(dir, "param_recovery.svg"), io::svg::box_plot("ROME-EM estimation error by parameter (all groups)", "estimate - truth", boxes));

  log << "pooled mean worst-group MSE " << io::num(summary.pooled_mean_worst) << ", ROME-EM best c " << io::num(summary.best_c) << ": "
      << io::num(summary.best_mean_worst) << " (reduction " << io::num(100.0 * summary.relative_reduction) << "%";
  if (summary.test) log << ", one-sided p " << io::num(summary.test->p_less);
  log << ")\n";
}

// ---------------------------------------------------------------- fit-em

inline std::string em_checkpoint_name(std::uint64_t seed) { return "em_" + seed_tag(seed) + ".json"; }
inline std::string moe_checkpoint_name(const std::string& role, std::uint64_t seed) { return "moe_" + role + "_" + seed_tag(seed) + ".json"; }

struct EmCell {
  io::EmCheckpoint ck;
  em::EmFit fit;
  em::InformationCriteria ic;
  double test_mse = 0.0;
};

inline void cmd_fit_em(const json& cfg, std::ostream& log) {
  const auto data = load_data(cfg, log);
  const auto f = split_fractions(cfg);
  const auto seed_list = seeds(cfg);
  const auto base = em_config(cfg);
  const double c = get<double>(cfg, "em.c");
  if (!(c >= 0.0)) throw ConfigError("em.c must be non-negative");
  const auto dir = prepare_output_dir(cfg);

  std::vector<EmCell> cells(seed_list.size());
  parallel_for(seed_list.size(), threads(cfg), [&](std::size_t k) {
    cells[k] = with_context("seed " + std::to_string(seed_list[k]), [&] {
      const Prepared p = prepare(data, f, seed_list[k]);
      EmCell cell;
      em::EmConfig ec = base;
      ec.seed = seed_list[k];
      cell.fit = em::fit(p.train, ec);
      cell.ic = em::information_criteria(cell.fit, p.train);
      dro::DroConfig dc;
      dc.c = c;
      cell.ck.weights = dro::solve_v(dro::estimate_gram(cell.fit.params, p.train), dc);
      cell.ck.cfg = ec;
      cell.ck.spec = p.train.spec;
      cell.ck.standardizer = p.standardizer;
      cell.ck.stamp = p.stamp;
      cell.ck.params = cell.fit.params;
      cell.ck.loglik = cell.fit.loglik;
      const Vector pred = ensemble_predictions(cell.fit.params, cell.ck.weights.v, design_matrix(p.test));
      cell.test_mse = (p.test.y - pred).squaredNorm() / static_cast<double>(p.test.n());
      return cell;
    });
  });

  std::vector<std::string> header{"seed", "iterations", "converged", "loglik", "aic", "bic", "irls_warnings", "c", "objective", "test_mse"};
  for (int j = 1; j <= base.g; ++j) header.push_back("v" + std::to_string(j));
  io::Table summary(header);
  for (const auto& cell : cells) {
    const auto seed = cell.ck.cfg.seed;
    io::save_checkpoint(path_in(dir, em_checkpoint_name(seed)), io::to_json(cell.ck));
    io::Table trace({"iteration", "loglik", "step"});
    for (std::size_t i = 0; i < cell.fit.trace.size(); ++i) {
      trace.add({std::to_string(i), io::exact(cell.fit.trace[i]), i == 0 ? "" : io::num(cell.fit.alphas[i - 1])});
    }
    io::write_text(path_in(dir, "em_trace_" + seed_tag(seed) + ".csv"), trace.str());
    std::vector<std::string> row{std::to_string(seed),         std::to_string(cell.fit.iterations), cell.fit.converged ? "1" : "0",
                                 io::num(cell.fit.loglik),     io::num(cell.ic.aic),                io::num(cell.ic.bic),
                                 std::to_string(cell.fit.irls_warnings), io::num(cell.ck.weights.c), io::num(cell.ck.weights.objective),
                                 io::num(cell.test_mse)};
    for (Index j = 0; j < cell.ck.weights.v.size(); ++j) row.push_back(io::num(cell.ck.weights.v(j)));
    summary.add(row);
  }
  io::write_text(path_in(dir, "fit_em.csv"), summary.str());
  log << "fitted " << cells.size() << " mixture model(s) into " << dir << "\n";
}

// ---------------------------------------------------------------- fit-moe

inline void cmd_fit_moe(const json& cfg, std::ostream& log) {
  const auto data = load_data(cfg, log);
  const auto f = split_fractions(cfg);
  const auto seed_list = seeds(cfg);
  const auto roles = moe_roles(cfg);
  const auto dir = prepare_output_dir(cfg);

  struct Cell {
    io::MoeCheckpoint ck;
    std::vector<moe::EpochLoss> trace;
  };
  const std::size_t nr = roles.size();
  std::vector<Cell> cells(seed_list.size() * nr);
  parallel_for(cells.size(), threads(cfg), [&](std::size_t k) {
    const auto seed = seed_list[k / nr];
    const auto& role = roles[k % nr];
    cells[k] = with_context(role + ", seed " + std::to_string(seed), [&] {
      const Prepared p = prepare(data, f, seed);
      Cell cell;
      cell.ck.role = role;
      cell.ck.cfg = role_config(cfg, role, seed);
      cell.ck.spec = p.train.spec;
      cell.ck.standardizer = p.standardizer;
      cell.ck.stamp = p.stamp;
      auto res = moe::train(p.train, cell.ck.cfg);
      cell.ck.model = std::move(res.model);
      cell.trace = std::move(res.trace);
      return cell;
    });
  });

  io::Table summary({"role", "seed", "g", "variant", "alpha", "epochs", "final_loss_total", "final_loss_avg", "final_loss_worst"});
  for (const auto& cell : cells) {
    const auto& ck = cell.ck;
    io::save_checkpoint(path_in(dir, moe_checkpoint_name(ck.role, ck.cfg.seed)), io::to_json(ck));
    io::Table trace({"epoch", "loss_total", "loss_avg", "loss_worst"});
    for (std::size_t e = 0; e < cell.trace.size(); ++e) {
      trace.add({std::to_string(e + 1), io::exact(cell.trace[e].l_total), io::exact(cell.trace[e].l_avg), io::exact(cell.trace[e].l_worst)});
    }
    io::write_text(path_in(dir, "moe_" + ck.role + "_" + seed_tag(ck.cfg.seed) + "_trace.csv"), trace.str());
    const auto& last = cell.trace.empty() ? moe::EpochLoss{} : cell.trace.back();
    summary.add({ck.role, std::to_string(ck.cfg.seed), std::to_string(ck.cfg.g), moe::to_string(ck.cfg.variant), io::num(ck.cfg.alpha),
                 std::to_string(ck.cfg.epochs), io::num(last.l_total), io::num(last.l_avg), io::num(last.l_worst)});
  }
  io::write_text(path_in(dir, "fit_moe.csv"), summary.str());
  log << "trained " << cells.size() << " network model(s) into " << dir << "\n";
}

// ---------------------------------------------------------------- evaluate

/// Loads a checkpoint for `model` and `seed`, checks it against the current
/// configuration and split, and predicts the standardized test outcome.
inline Vector checkpoint_predictions(const json& cfg, const std::string& model_dir, const std::string& model, const Prepared& p) {
  const auto seed = p.stamp.seed;
  if (model == "rome-em") {
    const auto path = path_in(model_dir, em_checkpoint_name(seed));
    const auto ck = io::load_em_checkpoint(path);
    em::EmConfig expect = em_config(cfg);
    expect.seed = seed;
    if (io::to_json(ck.cfg) != io::to_json(expect)) throw CompatibilityError("'" + path + "': mixture settings differ from the configuration");
    if (ck.weights.c != get<double>(cfg, "em.c")) throw CompatibilityError("'" + path + "': constraint c differs from the configuration");
    if (!(ck.spec == p.test.spec)) throw CompatibilityError("'" + path + "': feature roles differ from the configuration");
    if (!(ck.stamp == p.stamp)) throw CompatibilityError("'" + path + "': fitted on a different dataset or split");
    const Dataset test = ck.standardizer.apply(p.test_raw);
    return ensemble_predictions(ck.params, ck.weights.v, design_matrix(test));
  }
  const auto path = path_in(model_dir, moe_checkpoint_name(model, seed));
  const auto ck = io::load_moe_checkpoint(path);
  if (ck.role != model) throw CompatibilityError("'" + path + "' holds role '" + ck.role + "'");
  if (io::to_json(ck.cfg) != io::to_json(role_config(cfg, model, seed))) {
    throw CompatibilityError("'" + path + "': network settings differ from the configuration");
  }
  if (!(ck.spec == p.test.spec)) throw CompatibilityError("'" + path + "': feature roles differ from the configuration");
  if (!(ck.stamp == p.stamp)) throw CompatibilityError("'" + path + "': fitted on a different dataset or split");
  const Dataset test = ck.standardizer.apply(p.test_raw);
  return moe::predict(ck.model, ck.cfg, test.a, test.s);
}

/// Significance of a paired comparison against the baseline, as (t, p, code).
struct Comparison {
  std::string t, p, code;
};

inline Comparison compare(const std::vector<double>& model, const std::vector<double>& baseline) {
  std::vector<double> a, b;
  for (std::size_t k = 0; k < model.size(); ++k) {
    if (std::isfinite(model[k]) && std::isfinite(baseline[k])) {
      a.push_back(model[k]);
      b.push_back(baseline[k]);
    }
  }
  if (a.size() < 2) return {"", "", "n/a"};
  try {
    const auto tt = eval::paired_ttest(a, b);
    return {io::num(tt.t), io::num(tt.p_two_sided), eval::significance_code(tt.p_two_sided)};
  } catch (const DegenerateTestError&) {
    return {"", "", "identical"};
  }
}

inline void cmd_evaluate(const json& cfg, std::ostream& log) {
  const auto data = load_data(cfg, log);
  const auto f = split_fractions(cfg);
  const auto seed_list = seeds(cfg);
  auto models = get<std::vector<std::string>>(cfg, "eval.models");
  if (models.empty()) models = moe_roles(cfg);
  const auto baseline = get<std::string>(cfg, "eval.baseline");
  for (const auto& m : models) {
    if (m != "rome-em") role_config(cfg, m, 1);
  }
  if (baseline != "rome-em") role_config(cfg, baseline, 1);
  std::vector<std::string> all = models;
  if (std::find(all.begin(), all.end(), baseline) == all.end()) all.push_back(baseline);
  const auto mn = min_n(cfg);
  const auto centering = r2_centering(cfg);
  auto model_dir = get<std::string>(cfg, "eval.model_dir");
  if (model_dir.empty()) model_dir = get<std::string>(cfg, "output_dir");
  const auto dir = prepare_output_dir(cfg);

  // reports[seed][model][scheme]
  using PerScheme = std::vector<std::pair<std::string, eval::MetricReport>>;
  std::vector<std::vector<PerScheme>> reports(seed_list.size(), std::vector<PerScheme>(all.size()));
  parallel_for(seed_list.size(), threads(cfg), [&](std::size_t k) {
    with_context("seed " + std::to_string(seed_list[k]), [&] {
      const Prepared p = prepare(data, f, seed_list[k]);
      const auto parts = test_partitions(cfg, p);
      for (std::size_t m = 0; m < all.size(); ++m) {
        const Vector pred = checkpoint_predictions(cfg, model_dir, all[m], p);
        for (const auto& [name, part] : parts) reports[k][m].emplace_back(name, eval::metrics(p.test.y, pred, part, mn, centering));
      }
      return 0;
    });
  });

  const std::size_t nscheme = reports.front().front().size();
  const auto bidx = static_cast<std::size_t>(std::find(all.begin(), all.end(), baseline) - all.begin());
  io::Table per_seed({"scheme", "model", "seed", "overall_mse", "overall_r2", "worst_mse", "worst_mse_subgroup", "worst_r2", "worst_r2_subgroup"});
  io::Table mse({"scheme", "model", "n_seeds", "overall_mse_mean", "overall_mse_se", "overall_mse_p", "overall_mse_sig", "worst_mse_mean",
                 "worst_mse_se", "worst_mse_t", "worst_mse_p", "worst_mse_sig"});
  io::Table r2({"scheme", "model", "n_seeds", "overall_r2_mean", "overall_r2_se", "overall_r2_p", "overall_r2_sig", "worst_r2_mean", "worst_r2_se",
                "worst_r2_t", "worst_r2_p", "worst_r2_sig"});
  json full = json::array();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t s = 0; s < nscheme; ++s) {
    const std::string& scheme = reports.front().front()[s].first;
    auto column = [&](std::size_t m, auto&& pick) {
      std::vector<double> v;
      for (std::size_t k = 0; k < seed_list.size(); ++k) v.push_back(pick(reports[k][m][s].second));
      return v;
    };
    auto om = [](const eval::MetricReport& r) { return r.overall_mse; };
    auto wm = [](const eval::MetricReport& r) { return r.worst_mse; };
    auto orr = [nan](const eval::MetricReport& r) { return r.overall_r2.value_or(nan); };
    auto wr = [](const eval::MetricReport& r) { return r.worst_r2; };
    for (std::size_t m = 0; m < all.size(); ++m) {
      if (m == bidx && std::find(models.begin(), models.end(), baseline) == models.end()) continue;
      for (std::size_t k = 0; k < seed_list.size(); ++k) {
        const auto& rep = reports[k][m][s].second;
        per_seed.add({scheme, all[m], std::to_string(seed_list[k]), io::num(rep.overall_mse), io::num(rep.overall_r2.value_or(nan)),
                      io::num(rep.worst_mse), rep.worst_mse_subgroup, io::num(rep.worst_r2), rep.worst_r2_subgroup});
        full.push_back({{"scheme", scheme}, {"model", all[m]}, {"seed", seed_list[k]}, {"report", io::report_json(rep)}});
      }
      const auto a_om = eval::mean_se(column(m, om)), a_wm = eval::mean_se(column(m, wm));
      const auto a_or = eval::mean_se(column(m, orr)), a_wr = eval::mean_se(column(m, wr));
      const auto c_om = compare(column(m, om), column(bidx, om));
      const auto c_wm = compare(column(m, wm), column(bidx, wm));
      const auto c_or = compare(column(m, orr), column(bidx, orr));
      const auto c_wr = compare(column(m, wr), column(bidx, wr));
      const auto n = std::to_string(seed_list.size());
      mse.add({scheme, all[m], n, io::num(a_om.mean), io::num(a_om.se), c_om.p, c_om.code, io::num(a_wm.mean), io::num(a_wm.se), c_wm.t, c_wm.p,
               c_wm.code});
      r2.add({scheme, all[m], n, io::num(a_or.mean), io::num(a_or.se), c_or.p, c_or.code, io::num(a_wr.mean), io::num(a_wr.se), c_wr.t, c_wr.p,
              c_wr.code});
    }
  }
  io::write_text(path_in(dir, "results_mse.csv"), mse.str());
  io::write_text(path_in(dir, "results_r2.csv"), r2.str());
  io::write_text(path_in(dir, "results_per_seed.csv"), per_seed.str());
  io::write_text(path_in(dir, "results_subgroups.json"), full.dump(1) + "\n");
  log << "evaluated " << models.size() << " model(s) over " << seed_list.size() << " seed(s) and " << nscheme << " scheme(s) against "
      << baseline << "\n";
}

// ---------------------------------------------------------------- ablate-alpha

/// Grid values in first-seen order with duplicates removed.
inline std::vector<double> dedupe_grid(const std::vector<double>& grid, std::ostream& log) {
  std::vector<double> out;
  for (double a : grid) {
    if (std::find(out.begin(), out.end(), a) == out.end()) {
      out.push_back(a);
    } else {
      log << "warning: duplicate alpha " << io::num(a) << " removed from the grid\n";
    }
  }
  return out;
}

struct AblationCell {
  std::string variant;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double overall_mse = 0.0, worst_mse = 0.0;
  std::string worst_subgroup;
};

inline void cmd_ablate_alpha(const json& cfg, std::ostream& log) {
  const auto data = load_data(cfg, log);
  const auto f = split_fractions(cfg);
  const auto seed_list = seeds(cfg);
  const auto alphas = dedupe_grid(get<std::vector<double>>(cfg, "ablation.alphas"), log);
  if (alphas.empty()) throw ConfigError("ablation.alphas must not be empty");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ablation.alphas values must lie in [0, 1]");
  }
  const auto variants = get<std::vector<std::string>>(cfg, "ablation.variants");
  if (variants.empty()) throw ConfigError("ablation.variants must not be empty");
  std::vector<std::string> roles;
  for (const auto& v : variants) roles.push_back(moe::to_string(moe::parse_variant(v)) == "S" ? "rome-moe-s" : "rome-moe-as");
  const auto scheme_name = get<std::string>(cfg, "ablation.scheme");
  const auto mn = min_n(cfg);
  const auto dir = prepare_output_dir(cfg);

  const std::size_t na = alphas.size(), nv = roles.size();
  std::vector<AblationCell> cells(seed_list.size() * nv * na);
  parallel_for(cells.size(), threads(cfg), [&](std::size_t k) {
    const auto seed = seed_list[k / (nv * na)];
    const auto v = (k / na) % nv;
    const double alpha = alphas[k % na];
    cells[k] = with_context(roles[v] + ", alpha " + io::num(alpha) + ", seed " + std::to_string(seed), [&] {
      const Prepared p = prepare(data, f, seed);
      const auto parts = test_partitions(cfg, p);
      const auto* part = &parts.front();
      if (!scheme_name.empty()) {
        auto it = std::find_if(parts.begin(), parts.end(), [&](const auto& x) { return x.first == scheme_name; });
        if (it == parts.end()) throw ConfigError("ablation.scheme '" + scheme_name + "' is not defined");
        part = &*it;
      }
      moe::MoeConfig mc = role_config(cfg, roles[v], seed);
      mc.alpha = alpha;
      const auto res = moe::train(p.train, mc);
      const auto rep = eval::metrics(p.test.y, moe::predict(res.model, mc, p.test.a, p.test.s), part->second, mn);
      return AblationCell{moe::to_string(mc.variant), alpha, seed, rep.overall_mse, rep.worst_mse, rep.worst_mse_subgroup};
    });
  });

  io::Table raw({"variant", "alpha", "seed", "overall_mse", "worst_mse", "worst_subgroup"});
  for (const auto& c : cells) raw.add({c.variant, io::num(c.alpha), std::to_string(c.seed), io::num(c.overall_mse), io::num(c.worst_mse), c.worst_subgroup});
  io::write_text(path_in(dir, "ablation_alpha.csv"), raw.str());

  io::Table sum({"variant", "alpha", "n_seeds", "overall_mse_mean", "overall_mse_se", "worst_mse_mean", "worst_mse_se"});
  std::vector<io::svg::Series> lines;
  for (std::size_t v = 0; v < nv; ++v) {
    io::svg::Series worst{"ROME-MoE-" + moe::to_string(moe::parse_variant(variants[v])) + " worst-group", {}};
    io::svg::Series overall{"ROME-MoE-" + moe::to_string(moe::parse_variant(variants[v])) + " overall", {}};
    for (std::size_t a = 0; a < na; ++a) {
      std::vector<double> om, wm;
      for (std::size_t s = 0; s < seed_list.size(); ++s) {
        const auto& c = cells[s * nv * na + v * na + a];
        om.push_back(c.overall_mse);
        wm.push_back(c.worst_mse);
      }
      const auto mo = eval::mean_se(om), mw = eval::mean_se(wm);
      sum.add({moe::to_string(moe::parse_variant(variants[v])), io::num(alphas[a]), std::to_string(seed_list.size()), io::num(mo.mean),
               io::num(mo.se), io::num(mw.mean), io::num(mw.se)});
      worst.values.push_back(mw.mean);
      overall.values.push_back(mo.mean);
    }
    lines.push_back(std::move(worst));
    lines.push_back(std::move(overall));
  }
  io::write_text(path_in(dir, "ablation_summary.csv"), sum.str());
  std::vector<double> xs = alphas;
  io::write_text(path_in(dir, "ablation_alpha.svg"), io::svg::line_plot("Test MSE against the worst-group weight", "alpha", "mean test MSE", xs, lines));
  log << "alpha sweep over " << na << " value(s), " << nv << " variant(s), " << seed_list.size() << " seed(s) written to " << dir << "\n";
}

}  // namespace rome::cli
