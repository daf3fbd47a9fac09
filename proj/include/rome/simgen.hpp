#pragma once

// Simulation study: four latent groups with multinomial-logit membership on
// five sensitive attributes and group-specific linear outcomes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/dro_weights.hpp"
#include "rome/em_mixture.hpp"
#include "rome/error.hpp"
#include "rome/eval.hpp"
#include "rome/parallel.hpp"

namespace rome::sim {

/// Membership coefficients, one row per group, one column per sensitive attribute.
inline Matrix default_gamma() {
  Matrix g(4, 5);
  g << 2.0, 2.0, 2.0, 2.0, 2.0,     //
      -3.0, -2.0, -5.0, 0.1, 0.1,   //
      0.1, -10.0, 0.1, 0.1, 0.1,    //
      -2.0, -2.0, -2.0, -2.0, -2.0;
  return g;
}

/// Outcome coefficients, rows = intercept, A1..A15, S1..S5; columns = groups.
inline Matrix default_beta() {
  Matrix b(21, 4);
  b << 0.844, 0.090, 0.962, 0.618,    //
      -0.423, 0.749, 1.309, 0.307,    //
      0.696, -0.545, 0.559, 1.703,    //
      -0.449, 1.646, -1.165, 1.361,   //
      -0.737, -0.429, 0.255, 1.384,   //
      1.144, -1.003, 1.014, -1.377,   //
      0.988, 1.666, -1.336, -1.209,   //
      -1.702, -1.681, -1.295, 0.745,  //
      1.217, 1.800, -1.767, 0.218,    //
      -0.922, -1.566, 0.744, -0.287,  //
      0.403, -1.523, 0.395, -1.727,   //
      1.729, 1.151, 0.292, 0.830,     //
      -1.661, 1.461, 1.628, -1.368,   //
      -0.217, 1.637, 0.840, -1.781,   //
      -0.437, -0.831, -0.509, 1.747,  //
      -1.520, -0.487, -0.325, -1.428, //
      -0.372, -0.557, 1.058, 0.414,   //
      0.826, -1.509, -0.450, 0.903,   //
      -1.453, -0.848, -0.748, 1.429,  //
      -0.773, 0.996, 0.765, 1.460,    //
      -1.134, -1.441, 0.509, -1.790;
  return b;
}

struct SimSpec {
  int n = 8000;
  int n_test = 8000;
  int g = 4;
  int p_a = 15;
  int p_s = 5;
  Matrix gamma_true = default_gamma();
  Matrix beta_true = default_beta();
  double noise_sd = 1.0;
  double misspec_rate = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1 || n_test < 1) throw ConfigError("sim: n and n_test must be >= 1");
    if (g < 1 || p_a < 1 || p_s < 1) throw ConfigError("sim: g, p_a and p_s must be >= 1");
    if (gamma_true.rows() != g || gamma_true.cols() != p_s) throw ConfigError("sim: gamma_true must be g x p_s");
    if (beta_true.rows() != 1 + p_a + p_s || beta_true.cols() != g) throw ConfigError("sim: beta_true must be (1 + p_a + p_s) x g");
    if (!(noise_sd >= 0.0)) throw ConfigError("sim: noise_sd must be non-negative");
    if (!(misspec_rate >= 0.0 && misspec_rate <= 1.0)) throw ConfigError("sim: misspec_rate must lie in [0, 1]");
  }

  FeatureSpec feature_spec() const {
    FeatureSpec fs;
    for (int k = 1; k <= p_a; ++k) fs.a_names.push_back("A" + std::to_string(k));
    for (int k = 1; k <= p_s; ++k) fs.s_names.push_back("S" + std::to_string(k));
    fs.y_name = "Y";
    for (int k = 0; k < p_s; ++k) {
      fs.mem_indices.push_back(static_cast<std::size_t>(k));
      fs.out_indices.push_back(static_cast<std::size_t>(k));
    }
    return fs;
  }

  /// Names of the outcome coefficients in design order.
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names{"intercept"};
    for (int k = 1; k <= p_a; ++k) names.push_back("A" + std::to_string(k));
    for (int k = 1; k <= p_s; ++k) names.push_back("S" + std::to_string(k));
    return names;
  }
};

struct SimData {
  Dataset data;
  std::vector<int> labels;  // zero-based true groups
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), 0x5eedu};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Draws n rows from stream `stream_id` of spec.seed. Stream 0 is the training
/// sample and stream 1 the test sample in replication runs.
inline SimData generate(const SimSpec& spec, int n, std::uint64_t stream_id = 0) {
  spec.validate();
  auto rng = detail::stream(spec.seed, stream_id);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SimData out;
  out.data.spec = spec.feature_spec();
  out.data.a.resize(n, spec.p_a);
  out.data.s.resize(n, spec.p_s);
  out.data.y.resize(n);
  out.labels.resize(static_cast<std::size_t>(n));
  Vector x(1 + spec.p_a + spec.p_s);
  x(0) = 1.0;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 1; k < x.size(); ++k) x(k) = normal(rng);
    out.data.a.row(i) = x.segment(1, spec.p_a).transpose();
    out.data.s.row(i) = x.tail(spec.p_s).transpose();
    const Vector p = membership_probs(spec.gamma_true, x.tail(spec.p_s));
    const double u = unif(rng);
    int z = spec.g - 1;
    double cum = 0.0;
    for (int j = 0; j < spec.g; ++j) {
      cum += p(j);
      if (u < cum) {
        z = j;
        break;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = z;
    out.data.y(i) = spec.beta_true.col(z).dot(x) + spec.noise_sd * normal(rng);
  }
  return out;
}

inline SimData generate(const SimSpec& spec) { return generate(spec, spec.n, 0); }

/// Moves floor(rate * n) uniformly chosen labels to a uniformly chosen wrong label.
inline std::vector<int> misspecify_init(const std::vector<int>& labels, double rate, int g, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("misspecify_init: rate must lie in [0, 1]");
  if (g < 1) throw ConfigError("misspecify_init: g must be >= 1");
  std::vector<int> out = labels;
  if (g == 1) return out;
  auto rng = detail::stream(seed, 2);
  const auto n = labels.size();
  const auto m = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_int_distribution<int> pick(0, g - 2);
  for (std::size_t r = 0; r < m; ++r) {
    const auto i = idx[r];
    const int k = pick(rng);
    out[i] = k < labels[i] ? k : k + 1;
  }
  return out;
}

struct Matching {
  std::vector<int> perm;  // fitted row perm[j] is matched to true group j
  double distance = 0.0;  // Frobenius distance after matching
};

/// Permutation of fitted rows minimising the Frobenius distance to the truth
/// (columns of `truth` are groups), by enumeration of all G! permutations.
inline Matching best_permutation(const Matrix& fitted_rows, const Matrix& truth) {
  rome::detail::require(fitted_rows.rows() == truth.cols() && fitted_rows.cols() == truth.rows(), "best_permutation: shape mismatch");
  const int g = static_cast<int>(truth.cols());
  std::vector<int> perm(static_cast<std::size_t>(g));
  std::iota(perm.begin(), perm.end(), 0);
  Matrix cost(g, g);
  for (int f = 0; f < g; ++f) {
    for (int t = 0; t < g; ++t) cost(f, t) = (fitted_rows.row(f).transpose() - truth.col(t)).squaredNorm();
  }
  Matching best{perm, std::numeric_limits<double>::infinity()};
  do {
    double total = 0.0;
    for (int t = 0; t < g; ++t) total += cost(perm[static_cast<std::size_t>(t)], t);
    if (total < best.distance) best = {perm, total};
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.distance = std::sqrt(best.distance);
  return best;
}

struct SimRow {
  std::uint64_t seed = 0;
  std::string method;  // "pooled" or "rome-em"
  double c = std::numeric_limits<double>::quiet_NaN();
  double overall_mse = 0.0;
  double worst_mse = 0.0;
  int worst_group = 0;  // one-based
  std::vector<double> group_mse;
  std::vector<double> v;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

struct RecoveryRow {
  std::uint64_t seed = 0;
  std::string method;
  int group = 0;  // one-based true group
  std::string parameter;
  double estimate = 0.0;
  double truth = 0.0;
};

struct Replication {
  std::uint64_t seed = 0;
  std::vector<SimRow> rows;  // pooled first, then one per c
  std::vector<RecoveryRow> recovery;
  double pooled_mae = 0.0;   // mean |estimate - truth| over all groups and parameters
  double rome_mae = 0.0;
  int em_iterations = 0;
  bool em_converged = false;
  double em_loglik = 0.0;
};

namespace detail {

inline SimRow score(const Vector& pred, const SimData& test, int g) {
  SimRow row;
  std::vector<double> sse(static_cast<std::size_t>(g), 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(g), 0);
  double total = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double r = test.data.y(i) - pred(i);
    const auto z = static_cast<std::size_t>(test.labels[static_cast<std::size_t>(i)]);
    sse[z] += r * r;
    ++cnt[z];
    total += r * r;
  }
  row.overall_mse = total / static_cast<double>(pred.size());
  row.worst_mse = -1.0;
  for (int j = 0; j < g; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const double mse = cnt[ju] > 0 ? sse[ju] / cnt[ju] : std::numeric_limits<double>::quiet_NaN();
    row.group_mse.push_back(mse);
    if (cnt[ju] > 0 && mse > row.worst_mse) {
      row.worst_mse = mse;
      row.worst_group = j + 1;
    }
  }
  return row;
}

}  // namespace detail

/// One replication: train/test draw, misspecified start, EM fit, pooled
/// baseline, constraint sweep and recovery table. Worst-group MSE uses the
/// true test labels.
inline Replication replicate(const SimSpec& base, const em::EmConfig& em_cfg, const std::vector<double>& c_grid, std::uint64_t seed) {
  SimSpec spec = base;
  spec.seed = seed;
  const SimData train = generate(spec, spec.n, 0);
  const SimData test = generate(spec, spec.n_test, 1);
  const auto init = misspecify_init(train.labels, spec.misspec_rate, spec.g, seed);

  em::EmConfig cfg = em_cfg;
  cfg.g = spec.g;
  cfg.seed = seed;
  const em::EmFit fit = em::fit(train.data, cfg, init);
  const Vector pooled = em::pooled_regression(train.data, cfg.ridge);

  Replication rep;
  rep.seed = seed;
  rep.em_iterations = fit.iterations;
  rep.em_converged = fit.converged;
  rep.em_loglik = fit.loglik;

  const Matrix x_test = design_matrix(test.data);
  SimRow prow = detail::score(x_test * pooled, test, spec.g);
  prow.seed = seed;
  prow.method = "pooled";
  rep.rows.push_back(prow);

  const auto gram = dro::estimate_gram(fit.params, train.data);
  const Vector v0 = Vector::Constant(spec.g, 1.0 / spec.g);
  const auto sweep = dro::constraint_sweep(gram, v0, c_grid);
  const Matrix test_groups = group_predictions(fit.params, x_test);
  for (const auto& rw : sweep) {
    SimRow row = detail::score(test_groups * rw.v, test, spec.g);
    row.seed = seed;
    row.method = "rome-em";
    row.c = rw.c;
    row.v.assign(rw.v.data(), rw.v.data() + rw.v.size());
    row.objective = rw.objective;
    rep.rows.push_back(std::move(row));
  }

  if (fit.params.omega.cols() == spec.beta_true.rows()) {
    const auto names = spec.parameter_names();
    const Matching m = best_permutation(fit.params.omega, spec.beta_true);
    double rome_abs = 0.0, pooled_abs = 0.0;
    for (int j = 0; j < spec.g; ++j) {
      for (Index k = 0; k < spec.beta_true.rows(); ++k) {
        const double truth = spec.beta_true(k, j);
        const double est = fit.params.omega(m.perm[static_cast<std::size_t>(j)], k);
        rep.recovery.push_back({seed, "rome-em", j + 1, names[static_cast<std::size_t>(k)], est, truth});
        rep.recovery.push_back({seed, "pooled", j + 1, names[static_cast<std::size_t>(k)], pooled(k), truth});
        rome_abs += std::abs(est - truth);
        pooled_abs += std::abs(pooled(k) - truth);
      }
    }
    const double cnt = static_cast<double>(spec.g * spec.beta_true.rows());
    rep.rome_mae = rome_abs / cnt;
    rep.pooled_mae = pooled_abs / cnt;
  }
  return rep;
}

/// Independent replications, one per seed, in seed-list order.
inline std::vector<Replication> replication_run(const SimSpec& spec, const em::EmConfig& em_cfg, const std::vector<double>& c_grid,
                                                const std::vector<std::uint64_t>& seeds, unsigned threads = 1) {
  if (seeds.empty()) throw ConfigError("sim: at least one seed is required");
  spec.validate();
  std::vector<Replication> out(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t k) {
    out[k] = with_context("replication " + std::to_string(k) + " (seed " + std::to_string(seeds[k]) + ")",
                          [&] { return replicate(spec, em_cfg, c_grid, seeds[k]); });
  });
  return out;
}

struct ConstraintSummary {
  double c = 0.0;
  double mean_worst_mse = 0.0;
};

struct SimSummary {
  double pooled_mean_worst = 0.0;
  std::vector<ConstraintSummary> per_c;
  double best_c = 0.0;
  double best_mean_worst = 0.0;
  double relative_reduction = 0.0;  // (pooled - best) / pooled
  std::vector<double> pooled_worst;  // per replication
  std::vector<double> best_worst;    // per replication, at best_c
  std::optional<eval::TTest> test;   // paired, rome - pooled
  double pooled_mae = 0.0;
  double rome_mae = 0.0;
};

/// The best constraint is the single c with the lowest mean worst-group MSE
/// across replications.
inline SimSummary summarize(const std::vector<Replication>& reps) {
  rome::detail::require(!reps.empty(), "summarize: no replications");
  SimSummary s;
  const std::size_t nc = reps.front().rows.size() - 1;
  s.per_c.resize(nc);
  for (const auto& r : reps) {
    rome::detail::require(r.rows.size() == nc + 1, "summarize: replications have different constraint grids");
    s.pooled_worst.push_back(r.rows[0].worst_mse);
    s.pooled_mae += r.pooled_mae / static_cast<double>(reps.size());
    s.rome_mae += r.rome_mae / static_cast<double>(reps.size());
    for (std::size_t k = 0; k < nc; ++k) {
      s.per_c[k].c = r.rows[k + 1].c;
      s.per_c[k].mean_worst_mse += r.rows[k + 1].worst_mse / static_cast<double>(reps.size());
    }
  }
  s.pooled_mean_worst = eval::mean_se(s.pooled_worst).mean;
  if (nc == 0) return s;
  std::size_t best = 0;
  for (std::size_t k = 1; k < nc; ++k) {
    if (s.per_c[k].mean_worst_mse < s.per_c[best].mean_worst_mse) best = k;
  }
  s.best_c = s.per_c[best].c;
  for (const auto& r : reps) s.best_worst.push_back(r.rows[best + 1].worst_mse);
  s.best_mean_worst = eval::mean_se(s.best_worst).mean;
  s.relative_reduction = (s.pooled_mean_worst - s.best_mean_worst) / s.pooled_mean_worst;
  if (reps.size() >= 2) {
    try {
      s.test = eval::paired_ttest(s.best_worst, s.pooled_worst);
    } catch (const DegenerateTestError&) {
    }
  }
  return s;
}

}  // namespace rome::sim
