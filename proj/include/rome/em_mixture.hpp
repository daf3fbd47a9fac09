#pragma once

// EM estimation of a mixture of linear regressions with multinomial-logit
// membership on the sensitive attributes.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/error.hpp"
#include "rome/linalg.hpp"

namespace rome::em {

struct EmConfig {
  int g = 1;
  int max_iter = 100;
  double tau1 = 1e-3;  // parameter-change tolerance
  double tau2 = 5e-3;  // line-search floor
  double ridge = 1e-8;
  int min_group_n = 0;  // 0 selects 5 * design_dim
  int irls_max_iter = 50;
  std::uint64_t seed = 1;

  void validate() const {
    if (g < 1) throw ConfigError("em: g must be >= 1");
    if (max_iter < 1) throw ConfigError("em: max_iter must be >= 1");
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw ConfigError("em: tau1 and tau2 must be positive");
    if (!(ridge >= 0.0)) throw ConfigError("em: ridge must be non-negative");
    if (min_group_n < 0) throw ConfigError("em: min_group_n must be non-negative");
    if (irls_max_iter < 1) throw ConfigError("em: irls_max_iter must be >= 1");
  }

  int effective_min_group_n(const FeatureSpec& spec) const {
    return min_group_n > 0 ? min_group_n : 5 * static_cast<int>(spec.design_dim());
  }
};

struct EmFit {
  MixtureParams params;
  Responsibilities resp;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;   // trace[0] is the initial log-likelihood
  std::vector<double> alphas;  // accepted step per iteration, 0 when rejected
  int irls_warnings = 0;
};

struct GammaUpdate {
  Matrix gamma;
  std::vector<bool> warned;  // per group: IRLS hit its limit or diverged
};

struct LineSearchResult {
  MixtureParams params;
  double alpha = 0.0;
  double loglik = 0.0;
};

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
  int k = 0;
};

namespace detail {

// Design and membership matrices are reused by every step of a fit.
struct Problem {
  Matrix x;
  Matrix s_mem;
  Vector y;

  explicit Problem(const Dataset& data) : x(design_matrix(data)), s_mem(membership_features(data)), y(data.y) {}
};

inline Matrix log_membership(const Matrix& gamma, const Matrix& s_mem) {
  Matrix scores = s_mem * gamma.transpose();
  for (Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    const double lse = mx + std::log((scores.row(i).array() - mx).exp().sum());
    scores.row(i).array() -= lse;
  }
  return scores;
}

// log p_ij - r_ij^2 / (2 sigma2), n x G.
inline Matrix joint_log_kernel(const Problem& pb, const MixtureParams& params) {
  Matrix lk = log_membership(params.gamma, pb.s_mem);
  const Matrix pred = pb.x * params.omega.transpose();
  for (Index j = 0; j < params.g; ++j) {
    lk.col(j).array() -= (pb.y - pred.col(j)).array().square() / (2.0 * params.sigma2);
  }
  return lk;
}

inline double log_likelihood(const Problem& pb, const MixtureParams& params) {
  const Matrix lk = joint_log_kernel(pb, params);
  const double constant = -0.5 * std::log(2.0 * std::numbers::pi * params.sigma2);
  double total = 0.0;
  for (Index i = 0; i < lk.rows(); ++i) {
    const double mx = lk.row(i).maxCoeff();
    total += mx + std::log((lk.row(i).array() - mx).exp().sum()) + constant;
  }
  if (!std::isfinite(total)) throw NumericalError("log-likelihood is not finite");
  return total;
}

inline Responsibilities e_step(const Problem& pb, const MixtureParams& params) {
  Matrix lk = joint_log_kernel(pb, params);
  for (Index i = 0; i < lk.rows(); ++i) {
    const double mx = lk.row(i).maxCoeff();
    if (!std::isfinite(mx)) throw NumericalError("e-step: all group likelihoods underflow at row " + std::to_string(i));
    lk.row(i) = (lk.row(i).array() - mx).exp();
    lk.row(i) /= lk.row(i).sum();
  }
  return {std::move(lk)};
}

inline GammaUpdate m_step_gamma(const Problem& pb, const Responsibilities& resp, const Matrix& gamma_old, const EmConfig& cfg) {
  GammaUpdate out{gamma_old, std::vector<bool>(static_cast<std::size_t>(gamma_old.rows()), false)};
  if (gamma_old.rows() == 1) return out;  // softmax of one score is 1 whatever gamma is
  const Vector ones = Vector::Ones(pb.s_mem.rows());
  for (Index j = 0; j < gamma_old.rows(); ++j) {
    const auto fit = linalg::irls_logistic(pb.s_mem, resp.w.col(j), ones, gamma_old.row(j).transpose(), cfg.irls_max_iter,
                                           1e-8, cfg.ridge);
    if (fit.diverged) {
      out.warned[static_cast<std::size_t>(j)] = true;
      continue;
    }
    if (!fit.converged) out.warned[static_cast<std::size_t>(j)] = true;
    out.gamma.row(j) = fit.coef.transpose();
  }
  return out;
}

inline Matrix m_step_omega(const Problem& pb, const Responsibilities& resp, const Matrix& omega_old, const EmConfig& cfg) {
  Matrix omega = omega_old;
  for (Index j = 0; j < omega.rows(); ++j) {
    if (resp.w.col(j).sum() < 1e-6) continue;  // empty group keeps its row
    omega.row(j) = linalg::weighted_least_squares(pb.x, pb.y, resp.w.col(j), cfg.ridge).transpose();
  }
  return omega;
}

inline LineSearchResult line_search(const Problem& pb, const MixtureParams& old, double old_loglik,
                                    const MixtureParams& cand, const EmConfig& cfg) {
  const Matrix d_gamma = cand.gamma - old.gamma;
  const Matrix d_omega = cand.omega - old.omega;
  for (double alpha = 0.5; alpha >= cfg.tau2; alpha *= 0.5) {
    MixtureParams trial = old;
    trial.gamma = old.gamma + alpha * d_gamma;
    trial.omega = old.omega + alpha * d_omega;
    const double ll = log_likelihood(pb, trial);
    if (ll > old_loglik) return {std::move(trial), alpha, ll};
  }
  return {old, 0.0, old_loglik};
}

inline Vector pooled_omega(const Problem& pb, double ridge) { return linalg::ordinary_least_squares(pb.x, pb.y, ridge); }

inline EmFit run(const Problem& pb, MixtureParams params, const EmConfig& cfg) {
  EmFit fit;
  double ll = log_likelihood(pb, params);
  fit.trace.push_back(ll);
  for (int t = 1; t <= cfg.max_iter; ++t) {
    try {
      const Responsibilities resp = e_step(pb, params);
      MixtureParams cand = params;
      auto gu = m_step_gamma(pb, resp, params.gamma, cfg);
      for (bool w : gu.warned) fit.irls_warnings += w ? 1 : 0;
      cand.gamma = std::move(gu.gamma);
      cand.omega = m_step_omega(pb, resp, params.omega, cfg);
      auto step = line_search(pb, params, ll, cand, cfg);
      const double change = (step.params.gamma - params.gamma).cwiseAbs().sum() +
                            (step.params.omega - params.omega).cwiseAbs().sum();
      fit.iterations = t;
      fit.alphas.push_back(step.alpha);
      if (step.alpha > 0.0) {
        params = std::move(step.params);
        ll = step.loglik;
        fit.trace.push_back(ll);
      }
      if (change < cfg.tau1) {
        fit.converged = true;
        break;
      }
    } catch (const NumericalError& e) {
      throw NumericalError("em iteration " + std::to_string(t) + ": " + e.what());
    }
  }
  fit.resp = e_step(pb, params);
  fit.params = std::move(params);
  fit.loglik = ll;
  return fit;
}

}  // namespace detail

/// Starting parameters from hard labels (given, or drawn uniformly with cfg.seed).
/// Labels are zero-based.
inline MixtureParams initialize(const Dataset& data, const EmConfig& cfg,
                                const std::optional<std::vector<int>>& init_assign = std::nullopt) {
  cfg.validate();
  data.validate();
  const Index n = data.n();
  if (cfg.g > n) throw ConfigError("em: more groups than observations");
  std::vector<int> labels;
  if (init_assign) {
    if (static_cast<Index>(init_assign->size()) != n) throw ContractError("em: init_assign length differs from n");
    for (int z : *init_assign) {
      if (z < 0 || z >= cfg.g) throw ConfigError("em: initial label outside [0, g)");
    }
    labels = *init_assign;
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, cfg.g - 1);
    labels.resize(static_cast<std::size_t>(n));
    for (auto& z : labels) z = pick(rng);
  }

  const detail::Problem pb(data);
  MixtureParams params;
  params.g = cfg.g;
  params.gamma = Matrix::Zero(cfg.g, pb.s_mem.cols());
  params.omega.resize(cfg.g, pb.x.cols());
  const Vector pooled = detail::pooled_omega(pb, cfg.ridge);
  const int min_n = cfg.effective_min_group_n(data.spec);
  const Vector ones = Vector::Ones(n);
  for (int j = 0; j < cfg.g; ++j) {
    std::vector<Index> rows;
    Vector indicator = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      if (labels[static_cast<std::size_t>(i)] == j) {
        rows.push_back(i);
        indicator(i) = 1.0;
      }
    }
    if (cfg.g > 1) {
      const auto lf = linalg::irls_logistic(pb.s_mem, indicator, ones, Vector::Zero(pb.s_mem.cols()), cfg.irls_max_iter, 1e-8,
                                            cfg.ridge);
      if (!lf.diverged) params.gamma.row(j) = lf.coef.transpose();
    }
    if (static_cast<int>(rows.size()) >= min_n) {
      Matrix xg(static_cast<Index>(rows.size()), pb.x.cols());
      Vector yg(static_cast<Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        xg.row(static_cast<Index>(r)) = pb.x.row(rows[r]);
        yg(static_cast<Index>(r)) = pb.y(rows[r]);
      }
      params.omega.row(j) = linalg::ordinary_least_squares(xg, yg, cfg.ridge).transpose();
    } else {
      params.omega.row(j) = pooled.transpose();
    }
  }
  return params;
}

inline Responsibilities e_step(const Dataset& data, const MixtureParams& params) {
  params.validate(data.spec);
  return detail::e_step(detail::Problem(data), params);
}

inline GammaUpdate m_step_gamma(const Dataset& data, const Responsibilities& resp, const Matrix& gamma_old,
                                const EmConfig& cfg = {}) {
  rome::detail::require(resp.w.rows() == data.n() && resp.w.cols() == gamma_old.rows(), "m_step_gamma: responsibilities shape mismatch");
  return detail::m_step_gamma(detail::Problem(data), resp, gamma_old, cfg);
}

inline Matrix m_step_omega(const Dataset& data, const Responsibilities& resp, const Matrix& omega_old, const EmConfig& cfg = {}) {
  rome::detail::require(resp.w.rows() == data.n() && resp.w.cols() == omega_old.rows(), "m_step_omega: responsibilities shape mismatch");
  return detail::m_step_omega(detail::Problem(data), resp, omega_old, cfg);
}

inline double log_likelihood(const Dataset& data, const MixtureParams& params) {
  params.validate(data.spec);
  return detail::log_likelihood(detail::Problem(data), params);
}

/// Backtracking step from `old` toward `candidate`: alpha = 0.5, 0.25, ... while
/// alpha >= tau2. Returns `old` with alpha 0 when no trial strictly improves.
inline LineSearchResult line_search_step(const Dataset& data, const MixtureParams& old, const MixtureParams& candidate,
                                         const EmConfig& cfg) {
  old.validate(data.spec);
  candidate.validate(data.spec);
  rome::detail::require(old.g == candidate.g, "line_search_step: group counts differ");
  const detail::Problem pb(data);
  return detail::line_search(pb, old, detail::log_likelihood(pb, old), candidate, cfg);
}

/// EM from explicit starting parameters.
inline EmFit fit_from(const Dataset& data, const EmConfig& cfg, MixtureParams start) {
  cfg.validate();
  data.validate();
  start.validate(data.spec);
  rome::detail::require(start.g == cfg.g, "fit_from: start has a different group count than cfg");
  return detail::run(detail::Problem(data), std::move(start), cfg);
}

inline EmFit fit(const Dataset& data, const EmConfig& cfg, const std::optional<std::vector<int>>& init_assign = std::nullopt) {
  return fit_from(data, cfg, initialize(data, cfg, init_assign));
}

/// Pooled (single-group) least squares on the design matrix.
inline Vector pooled_regression(const Dataset& data, double ridge = 1e-8) {
  return detail::pooled_omega(detail::Problem(data), ridge);
}

/// AIC = 2k - 2 loglik, BIC = k ln n - 2 loglik.
inline InformationCriteria information_criteria(double loglik, int k, double n) {
  return {2.0 * k - 2.0 * loglik, k * std::log(n) - 2.0 * loglik, k};
}

inline InformationCriteria information_criteria(double loglik, int g, const FeatureSpec& spec, Index n) {
  const int k = g * static_cast<int>(spec.mem_indices.size()) + g * static_cast<int>(spec.design_dim());
  return information_criteria(loglik, k, static_cast<double>(n));
}

inline InformationCriteria information_criteria(const EmFit& fit, const Dataset& data) {
  return information_criteria(fit.loglik, fit.params.g, data.spec, data.n());
}

}  // namespace rome::em
