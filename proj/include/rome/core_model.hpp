#pragma once

// Shared domain types and the deterministic prediction paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "rome/error.hpp"

namespace rome {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Column roles of a dataset. Index sets are zero-based positions into
/// `s_names`.
struct FeatureSpec {
  std::vector<std::string> a_names;
  std::vector<std::string> s_names;
  std::string y_name;
  std::vector<std::size_t> mem_indices;
  std::vector<std::size_t> out_indices;

  std::size_t p_a() const { return a_names.size(); }
  std::size_t p_s() const { return s_names.size(); }
  /// Length of a design row: intercept, A, then the outcome-model S columns.
  std::size_t design_dim() const { return 1 + p_a() + out_indices.size(); }

  void validate() const {
    if (a_names.empty()) throw ConfigError("feature spec: at least one non-sensitive column is required");
    std::set<std::string> a(a_names.begin(), a_names.end());
    if (a.size() != a_names.size()) throw ConfigError("feature spec: duplicate non-sensitive column name");
    std::set<std::string> s(s_names.begin(), s_names.end());
    if (s.size() != s_names.size()) throw ConfigError("feature spec: duplicate sensitive column name");
    for (const auto& name : s_names) {
      if (a.count(name)) throw ConfigError("feature spec: column '" + name + "' is both sensitive and non-sensitive");
    }
    if (a.count(y_name) || s.count(y_name)) throw ConfigError("feature spec: outcome column '" + y_name + "' is also a feature");
    for (auto k : mem_indices) {
      if (k >= p_s()) throw ConfigError("feature spec: membership index out of range");
    }
    for (auto k : out_indices) {
      if (k >= p_s()) throw ConfigError("feature spec: outcome index out of range");
    }
  }

  bool operator==(const FeatureSpec&) const = default;
};

struct Dataset {
  Matrix a;
  Matrix s;
  Vector y;
  FeatureSpec spec;

  Index n() const { return y.size(); }

  void validate() const {
    if (a.rows() != y.size() || s.rows() != y.size()) throw ContractError("dataset: parts have different row counts");
    if (static_cast<std::size_t>(a.cols()) != spec.p_a() || static_cast<std::size_t>(s.cols()) != spec.p_s()) {
      throw ContractError("dataset: column counts disagree with feature spec");
    }
    if (!a.allFinite() || !s.allFinite() || !y.allFinite()) throw DataError("dataset: non-finite entries");
  }

  Dataset subset(const std::vector<Index>& rows) const {
    Dataset out;
    out.spec = spec;
    out.a.resize(static_cast<Index>(rows.size()), a.cols());
    out.s.resize(static_cast<Index>(rows.size()), s.cols());
    out.y.resize(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = rows[r];
      out.a.row(static_cast<Index>(r)) = a.row(i);
      out.s.row(static_cast<Index>(r)) = s.row(i);
      out.y(static_cast<Index>(r)) = y(i);
    }
    return out;
  }
};

/// One design vector [1, A_i, S_i,out].
struct DesignRow {
  Vector x;

  Index size() const { return x.size(); }
};

struct MixtureParams {
  int g = 1;
  Matrix gamma;  // G x |mem|
  Matrix omega;  // G x design_dim
  double sigma2 = 1.0;

  void validate(const FeatureSpec& spec) const {
    if (g < 1) throw ContractError("mixture params: g must be >= 1");
    if (gamma.rows() != g || omega.rows() != g) throw ContractError("mixture params: row count differs from g");
    if (static_cast<std::size_t>(gamma.cols()) != spec.mem_indices.size()) throw ContractError("mixture params: gamma width differs from |mem|");
    if (static_cast<std::size_t>(omega.cols()) != spec.design_dim()) throw ContractError("mixture params: omega width differs from design dimension");
    if (!(sigma2 > 0.0)) throw ContractError("mixture params: sigma2 must be positive");
  }
};

/// Posterior group weights, n x G.
struct Responsibilities {
  Matrix w;
};

struct RobustWeights {
  Vector v;
  Vector v0;
  double c = 0.0;
  double objective = 0.0;
};

inline DesignRow design_row(const Dataset& data, Index i) {
  const auto& spec = data.spec;
  DesignRow row;
  row.x.resize(static_cast<Index>(spec.design_dim()));
  row.x(0) = 1.0;
  row.x.segment(1, data.a.cols()) = data.a.row(i).transpose();
  Index k = 1 + data.a.cols();
  for (auto j : spec.out_indices) row.x(k++) = data.s(i, static_cast<Index>(j));
  return row;
}

/// All design rows stacked, n x design_dim.
inline Matrix design_matrix(const Dataset& data) {
  const auto& spec = data.spec;
  Matrix x(data.n(), static_cast<Index>(spec.design_dim()));
  x.col(0).setOnes();
  x.middleCols(1, data.a.cols()) = data.a;
  Index k = 1 + data.a.cols();
  for (auto j : spec.out_indices) x.col(k++) = data.s.col(static_cast<Index>(j));
  return x;
}

/// Membership-model columns of S, n x |mem|.
inline Matrix membership_features(const Dataset& data) {
  Matrix m(data.n(), static_cast<Index>(data.spec.mem_indices.size()));
  Index k = 0;
  for (auto j : data.spec.mem_indices) m.col(k++) = data.s.col(static_cast<Index>(j));
  return m;
}

namespace detail {

inline void softmax_inplace(Eigen::Ref<Vector> scores) {
  const double mx = scores.maxCoeff();
  scores.array() = (scores.array() - mx).exp();
  scores /= scores.sum();
}

}  // namespace detail

/// Softmax of the linear scores gamma_j . s_mem.
inline Vector membership_probs(const Matrix& gamma, const Vector& s_mem) {
  detail::require(gamma.cols() == s_mem.size(), "membership_probs: gamma width differs from s_mem length");
  Vector scores = gamma * s_mem;
  detail::softmax_inplace(scores);
  return scores;
}

/// Row-wise membership probabilities for a whole membership-feature matrix, n x G.
inline Matrix membership_matrix(const Matrix& gamma, const Matrix& s_mem) {
  detail::require(gamma.cols() == s_mem.cols(), "membership_matrix: gamma width differs from feature count");
  Matrix scores = s_mem * gamma.transpose();
  for (Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - mx).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

inline double group_predict(const Vector& omega_j, const DesignRow& x) {
  detail::require(omega_j.size() == x.size(), "group_predict: dimension mismatch");
  return omega_j.dot(x.x);
}

inline double ensemble_predict(const MixtureParams& params, const RobustWeights& v, const DesignRow& x) {
  detail::require(v.v.size() == params.g, "ensemble_predict: weight length differs from g");
  detail::require(params.omega.cols() == x.size(), "ensemble_predict: dimension mismatch");
  double out = 0.0;
  for (Index j = 0; j < params.g; ++j) out += v.v(j) * params.omega.row(j).dot(x.x);
  return out;
}

/// Per-group predictions for every row, n x G.
inline Matrix group_predictions(const MixtureParams& params, const Matrix& design) {
  detail::require(params.omega.cols() == design.cols(), "group_predictions: dimension mismatch");
  return design * params.omega.transpose();
}

inline Vector ensemble_predictions(const MixtureParams& params, const Vector& v, const Matrix& design) {
  detail::require(v.size() == params.g, "ensemble_predictions: weight length differs from g");
  return group_predictions(params, design) * v;
}

/// Column z-scores learned on one split and applied to others.
struct Standardizer {
  Vector a_mean, a_sd, s_mean, s_sd;
  double y_mean = 0.0, y_sd = 1.0;

  static Standardizer fit(const Dataset& data) {
    detail::require(data.n() >= 1, "standardizer: empty dataset");
    Standardizer st;
    auto col_stats = [](const Matrix& m, Vector& mean, Vector& sd) {
      mean = m.colwise().mean().transpose();
      sd.resize(m.cols());
      for (Index j = 0; j < m.cols(); ++j) {
        const double var = m.rows() > 1 ? (m.col(j).array() - mean(j)).square().sum() / static_cast<double>(m.rows() - 1) : 0.0;
        // Constant columns are centred but not scaled.
        sd(j) = var > 0.0 ? std::sqrt(var) : 1.0;
      }
    };
    col_stats(data.a, st.a_mean, st.a_sd);
    col_stats(data.s, st.s_mean, st.s_sd);
    Vector ym, ys;
    col_stats(data.y, ym, ys);
    st.y_mean = ym(0);
    st.y_sd = ys(0);
    return st;
  }

  Dataset apply(const Dataset& data) const {
    Dataset out = data;
    for (Index j = 0; j < out.a.cols(); ++j) out.a.col(j) = (out.a.col(j).array() - a_mean(j)) / a_sd(j);
    for (Index j = 0; j < out.s.cols(); ++j) out.s.col(j) = (out.s.col(j).array() - s_mean(j)) / s_sd(j);
    out.y = (out.y.array() - y_mean) / y_sd;
    return out;
  }
};

}  // namespace rome
