#pragma once

// Robust aggregation weights: minimise v' G v over the probability simplex
// intersected with an L2 ball around a baseline v0.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/error.hpp"

namespace rome::dro {

/// Second-moment matrix of the group predictions.
struct GramMatrix {
  Matrix gamma_hat;

  Index g() const { return gamma_hat.rows(); }
};

struct DroConfig {
  double c = 1.0;
  Vector v0;  // empty selects uniform
  int max_iter = 5000;
  double step = 0.0;  // <= 0 selects 1 / lambda_max
  double tol = 1e-10;  // relative to lambda_max
};

/// (1/n) F'F for the n x G matrix of group predictions F.
inline GramMatrix estimate_gram(const Matrix& predictions) {
  rome::detail::require(predictions.rows() >= 1, "estimate_gram: need at least one row");
  Matrix g = predictions.transpose() * predictions / static_cast<double>(predictions.rows());
  return {0.5 * (g + g.transpose())};
}

inline GramMatrix estimate_gram(const MixtureParams& params, const Dataset& data) {
  params.validate(data.spec);
  return estimate_gram(group_predictions(params, design_matrix(data)));
}

/// Euclidean projection onto {v >= 0, sum v = 1} by sort and threshold.
inline Vector project_simplex(const Vector& u) {
  const Index g = u.size();
  rome::detail::require(g >= 1, "project_simplex: empty vector");
  std::vector<double> sorted(u.data(), u.data() + g);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (Index k = 0; k < g; ++k) {
    cumsum += sorted[static_cast<std::size_t>(k)];
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (sorted[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
  }
  Vector v = (u.array() - theta).max(0.0);
  const double s = v.sum();
  if (s > 0.0) v /= s;
  return v;
}

/// Projection onto the ball of radius r around v0.
inline Vector project_ball(const Vector& u, const Vector& v0, double r) {
  rome::detail::require(u.size() == v0.size(), "project_ball: dimension mismatch");
  rome::detail::require(r >= 0.0, "project_ball: negative radius");
  const Vector d = u - v0;
  const double norm = d.norm();
  if (norm <= r) return u;
  return v0 + (r / norm) * d;
}

namespace detail {

inline bool on_simplex(const Vector& v, double tol) { return v.minCoeff() >= -tol && std::abs(v.sum() - 1.0) <= tol; }

}  // namespace detail

/// Dykstra's alternating projections onto simplex and ball. The result lies on
/// the simplex and inside the ball up to rounding.
inline Vector project_feasible(const Vector& u, const Vector& v0, double r, int max_inner = 200) {
  Vector x = u;
  Vector p = Vector::Zero(u.size());
  Vector q = Vector::Zero(u.size());
  Vector a = project_simplex(x);
  for (int k = 0; k < max_inner; ++k) {
    a = project_simplex(x + p);
    p = x + p - a;
    const Vector b = project_ball(a + q, v0, r);
    q = a + q - b;
    const double change = (b - x).cwiseAbs().maxCoeff();
    x = b;
    if (detail::on_simplex(b, 1e-10) && (a - b).norm() <= 1e-10 && change <= 1e-12) break;
  }
  // Finish on the simplex, then pull radially toward v0 if the ball is still
  // violated; the pulled point is a convex combination of two simplex points.
  a = project_simplex(x);
  const double dist = (a - v0).norm();
  if (dist > r) {
    if (dist - r > 1e-6) throw InfeasibleError("dro: alternating projections did not reach the feasible set");
    a = v0 + (r / dist) * (a - v0);
  }
  return a;
}

namespace detail {

inline double lambda_max(const Matrix& m) {
  Vector x(m.rows());
  for (Index i = 0; i < x.size(); ++i) x(i) = 1.0 + 0.01 * static_cast<double>(i);
  x.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    const Vector y = m * x;
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    lambda = x.dot(y);
    x = y / norm;
  }
  return std::max(lambda, (m * x).norm());
}

}  // namespace detail

/// Projected gradient descent from v0 on v' G v over the feasible set.
inline RobustWeights solve_v(const GramMatrix& gram, const DroConfig& cfg) {
  const Matrix& gm = gram.gamma_hat;
  const Index g = gm.rows();
  rome::detail::require(g >= 1 && gm.cols() == g, "solve_v: gram must be square and non-empty");
  if (!(cfg.c >= 0.0 && cfg.c <= 1.0)) throw ConfigError("dro: c must lie in [0, 1]");
  const Vector v0 = cfg.v0.size() == 0 ? Vector::Constant(g, 1.0 / static_cast<double>(g)) : cfg.v0;
  rome::detail::require(v0.size() == g, "solve_v: v0 length differs from G");
  if (!detail::on_simplex(v0, 1e-10)) throw ConfigError("dro: v0 must lie on the simplex");
  if ((gm - gm.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, gm.cwiseAbs().maxCoeff())) {
    throw ContractError("solve_v: gram is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gm, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8 * std::max(1.0, gm.cwiseAbs().maxCoeff())) {
    throw ContractError("solve_v: gram is not positive semidefinite");
  }

  RobustWeights out;
  out.v0 = v0;
  out.c = cfg.c;
  out.v = v0;
  out.objective = v0.dot(gm * v0);
  const double r = cfg.c * std::sqrt(static_cast<double>(g));
  if (cfg.c == 0.0 || gm.isZero(0.0)) return out;

  const double lmax = detail::lambda_max(gm);
  if (!(lmax > 0.0)) return out;
  double step = cfg.step > 0.0 ? cfg.step : 1.0 / lmax;
  const double tol = cfg.tol * lmax;

  Vector v = v0;
  double f = out.objective;
  for (int it = 0; it < cfg.max_iter; ++it) {
    Vector next = project_feasible(v - step * (gm * v), v0, r);
    double f_next = next.dot(gm * next);
    // An underestimated lambda_max can overshoot; shrink until descent.
    int shrink = 0;
    while (f_next > f && shrink < 30) {
      step *= 0.5;
      next = project_feasible(v - step * (gm * v), v0, r);
      f_next = next.dot(gm * next);
      ++shrink;
    }
    if (f_next > f) break;
    const double decrease = f - f_next;
    v = std::move(next);
    f = f_next;
    if (decrease < tol) break;
  }
  out.v = v;
  out.objective = f;
  return out;
}

/// solve_v at each c in the grid, same Gram and baseline.
inline std::vector<RobustWeights> constraint_sweep(const GramMatrix& gram, const Vector& v0, const std::vector<double>& c_grid,
                                                   DroConfig base = {}) {
  std::vector<RobustWeights> out;
  out.reserve(c_grid.size());
  base.v0 = v0;
  for (double c : c_grid) {
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("dro: constraint grid values must lie in [0, 1]");
    base.c = c;
    out.push_back(solve_v(gram, base));
  }
  return out;
}

/// The 27-value constraint grid of the simulation study, largest first.
inline std::vector<double> default_c_grid() {
  return {1.0,  0.6,  0.5,  0.49, 0.48, 0.47, 0.46, 0.45, 0.44, 0.43, 0.42, 0.41, 0.40, 0.35,
          0.30, 0.25, 0.20, 0.15, 0.10, 0.09, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02};
}

}  // namespace rome::dro
