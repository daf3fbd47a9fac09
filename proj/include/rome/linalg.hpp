#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "rome/core_model.hpp"
#include "rome/error.hpp"

namespace rome::linalg {

/// Solves (X^T W X + ridge I) beta = X^T W y by Cholesky.
inline Vector weighted_least_squares(const Matrix& x, const Vector& y, const Vector& w, double ridge) {
  detail::require(x.rows() == y.size() && y.size() == w.size(), "weighted_least_squares: dimension mismatch");
  Matrix xtw = x.transpose() * w.asDiagonal();
  Matrix normal = xtw * x;
  normal.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(normal);
  if (llt.info() != Eigen::Success) throw NumericalError("weighted least squares: normal matrix is not positive definite");
  Vector beta = llt.solve(xtw * y);
  if (!beta.allFinite()) throw NumericalError("weighted least squares: non-finite solution");
  return beta;
}

inline Vector ordinary_least_squares(const Matrix& x, const Vector& y, double ridge = 0.0) {
  return weighted_least_squares(x, y, Vector::Ones(y.size()), ridge);
}

struct LogisticFit {
  Vector coef;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;  // non-finite iterate or singular system
};

/// Binary logistic regression without intercept by IRLS. Targets may be
/// fractional in [0, 1]; `prior` are per-row case weights.
inline LogisticFit irls_logistic(const Matrix& x, const Vector& target, const Vector& prior, const Vector& start,
                                 int max_iter = 50, double tol = 1e-8, double ridge = 1e-8) {
  detail::require(x.rows() == target.size() && target.size() == prior.size(), "irls_logistic: dimension mismatch");
  detail::require(start.size() == x.cols(), "irls_logistic: start has wrong length");
  LogisticFit fit;
  fit.coef = start;
  if (x.cols() == 0) {
    fit.converged = true;
    return fit;
  }
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const Vector eta = x * fit.coef;
    // Working response folded into the right-hand side: W z = W eta + prior (t - mu).
    Vector wt(eta.size()), rhs(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta(i)));
      wt(i) = prior(i) * mu * (1.0 - mu);
      rhs(i) = wt(i) * eta(i) + prior(i) * (target(i) - mu);
    }
    Matrix normal = x.transpose() * wt.asDiagonal() * x;
    normal.diagonal().array() += ridge;
    Eigen::LLT<Matrix> llt(normal);
    if (llt.info() != Eigen::Success) {
      fit.diverged = true;
      return fit;
    }
    Vector next = llt.solve(x.transpose() * rhs);
    if (!next.allFinite()) {
      fit.diverged = true;
      return fit;
    }
    const double change = (next - fit.coef).cwiseAbs().maxCoeff();
    fit.coef = std::move(next);
    if (change < tol) {
      fit.converged = true;
      return fit;
    }
  }
  return fit;
}

}  // namespace rome::linalg
