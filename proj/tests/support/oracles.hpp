#pragma once

#include <cmath>
#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/moe.hpp"

namespace rome::oracle {

/// Exhaustive minimum of v' G v over a resolution-h lattice of the 3-simplex
/// intersected with the ball |v - v0| <= r.
inline double brute_force_min3(const Matrix& gm, const Vector& v0, double r, double h = 1e-3) {
  const int steps = static_cast<int>(std::lround(1.0 / h));
  double best = std::numeric_limits<double>::infinity();
  Vector v(3);
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      v << i * h, j * h, (steps - i - j) * h;
      if ((v - v0).norm() > r) continue;
      best = std::min(best, v.dot(gm * v));
    }
  }
  return best;
}

/// Random positive semidefinite matrix; every fourth draw is rank deficient.
inline Matrix random_psd(int g, std::mt19937_64& rng, int draw) {
  std::normal_distribution<double> nd;
  const int rank = draw % 4 == 3 ? std::max(1, g - 1) : g;
  Matrix b(rank, g);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = nd(rng);
  Matrix m = b.transpose() * b / static_cast<double>(rank);
  return 0.5 * (m + m.transpose());
}

inline bool feasible(const Vector& v, const Vector& v0, double r, double tol) {
  return v.minCoeff() >= -tol && std::abs(v.sum() - 1.0) <= tol && (v - v0).norm() <= r + tol;
}

struct FdReport {
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped = 0;
};

/// Central finite differences of l_total on `count` randomly chosen parameters.
/// Parameters whose perturbation changes the worst group or a membership set
/// are redrawn, so only points where the loss is smooth are compared.
inline FdReport finite_difference_check(const moe::MoeModel& model, const moe::MoeConfig& cfg, const Matrix& a, const Matrix& s,
                                        const Vector& y, int count = 50, double h = 1e-5, std::uint64_t seed = 1) {
  const auto mask_of = [&](const moe::ForwardResult& fr) {
    std::vector<bool> m;
    for (Index i = 0; i < fr.gate_weights.size(); ++i) m.push_back(fr.gate_weights.data()[i] > cfg.mask_threshold);
    return m;
  };
  const moe::Gradient an = moe::backward(model, cfg, a, s, y);
  const std::vector<double> grad = an.grad.flatten();
  const std::vector<double> theta = model.flatten();
  const auto base_mask = mask_of(moe::forward(model, cfg, a, s));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, theta.size() - 1);
  FdReport rep;
  moe::MoeModel probe = model;
  int attempts = 0;
  while (rep.checked < count && attempts < 20 * count) {
    ++attempts;
    const std::size_t k = pick(rng);
    double loss[2];
    bool stable = true;
    for (int sgn = 0; sgn < 2; ++sgn) {
      std::vector<double> t = theta;
      t[k] += sgn == 0 ? h : -h;
      probe.unflatten(t);
      const auto fr = moe::forward(probe, cfg, a, s);
      const auto bl = moe::group_losses(fr.predictions, fr.gate_weights, y, cfg, &fr.expert_out);
      if (bl.worst_index != an.loss.worst_index || mask_of(fr) != base_mask) stable = false;
      loss[sgn] = bl.l_total;
    }
    if (!stable) {
      ++rep.skipped;
      continue;
    }
    const double fd = (loss[0] - loss[1]) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
    rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - grad[k]) / denom);
    ++rep.checked;
  }
  return rep;
}

}  // namespace rome::oracle
