#include <gtest/gtest.h>

#include <cstdio>
#include <random>

#include "../support/oracles.hpp"
#include "rome/dro_weights.hpp"
#include "rome/simgen.hpp"

using namespace rome;

TEST(EstimateGram, ZeroPredictions) {
  EXPECT_TRUE(dro::estimate_gram(Matrix::Zero(5, 3)).gamma_hat.isZero());
}

TEST(EstimateGram, DuplicatePredictorsAreRankOne) {
  Matrix f(4, 2);
  f.col(0) << 1.0, -2.0, 0.5, 3.0;
  f.col(1) = f.col(0);
  const Matrix g = dro::estimate_gram(f).gamma_hat;
  EXPECT_DOUBLE_EQ(g(0, 0), g(0, 1));
  EXPECT_DOUBLE_EQ(g(0, 0), g(1, 1));
  EXPECT_NEAR(g.determinant(), 0.0, 1e-12);
}

TEST(EstimateGram, HandArithmetic) {
  const Matrix g = dro::estimate_gram(Matrix{{1.0, 2.0}, {3.0, 4.0}}).gamma_hat;
  EXPECT_EQ(g, (Matrix{{5.0, 7.0}, {7.0, 10.0}}));
}

TEST(EstimateGram, FromFittedParameters) {
  Dataset d;
  d.spec.a_names = {"a"};
  d.spec.s_names = {"s"};
  d.spec.y_name = "y";
  d.a = Matrix{{1.0}, {2.0}};
  d.s = Matrix::Zero(2, 1);
  d.y = Vector::Zero(2);
  MixtureParams p;
  p.g = 2;
  p.gamma = Matrix::Zero(2, 0);
  p.omega = Matrix{{0.0, 1.0}, {1.0, 1.0}};
  // Predictions (1,2) and (2,3).
  EXPECT_EQ(dro::estimate_gram(p, d).gamma_hat, (Matrix{{2.5, 4.0}, {4.0, 6.5}}));
}

TEST(ProjectSimplex, FixedPointOnSimplex) {
  const Vector u{{0.2, 0.5, 0.3}};
  EXPECT_LT((dro::project_simplex(u) - u).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ProjectSimplex, DominantCoordinate) { EXPECT_EQ(dro::project_simplex(Vector{{10.0, 0.0}}), (Vector{{1.0, 0.0}})); }

TEST(ProjectSimplex, SymmetricShift) {
  const Vector p = dro::project_simplex(Vector{{0.6, 0.6, 0.6}});
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(p(j), 1.0 / 3.0, 1e-15);
}

TEST(ProjectSimplex, OptimalityAgainstRandomSimplexPoints) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::gamma_distribution<double> gd(1.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    Vector u(4);
    for (Index j = 0; j < 4; ++j) u(j) = nd(rng);
    const Vector p = dro::project_simplex(u);
    ASSERT_TRUE(oracle::feasible(p, p, 0.0, 1e-12));
    for (int k = 0; k < 20; ++k) {
      Vector q(4);
      for (Index j = 0; j < 4; ++j) q(j) = gd(rng);
      q /= q.sum();
      EXPECT_LE((p - u).norm(), (q - u).norm() + 1e-12);
    }
  }
}

TEST(ProjectBall, Cases) {
  const Vector v0{{0.0, 0.0}};
  EXPECT_EQ(dro::project_ball(v0, v0, 1.0), v0);
  const Vector u{{3.0, 4.0}};
  EXPECT_EQ(dro::project_ball(u, v0, 1e9), u);
  const Vector p = dro::project_ball(u, v0, 1.0);
  EXPECT_NEAR(p(0), 0.6, 1e-15);
  EXPECT_NEAR(p(1), 0.8, 1e-15);
}

TEST(ProjectFeasible, LandsInIntersection) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  const Vector v0 = Vector::Constant(4, 0.25);
  for (double c : {0.05, 0.2, 0.5, 1.0}) {
    const double r = c * 2.0;
    for (int rep = 0; rep < 50; ++rep) {
      Vector u(4);
      for (Index j = 0; j < 4; ++j) u(j) = nd(rng);
      EXPECT_TRUE(oracle::feasible(dro::project_feasible(u, v0, r), v0, r, 1e-8));
    }
  }
}

TEST(SolveV, ZeroRadiusReturnsBaseline) {
  dro::DroConfig cfg;
  cfg.c = 0.0;
  cfg.v0 = Vector{{0.5, 0.3, 0.2}};
  const auto w = dro::solve_v({Matrix{{2.0, 0.1, 0.0}, {0.1, 1.0, 0.0}, {0.0, 0.0, 3.0}}}, cfg);
  EXPECT_EQ(w.v, cfg.v0);
}

TEST(SolveV, IdentityGivesUniform) {
  dro::DroConfig cfg;
  cfg.c = 1.0;
  const auto w = dro::solve_v({Matrix::Identity(4, 4)}, cfg);
  EXPECT_LT((w.v.array() - 0.25).abs().maxCoeff(), 1e-12);
  EXPECT_NEAR(w.objective, 0.25, 1e-12);
}

TEST(SolveV, ZeroGramReturnsBaseline) {
  const auto w = dro::solve_v({Matrix::Zero(3, 3)}, {});
  EXPECT_EQ(w.v, Vector::Constant(3, 1.0 / 3.0));
}

TEST(SolveV, MatchesBruteForceGrid) {
  std::mt19937_64 rng(5);
  const Vector v0 = Vector::Constant(3, 1.0 / 3.0);
  for (int draw = 0; draw < 20; ++draw) {
    const Matrix gm = oracle::random_psd(3, rng, draw);
    dro::DroConfig cfg;
    cfg.c = 0.3;
    const auto w = dro::solve_v({gm}, cfg);
    const double r = 0.3 * std::sqrt(3.0);
    EXPECT_TRUE(oracle::feasible(w.v, v0, r, 1e-8));
    EXPECT_LE(w.objective, oracle::brute_force_min3(gm, v0, r) + 1e-5) << "draw " << draw;
    EXPECT_NEAR(w.objective, w.v.dot(gm * w.v), 1e-14);
  }
}

TEST(SolveV, NonUniformBaseline) {
  std::mt19937_64 rng(6);
  const Vector v0{{0.6, 0.3, 0.1}};
  for (int draw = 0; draw < 10; ++draw) {
    const Matrix gm = oracle::random_psd(3, rng, draw);
    dro::DroConfig cfg;
    cfg.c = 0.1;
    cfg.v0 = v0;
    const auto w = dro::solve_v({gm}, cfg);
    const double r = 0.1 * std::sqrt(3.0);
    EXPECT_TRUE(oracle::feasible(w.v, v0, r, 1e-8));
    EXPECT_LE(w.objective, oracle::brute_force_min3(gm, v0, r) + 1e-5);
  }
}

TEST(SolveV, ScaleEquivariance) {
  std::mt19937_64 rng(7);
  for (int draw = 0; draw < 20; ++draw) {
    const Matrix gm = oracle::random_psd(4, rng, draw);
    dro::DroConfig cfg;
    cfg.c = 0.4;
    const auto a = dro::solve_v({gm}, cfg);
    const auto b = dro::solve_v({7.5 * gm}, cfg);
    EXPECT_NEAR(b.objective, 7.5 * a.objective, 1e-6 * std::max(1.0, b.objective));
    if (draw % 4 != 3) {
      EXPECT_LT((a.v - b.v).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(SolveV, ErrorPaths) {
  dro::DroConfig cfg;
  cfg.c = 1.5;
  EXPECT_THROW(dro::solve_v({Matrix::Identity(2, 2)}, cfg), ConfigError);
  cfg.c = 0.5;
  cfg.v0 = Vector{{0.7, 0.7}};
  EXPECT_THROW(dro::solve_v({Matrix::Identity(2, 2)}, cfg), ConfigError);
  cfg.v0 = Vector{};
  EXPECT_THROW(dro::solve_v({Matrix{{1.0, 0.0}, {0.5, 1.0}}}, cfg), ContractError);
  EXPECT_THROW(dro::solve_v({Matrix{{1.0, 0.0}, {0.0, -1.0}}}, cfg), ContractError);
}

TEST(ConstraintSweep, ZeroOnlyIsBaseline) {
  const Vector v0 = Vector::Constant(3, 1.0 / 3.0);
  const auto out = dro::constraint_sweep({Matrix{{3.0, 1.0, 0.0}, {1.0, 2.0, 0.0}, {0.0, 0.0, 1.0}}}, v0, {0.0});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].v, v0);
}

TEST(ConstraintSweep, NestedObjectivesNonIncreasing) {
  std::mt19937_64 rng(8);
  const auto grid = dro::default_c_grid();
  for (int draw = 0; draw < 10; ++draw) {
    const Matrix gm = oracle::random_psd(4, rng, draw);
    const auto out = dro::constraint_sweep({gm}, Vector::Constant(4, 0.25), grid);
    ASSERT_EQ(out.size(), grid.size());
    // Grid is ordered from large c to small c, so objectives must not decrease.
    for (std::size_t k = 1; k < out.size(); ++k) EXPECT_GE(out[k].objective, out[k - 1].objective - 1e-9);
    const auto ends = dro::constraint_sweep({gm}, Vector::Constant(4, 0.25), {0.0, 1.0});
    EXPECT_LE(ends[1].objective, ends[0].objective);
    for (const auto& w : out) EXPECT_TRUE(oracle::feasible(w.v, w.v0, w.c * 2.0, 1e-8));
  }
}

TEST(ConstraintSweep, DefaultGrid) {
  const auto g = dro::default_c_grid();
  EXPECT_EQ(g.size(), 27u);
  EXPECT_EQ(g.front(), 1.0);
  EXPECT_EQ(g.back(), 0.02);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_LT(g[k], g[k - 1]);
}

TEST(ConstraintStudy, BestConstraintIsInteriorOnMostReplications) {
  sim::SimSpec spec;
  spec.n = 2000;
  spec.n_test = 2000;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto reps = sim::replication_run(spec, {}, dro::default_c_grid(), seeds);
  int interior = 0;
  for (const auto& r : reps) {
    std::size_t best = 1;
    for (std::size_t k = 2; k < r.rows.size(); ++k) {
      if (r.rows[k].worst_mse < r.rows[best].worst_mse) best = k;
    }
    if (r.rows[best].c > 0.0 && r.rows[best].c < 1.0) ++interior;
  }
  EXPECT_GT(interior, 10);
  std::printf("best c strictly inside (0, 1) on %d of %zu replications\n", interior, reps.size());
}
