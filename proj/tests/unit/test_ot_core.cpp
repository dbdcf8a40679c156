#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "relreg/ot_core.hpp"

using namespace relreg;

namespace {

PointCloud cloud(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return PointCloud(m);
}

PointCloud random_cloud(RngStream& rng, int n, int m) {
  return PointCloud(oracle::random_matrix(rng, n, m));
}

}  // namespace

TEST(DiscreteDistribution, Validates) {
  EXPECT_THROW(DiscreteDistribution(Vector(0)), InvalidInput);
  EXPECT_THROW(DiscreteDistribution(Vector::Constant(2, 0.4)), InvalidInput);
  Vector neg(2);
  neg << 1.5, -0.5;
  EXPECT_THROW(DiscreteDistribution{neg}, InvalidInput);
  EXPECT_TRUE(DiscreteDistribution::uniform(4).is_uniform());
  Vector w(3);
  w << 0.2, 0.3, 0.5;
  EXPECT_FALSE(DiscreteDistribution(w).is_uniform());
}

TEST(BuildCostMatrix, Examples) {
  EXPECT_EQ(build_cost_matrix(cloud({{0, 0}}), cloud({{0, 0}})).entries()(0, 0), 0.0);
  EXPECT_EQ(build_cost_matrix(cloud({{0, 0}}), cloud({{3, 4}})).entries()(0, 0), 25.0);
  RngStream rng(1, 1);
  const PointCloud x = random_cloud(rng, 3, 2);
  const Matrix c = build_cost_matrix(x, x).entries();
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(c(i, i), 0.0);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(c(i, j), c(j, i));
  }
  EXPECT_NEAR(c(0, 1), (x.row(0) - x.row(1)).squaredNorm(), 1e-14);
}

TEST(BuildCostMatrix, DimensionMismatchThrows) {
  EXPECT_THROW(build_cost_matrix(cloud({{0, 0}}), cloud({{0, 0, 0}})), InvalidInput);
  EXPECT_THROW(build_cost_matrix(PointCloud(Matrix(0, 2)), cloud({{0, 0}})), InvalidInput);
}

TEST(Sinkhorn, SingleAtom) {
  const auto a = DiscreteDistribution::uniform(1);
  const SinkhornResult r = sinkhorn(a, a, Matrix::Ones(1, 1));
  EXPECT_NEAR(r.plan.coupling()(0, 0), 1.0, 1e-15);
}

TEST(Sinkhorn, SmallEpsilonPicksZeroCostMatching) {
  const auto a = DiscreteDistribution::uniform(2);
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  const Matrix k = gibbs_kernel(CostMatrix(c), 0.01);
  const Matrix t = sinkhorn(a, a, k).plan.coupling();
  EXPECT_NEAR(t(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(t(1, 1), 0.5, 1e-12);
  EXPECT_NEAR(t(0, 1), 0.0, 1e-12);
}

TEST(Sinkhorn, RandomKernelMeetsMarginals) {
  RngStream rng(2, 1);
  const auto a = DiscreteDistribution::uniform(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix k(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) k(i, j) = 0.01 + rng.uniform();
    const SinkhornResult r = sinkhorn(a, a, k);
    EXPECT_LT(r.plan.residual(), 1e-6);
    EXPECT_GE(r.plan.coupling().minCoeff(), 0.0);
  }
}

TEST(Sinkhorn, NonConvergenceIsReportedAndStillFeasible) {
  RngStream rng(3, 1);
  Vector wa(4);
  wa << 0.1, 0.2, 0.3, 0.4;
  const DiscreteDistribution a(wa);
  const auto b = DiscreteDistribution::uniform(4);
  const Matrix k = gibbs_kernel(CostMatrix(oracle::random_matrix(rng, 4, 4).cwiseAbs()), 0.05);
  const SinkhornResult r = sinkhorn(a, b, k, SinkhornOpts{1, 1e-15});
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT(r.plan.residual(), 1e-12);
}

TEST(Sinkhorn, ZeroRowIsDegenerate) {
  const auto a = DiscreteDistribution::uniform(2);
  Matrix k(2, 2);
  k << 1, 1, 0, 0;
  EXPECT_THROW(sinkhorn(a, a, k), SolverDegenerate);
  EXPECT_THROW(sinkhorn(a, a, Matrix::Ones(2, 3)), InvalidInput);
}

TEST(FusedCost, BetaZeroIsCrossCost) {
  RngStream rng(4, 1);
  const Matrix dpq = oracle::random_matrix(rng, 3, 4).cwiseAbs();
  const Matrix dp = oracle::random_matrix(rng, 3, 3).cwiseAbs();
  const Matrix dq = oracle::random_matrix(rng, 4, 4).cwiseAbs();
  const Matrix d = build_fused_cost(CostMatrix(dpq), CostMatrix(dp), CostMatrix(dq), 0.0,
                                    DiscreteDistribution::uniform(3),
                                    DiscreteDistribution::uniform(4))
                       .entries();
  EXPECT_TRUE(d == dpq);
}

// D = (1-b) Dpq + b/K (Dp o Dp) 1 1^T + b/N 1 1^T (Dq o Dq)^T, entry by entry.
TEST(FusedCost, UniformMarginalsBitMatchDirectFormula) {
  RngStream rng(5, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(6));
    const int n = 1 + static_cast<int>(rng.uniform_index(6));
    const double beta = rng.uniform();
    const Matrix dpq = oracle::random_matrix(rng, k, n).cwiseAbs();
    const Matrix dp = oracle::random_matrix(rng, k, k).cwiseAbs();
    const Matrix dq = oracle::random_matrix(rng, n, n).cwiseAbs();
    const Matrix d = build_fused_cost(CostMatrix(dpq), CostMatrix(dp), CostMatrix(dq), beta,
                                      DiscreteDistribution::uniform(k),
                                      DiscreteDistribution::uniform(n))
                         .entries();
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < n; ++j) {
        double sp = 0.0;
        for (int l = 0; l < k; ++l) sp += dp(i, l) * dp(i, l);
        double sq = 0.0;
        for (int l = 0; l < n; ++l) sq += dq(j, l) * dq(j, l);
        const double expect = (1.0 - beta) * dpq(i, j) + beta / k * sp + beta / n * sq;
        ASSERT_EQ(d(i, j), expect);
      }
    }
  }
}

TEST(FusedCost, TwoPointHandExpansion) {
  Matrix dp(2, 2);
  dp << 0, 1, 1, 0;
  const auto u = DiscreteDistribution::uniform(2);
  const Matrix d =
      build_fused_cost(CostMatrix(Matrix::Zero(2, 2)), CostMatrix(dp), CostMatrix(dp), 1.0, u, u)
          .entries();
  EXPECT_TRUE(d.isApprox(Matrix::Ones(2, 2), 0.0));
}

TEST(FusedCost, ShapeMismatchThrows) {
  const auto u2 = DiscreteDistribution::uniform(2);
  const auto u3 = DiscreteDistribution::uniform(3);
  EXPECT_THROW(build_fused_cost(CostMatrix(Matrix::Zero(2, 2)), CostMatrix(Matrix::Zero(2, 2)),
                                CostMatrix(Matrix::Zero(2, 2)), 0.5, u2, u3),
               InvalidInput);
  EXPECT_THROW(build_fused_cost(CostMatrix(Matrix::Zero(2, 2)), CostMatrix(Matrix::Zero(2, 2)),
                                CostMatrix(Matrix::Zero(2, 2)), 1.5, u2, u2),
               InvalidInput);
}

// The quadratic form equals the quartic-sum FGW for any coupling with
// marginals (a, b), uniform or not.
TEST(FgwObjective, MatchesQuarticSumOnFeasiblePlans) {
  RngStream rng(6, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(5));
    const int n = 1 + static_cast<int>(rng.uniform_index(5));
    const double beta = rng.uniform();
    const Matrix x = oracle::random_matrix(rng, k, 2);
    const Matrix y = oracle::random_matrix(rng, n, 2);
    Vector wa = (oracle::random_matrix(rng, k, 1).array().abs() + 0.1).matrix();
    Vector wb = (oracle::random_matrix(rng, n, 1).array().abs() + 0.1).matrix();
    wa /= wa.sum();
    wb /= wb.sum();
    const bool uniform = trial % 2 == 0;
    const DiscreteDistribution a = uniform ? DiscreteDistribution::uniform(k) : DiscreteDistribution(wa);
    const DiscreteDistribution b = uniform ? DiscreteDistribution::uniform(n) : DiscreteDistribution(wb);
    Matrix kernel = oracle::random_matrix(rng, k, n).cwiseAbs().array() + 0.1;
    const Matrix t = sinkhorn(a, b, kernel, {500, 1e-14}).plan.coupling();
    const Matrix dpq = oracle::sq_dist(x, y);
    const Matrix dp = oracle::sq_dist(x, x);
    const Matrix dq = oracle::sq_dist(y, y);
    const CostMatrix fused =
        build_fused_cost(CostMatrix(dpq), CostMatrix(dp), CostMatrix(dq), beta, a, b);
    const double got = fgw_objective(fused, CostMatrix(dp), CostMatrix(dq), t, beta);
    const double want = oracle::fgw_quartic(dpq, dp, dq, t, beta);
    EXPECT_NEAR(got, want, 1e-9 * (1.0 + std::abs(want)));
  }
}

TEST(SolveFgw, FeasibleMonotoneAndConsistent) {
  RngStream rng(7, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(7));
    const int n = 1 + static_cast<int>(rng.uniform_index(7));
    const double beta = rng.uniform();
    const Matrix x = oracle::random_matrix(rng, k, 2);
    const Matrix y = oracle::random_matrix(rng, n, 2);
    const auto a = DiscreteDistribution::uniform(k);
    const auto b = DiscreteDistribution::uniform(n);
    const CostMatrix dpq(oracle::sq_dist(x, y));
    const CostMatrix dp(oracle::sq_dist(x, x));
    const CostMatrix dq(oracle::sq_dist(y, y));
    const FgwResult r = solve_fgw_discrete(dpq, dp, dq, a, b, beta);
    EXPECT_LT(r.plan.residual(), 1e-6);
    EXPECT_GE(r.plan.coupling().minCoeff(), 0.0);
    ASSERT_FALSE(r.objective_trace.empty());
    for (std::size_t j = 1; j < r.objective_trace.size(); ++j) {
      EXPECT_LE(r.objective_trace[j], r.objective_trace[j - 1] + 1e-9);
    }
    EXPECT_LE(r.value, r.objective_trace.front() + 1e-9);
    const Matrix t0 = a.weights() * b.weights().transpose();
    EXPECT_NEAR(r.objective_trace.front(),
                oracle::fgw_quartic(dpq.entries(), dp.entries(), dq.entries(), t0, beta),
                1e-9 * (1.0 + std::abs(r.objective_trace.front())));
    EXPECT_NEAR(r.value,
                oracle::fgw_quartic(dpq.entries(), dp.entries(), dq.entries(),
                                    r.plan.coupling(), beta),
                1e-9 * (1.0 + std::abs(r.value)));
    EXPECT_LE(r.outer_iterations, 20);
  }
}

// For squared-Euclidean inputs the objective is concave over the polytope, so
// no feasible plan can beat the best permutation coupling.
TEST(SolveFgw, NeverBelowBestPermutation) {
  RngStream rng(8, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    const double beta = std::array<double, 5>{0.0, 0.1, 0.5, 0.9, 1.0}[trial % 5];
    const Matrix x = oracle::random_matrix(rng, n, 2);
    const Matrix y = oracle::random_matrix(rng, n, 2);
    const Matrix dpq = oracle::sq_dist(x, y);
    const Matrix dp = oracle::sq_dist(x, x);
    const Matrix dq = oracle::sq_dist(y, y);
    const auto u = DiscreteDistribution::uniform(n);
    const FgwResult r =
        solve_fgw_discrete(CostMatrix(dpq), CostMatrix(dp), CostMatrix(dq), u, u, beta);
    const double best = oracle::permutation_min(dpq, dp, dq, beta);
    EXPECT_GE(r.value, best - 1e-9 * (1.0 + best));
  }
}

// With beta = 0 the step size is fixed, so J proximal steps from the product
// plan collapse into one entropic problem with epsilon = alpha / J.
TEST(SolveFgw, BetaZeroIsOneEntropicProblem) {
  RngStream rng(9, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_index(4));
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    const Matrix x = oracle::random_matrix(rng, k, 2);
    const Matrix y = oracle::random_matrix(rng, n, 2);
    const Matrix dpq = oracle::sq_dist(x, y);
    const auto a = DiscreteDistribution::uniform(k);
    const auto b = DiscreteDistribution::uniform(n);
    FgwSolverOpts opts;
    opts.inner_sinkhorn_iters = 5000;
    opts.inner_tol = 1e-14;
    const FgwResult r = solve_fgw_discrete(CostMatrix(dpq), CostMatrix(oracle::sq_dist(x, x)),
                                           CostMatrix(oracle::sq_dist(y, y)), a, b, 0.0, opts);
    const double eps = opts.alpha_scale * dpq.maxCoeff() / opts.outer_iters;
    const Matrix t = oracle::log_sinkhorn(a.weights(), b.weights(), dpq, eps, 20000);
    EXPECT_EQ(r.outer_iterations, opts.outer_iters);
    EXPECT_NEAR(r.value, dpq.cwiseProduct(t).sum(), 1e-6);
  }
}

TEST(SolveFgw, IdentityWarmStartSelfDistanceIsZero) {
  RngStream rng(10, 1);
  FgwSolverOpts opts;
  opts.warm_start = WarmStart::identity;
  for (double beta : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    const PointCloud x = random_cloud(rng, 3, 2);
    EXPECT_LE(empirical_fgw(x, x, beta, opts).value, 1e-9) << "beta " << beta;
  }
}

TEST(SolveFgw, ShiftedCopiesHaveZeroGw) {
  RngStream rng(11, 1);
  const Matrix x = oracle::random_matrix(rng, 5, 2);
  Matrix shifted = x;
  shifted.col(0).array() += 3.0;
  shifted.col(1).array() -= 1.5;
  FgwSolverOpts id;
  id.warm_start = WarmStart::identity;
  EXPECT_LE(empirical_fgw(PointCloud(x), PointCloud(shifted), 1.0, id).value, 1e-6);
  // From the product start a translation changes nothing at beta = 1.
  const double self = empirical_fgw(PointCloud(x), PointCloud(x), 1.0).value;
  const double moved = empirical_fgw(PointCloud(x), PointCloud(shifted), 1.0).value;
  EXPECT_NEAR(self, moved, 1e-9);
}

TEST(SolveFgw, SingleAtomAndErrors) {
  const auto u1 = DiscreteDistribution::uniform(1);
  Matrix c(1, 1);
  c << 2.5;
  const FgwResult r = solve_fgw_discrete(CostMatrix(c), CostMatrix(Matrix::Zero(1, 1)),
                                         CostMatrix(Matrix::Zero(1, 1)), u1, u1, 0.3);
  EXPECT_NEAR(r.value, 0.7 * 2.5, 1e-15);
  FgwSolverOpts bad;
  bad.outer_iters = 0;
  EXPECT_THROW(solve_fgw_discrete(CostMatrix(c), CostMatrix(Matrix::Zero(1, 1)),
                                  CostMatrix(Matrix::Zero(1, 1)), u1, u1, 0.3, bad),
               InvalidInput);
  FgwSolverOpts id;
  id.warm_start = WarmStart::identity;
  EXPECT_THROW(solve_fgw_discrete(CostMatrix(Matrix::Zero(1, 2)), CostMatrix(Matrix::Zero(1, 1)),
                                  CostMatrix(Matrix::Zero(2, 2)), u1,
                                  DiscreteDistribution::uniform(2), 0.3, id),
               InvalidInput);
}

TEST(EmpiricalFgw, UnequalSizesAndMixedDimensions) {
  RngStream rng(12, 1);
  const PointCloud x = random_cloud(rng, 4, 2);
  const PointCloud y = random_cloud(rng, 6, 3);
  const FgwResult r = empirical_fgw(x, y, 1.0);
  EXPECT_EQ(r.plan.coupling().rows(), 4);
  EXPECT_EQ(r.plan.coupling().cols(), 6);
  EXPECT_LT(r.plan.residual(), 1e-6);
  EXPECT_THROW(empirical_fgw(x, y, 0.5), InvalidInput);
}
