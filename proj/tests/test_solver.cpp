#include "dlinf/solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dlinf;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Problem random_problem(Eigen::Index n, Eigen::Index N, double lambda, std::uint64_t seed) {
  auto inst = oracle::random_instance(n, N, seed);
  return Problem{inst.D, inst.y, lambda, 0.6};
}

}  // namespace

TEST(BoxProject, ClipsToScalarBound) {
  EXPECT_EQ(box_project(vec({0.5, -2, 3}), 1.0), vec({0.5, -1, 1}));
  EXPECT_EQ(box_project(vec({2, -2}), 2.0), vec({2, -2}));
}

TEST(BoxProject, MatchesScalarLoopOnGaussianDraws) {
  Rng rng(42);
  const Vec u = gaussian_vector(100, rng);
  const Vec out = box_project(u, 0.7);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double ref = u[i];
    if (ref > 0.7) ref = 0.7;
    if (ref < -0.7) ref = -0.7;
    EXPECT_EQ(out[i], ref);
  }
}

TEST(BoxProject, IdempotentAndBoundedForPerElementBounds) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec u = gaussian_vector(20, rng, 3.0);
    const Vec lambda = gaussian_vector(20, rng).cwiseAbs().array() + 0.01;
    const Vec once = box_project(u, lambda);
    EXPECT_EQ(box_project(once, lambda), once);
    EXPECT_LE(once.lpNorm<Eigen::Infinity>(), lambda.maxCoeff());
    EXPECT_TRUE((once.array().abs() <= lambda.array()).all());
  }
}

TEST(BoxProject, RejectsNonpositiveBound) {
  EXPECT_THROW(box_project(vec({1.0}), 0.0), std::invalid_argument);
  EXPECT_THROW(box_project(vec({1.0, 2.0}), vec({1.0, -1.0})), std::invalid_argument);
}

TEST(Objective, DirectEvaluations) {
  Problem p{Mat::Identity(3, 3), vec({1, 2, 3}), 10.0, 0.6};
  EXPECT_EQ(objective(p, vec({1, 2, 3})), 0.0);
  Problem q{Mat::Identity(2, 2), vec({1, 0}), 1.0, 0.6};
  EXPECT_DOUBLE_EQ(objective(q, vec({0, 0})), 0.5);
}

TEST(Objective, MatchesNaiveLoop) {
  Rng rng(7);
  const Mat D = gaussian_matrix(4, 2, rng);
  const Vec x = gaussian_vector(2, rng);
  const Vec y = gaussian_vector(4, rng);
  Problem p{D, y, 1.0, 0.6};
  EXPECT_NEAR(objective(p, x), oracle::naive_objective(D, x, y), 1e-12);
}

TEST(Objective, RejectsDimensionMismatch) {
  Problem p{Mat::Identity(2, 2), vec({1, 0}), 1.0, 0.6};
  EXPECT_THROW(objective(p, vec({1, 2, 3})), std::invalid_argument);
}

TEST(AdmmStep, IdentityDictionaryClosedForm) {
  Problem p{Mat::Identity(2, 2), vec({3, 0.2}), 1.0, 0.6};
  const AdmmSystem sys(p.dictionary, p.beta);
  const AdmmState s = admm_step(p, AdmmState::zeros(2), sys);
  EXPECT_NEAR(s.x[0], 1.875, 1e-15);
  EXPECT_NEAR(s.x[1], 0.125, 1e-15);
  EXPECT_EQ(s.z[0], 1.0);
  EXPECT_NEAR(s.z[1], 0.125, 1e-15);
  EXPECT_NEAR(s.p[0], -0.525, 1e-15);
  EXPECT_NEAR(s.p[1], 0.0, 1e-15);
  EXPECT_EQ(s.t, 1u);
}

TEST(AdmmStep, LeastSquaresInsideBoxIsFixedPoint) {
  Problem p = random_problem(6, 3, 1.0, 3);
  const Vec x_ls = least_squares(p.dictionary, p.signal);
  p.lambda = 2.0 * x_ls.lpNorm<Eigen::Infinity>();
  const AdmmSystem sys(p.dictionary, p.beta);
  AdmmState s{x_ls, x_ls, Vec::Zero(3), 0};
  const AdmmState next = admm_step(p, s, sys);
  EXPECT_LE((next.x - s.x).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LE((next.z - s.z).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LE((next.p - s.p).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(AdmmStep, KktPointWithActiveBoundsIsFixedPoint) {
  // Build the optimality conditions by hand: x* with two coordinates on the
  // box, multiplier p = D^T (D x* - y) pointing outward there and zero inside.
  Rng rng(21);
  const Mat D = gaussian_matrix(8, 4, rng);
  const double lambda = 0.5;
  const Vec x = vec({0.5, -0.5, 0.1, -0.2});
  const Vec p = vec({-0.8, 0.3, 0.0, 0.0});
  const Vec r = D * (D.transpose() * D).ldlt().solve(p);  // D^T r = p
  Problem prob{D, D * x - r, lambda, 0.6};
  const AdmmSystem sys(D, 0.6);
  const AdmmState s{x, x, p, 0};
  const AdmmState next = admm_step(prob, s, sys);
  EXPECT_LE((next.x - s.x).lpNorm<Eigen::Infinity>(), 1e-10);
  EXPECT_LE((next.z - s.z).lpNorm<Eigen::Infinity>(), 1e-10);
  EXPECT_LE((next.p - s.p).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(AdmmStep, TwoHundredStepsReachOracle) {
  const Problem p = random_problem(6, 3, 0.5, 11);
  const AdmmSystem sys(p.dictionary, p.beta);
  AdmmState s = AdmmState::zeros(3);
  for (int i = 0; i < 200; ++i) s = admm_step(p, s, sys);
  const SolverResult ref = oracle_solve(p);
  EXPECT_LE((s.z - ref.x_star).norm(), 1e-6);
}

TEST(AdmmStep, RejectsMismatchedFactorization) {
  const Problem p = random_problem(6, 3, 0.5, 1);
  const AdmmSystem other(p.dictionary, 0.9);
  EXPECT_THROW(admm_step(p, AdmmState::zeros(3), other), std::invalid_argument);
  const AdmmSystem different_d(random_problem(6, 3, 0.5, 2).dictionary, 0.6);
  EXPECT_THROW(admm_step(p, AdmmState::zeros(3), different_d), std::invalid_argument);
}

TEST(AdmmSolve, SeparableProblemIsBoxProjectionOfSignal) {
  const Problem p{Mat::Identity(2, 2), vec({3, 0.2}), 1.0, 0.6};
  const AdmmRun run = admm_solve(p);
  EXPECT_TRUE(run.result.converged);
  EXPECT_NEAR(run.result.x_star[0], 1.0, 1e-6);
  EXPECT_NEAR(run.result.x_star[1], 0.2, 1e-6);
}

TEST(AdmmSolve, InactiveConstraintGivesLeastSquares) {
  const Problem p = random_problem(5, 3, 1e6, 17);
  const AdmmRun run = admm_solve(p);
  EXPECT_LE((run.result.x_star - least_squares(p.dictionary, p.signal)).norm(), 1e-6);
}

TEST(AdmmSolve, AgreesWithOracleOnTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Problem p = random_problem(8, 4, 0.5, seed);
    const SolverResult admm = admm_solve(p).result;
    const SolverResult ref = oracle_solve(p);
    EXPECT_TRUE(admm.converged) << "seed " << seed;
    EXPECT_TRUE(ref.converged) << "seed " << seed;
    EXPECT_NEAR(admm.objective, ref.objective, 1e-8) << "seed " << seed;
  }
}

TEST(AdmmSolve, ResultFieldsAreConsistent) {
  const Problem p = random_problem(8, 4, 0.3, 4);
  const AdmmRun run = admm_solve(p);
  EXPECT_LE(run.result.x_star.lpNorm<Eigen::Infinity>(), p.lambda);
  EXPECT_EQ(run.result.objective, objective(p, run.result.x_star));
  EXPECT_EQ(run.z_trace.size(), run.result.iterations);
  EXPECT_EQ(run.p_trace.size(), run.result.iterations);
  EXPECT_EQ(run.z_trace.back(), run.result.x_star);
}

TEST(AdmmSolve, IterationCapReportsNotConverged) {
  const Problem p = random_problem(8, 4, 0.3, 4);
  AdmmOptions opts;
  opts.max_iter = 2;
  const AdmmRun run = admm_solve(p, opts);
  EXPECT_FALSE(run.result.converged);
  EXPECT_EQ(run.result.iterations, 2u);
  EXPECT_LE(run.result.x_star.lpNorm<Eigen::Infinity>(), p.lambda);
}

TEST(AdmmSolve, RejectsBadArguments) {
  Problem p = random_problem(8, 4, 0.3, 4);
  AdmmOptions opts;
  opts.max_iter = 0;
  EXPECT_THROW(admm_solve(p, opts), std::invalid_argument);
  opts = {};
  opts.tol = 0.0;
  EXPECT_THROW(admm_solve(p, opts), std::invalid_argument);
  p.dictionary.col(2).setZero();
  EXPECT_THROW(admm_solve(p), std::invalid_argument);
  p = random_problem(8, 4, -1.0, 4);
  EXPECT_THROW(admm_solve(p), std::invalid_argument);
}

TEST(AdmmInvariants, FeasibleAtEveryIterate) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Problem p = random_problem(10, 5, 0.2, 100 + seed);
    AdmmOptions opts;
    opts.max_iter = 300;
    const AdmmRun run = admm_solve(p, opts);
    for (const Vec& z : run.z_trace) EXPECT_LE(z.lpNorm<Eigen::Infinity>(), p.lambda);
  }
}

TEST(AdmmInvariants, PrimalResidualShrinksFromTenToTwoHundred) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Problem p = random_problem(8, 4, 0.5, 200 + seed);
    const AdmmSystem sys(p.dictionary, p.beta);
    AdmmState s = AdmmState::zeros(4);
    double r10 = 0.0;
    for (int t = 1; t <= 200; ++t) {
      s = admm_step(p, s, sys);
      if (t == 10) r10 = (s.z - s.x).norm();
    }
    EXPECT_LE((s.z - s.x).norm(), r10) << "seed " << seed;
  }
}

TEST(AdmmInvariants, SaturationGrowsAsBoundTightens) {
  // Tall Gaussian D is close to orthogonal, so only the largest coordinates
  // clip at 0.8 ||x_LS||_inf; half or more saturate once lambda is small.
  Rng rng(2024);
  const Mat D = gaussian_matrix(64, 16, rng);
  const Vec y = gaussian_vector(64, rng);
  const double peak = least_squares(D, y).lpNorm<Eigen::Infinity>();
  Eigen::Index previous = 0;
  for (double frac : {0.8, 0.5, 0.3, 0.2, 0.1}) {
    const double lambda = frac * peak;
    const Vec x = admm_solve(Problem{D, y, lambda, 0.6}).result.x_star;
    const auto saturated = (x.array().abs() >= 0.95 * lambda).count();
    EXPECT_GE(saturated, std::max<Eigen::Index>(previous, 1)) << "lambda fraction " << frac;
    previous = saturated;
  }
  EXPECT_GE(previous, 8);
}

TEST(OracleSolve, AnalyticCases) {
  const Problem p{Mat::Identity(2, 2), vec({3, 0.2}), 1.0, 0.6};
  const SolverResult r = oracle_solve(p);
  EXPECT_NEAR(r.x_star[0], 1.0, 1e-9);
  EXPECT_NEAR(r.x_star[1], 0.2, 1e-9);

  const Problem q = random_problem(7, 3, 1e6, 9);
  EXPECT_LE((oracle_solve(q).x_star - least_squares(q.dictionary, q.signal)).norm(), 1e-8);
}

TEST(OracleSolve, RejectsDimensionMismatch) {
  Problem p{Mat::Identity(2, 2), vec({3, 0.2, 1}), 1.0, 0.6};
  EXPECT_THROW(oracle_solve(p), std::invalid_argument);
}
