#include "flatmin/solvers.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace flatmin;
using flatmin::testing::Gen;
using flatmin::testing::golden_min;
using flatmin::testing::rel_err;

namespace {

Matrix unscale(const RescalingPair& pair, const Matrix& x) {
  return pair.D1_inverse() * x * pair.D2_inverse();
}

SensingOperator row_operator() {
  Matrix a(1, 2);
  a << 2, 1;
  return columns_from_design(a);
}

// Basis pursuit by enumerating every basic feasible solution.
Vector basis_pursuit_oracle(const Matrix& a, const Vector& b) {
  const Index m = a.rows();
  const Index n = a.cols();
  std::vector<int> pick(static_cast<std::size_t>(n), 0);
  std::fill(pick.begin(), pick.begin() + m, 1);
  Vector best;
  double best_l1 = INFINITY;
  do {
    Matrix sub(m, m);
    std::vector<Index> cols;
    for (Index j = 0; j < n; ++j)
      if (pick[static_cast<std::size_t>(j)]) cols.push_back(j);
    for (Index c = 0; c < m; ++c) sub.col(c) = a.col(cols[static_cast<std::size_t>(c)]);
    const Vector s = sub.fullPivLu().solve(b);
    Vector x = Vector::Zero(n);
    for (Index c = 0; c < m; ++c) x(cols[static_cast<std::size_t>(c)]) = s(c);
    if ((a * x - b).norm() < 1e-9 && x.lpNorm<1>() < best_l1) {
      best_l1 = x.lpNorm<1>();
      best = x;
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

bool decreases_over_windows(const std::vector<double>& h) {
  for (std::size_t i = 1; i < h.size(); ++i)
    if (!(h[i] < h[i - 1])) return false;
  return true;
}

}  // namespace

TEST(SolverConfig, JsonRoundTripAndValidation) {
  SolverConfig c;
  c.rho = 3.0;
  c.max_iter = 17;
  const SolverConfig back = SolverConfig::from_json(c.to_json());
  EXPECT_EQ(back.rho, 3.0);
  EXPECT_EQ(back.max_iter, 17);
  EXPECT_THROW(SolverConfig::from_json({{"rhoo", 1.0}}), ParameterError);
  SolverConfig bad;
  bad.abs_tol = -1.0;
  EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(Equality, ZeroRightHandSideGivesZero) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 5, 5, 10, 1);
  const SolverReport rep = solve_nuclear_equality(equality_program(op, build_rescaling(op), Vector::Zero(10)));
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.X_hat.norm(), 0.0);
}

TEST(Equality, IdentityOperatorPinsTheSolution) {
  Gen g(2);
  const SensingOperator op = sample_ensemble(EnsembleKind::identity, 3, 4, 0, 1);
  const RescalingPair pair = build_rescaling(op);
  const Matrix m = g.matrix(3, 4);
  const SolverReport rep = solve_nuclear_equality(equality_program(op, pair, op.forward(m)));
  EXPECT_LE(rel_err(rep.X_hat, pair.D1 * m * pair.D2), 1e-12);
}

TEST(Equality, GaussianRankOneRecovery) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 8, 8, 48, 3);
  const GroundTruth t = sample_low_rank(8, 8, 1, true, 4);
  const RescalingPair pair = build_rescaling(op);
  const ConvexProgramSpec spec = equality_program(op, pair, op.forward(t.matrix));
  const SolverReport rep = solve_nuclear_equality(spec);
  EXPECT_TRUE(rep.converged);
  EXPECT_LE((unscale(pair, rep.X_hat) - t.matrix).norm(), 1e-6);
  EXPECT_LE(rep.feasibility, 1e-8);
  const CertificateReport cert = verify_optimality(spec, rep.X_hat);
  EXPECT_TRUE(cert.certifies());
  EXPECT_EQ(cert.rank, 1);
}

// Property: the program is absolutely homogeneous in b.
TEST(Equality, ScaleCovariance) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 6, 6, 24, seed);
    const RescalingPair pair = build_rescaling(op);
    const Vector b = op.forward(sample_low_rank(6, 6, 1, true, seed + 10).matrix);
    const Matrix base = solve_nuclear_equality(equality_program(op, pair, b)).X_hat;
    for (double c : {2.0, -3.0}) {
      const Matrix scaled = solve_nuclear_equality(equality_program(op, pair, c * b)).X_hat;
      EXPECT_LE(rel_err(scaled, c * base), 1e-8) << "c = " << c;
    }
  }
}

TEST(Equality, ResidualDecreasesOverWindows) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 10, 10, 60, 5);
  const RescalingPair pair = build_rescaling(op);
  const Vector b = op.forward(sample_low_rank(10, 10, 2, true, 6).matrix);
  const SolverReport rep = solve_nuclear_equality(equality_program(op, pair, b));
  ASSERT_GE(rep.residual_history.size(), 2u);
  EXPECT_TRUE(decreases_over_windows(rep.residual_history));
}

TEST(Equality, SingularRescalingIsRejected) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  const SensingOperator op = operator_from_matrices({a});
  EXPECT_THROW(solve_nuclear_equality(equality_program(op, build_rescaling(op), Vector::Ones(1))),
               PreconditionError);
}

TEST(Equality, IterationCapIsReportedNotThrown) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 8, 8, 30, 7);
  const Vector b = op.forward(sample_low_rank(8, 8, 2, true, 8).matrix);
  SolverConfig cfg;
  cfg.max_iter = 3;
  const SolverReport rep = solve_nuclear_equality(equality_program(op, build_rescaling(op), b), cfg);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 3);
}

TEST(RescaledSystem, RowsAreRescaledMeasurements) {
  const SensingOperator op = sample_ensemble(EnsembleKind::bilinear, 3, 4, 5, 9);
  const RescalingPair pair = build_rescaling(op);
  Gen g(10);
  const Vector b = g.vector(5);
  const RescaledSystem sys = rescaled_system(op, pair, b);
  ASSERT_EQ(sys.A.rows(), 5);
  for (Index i = 0; i < 5; ++i) {
    const Matrix want = pair.D1_inverse() * op.measurement(i) * pair.D2_inverse();
    EXPECT_LE((sys.A.row(i).transpose() - Eigen::Map<const Vector>(want.data(), 12)).norm(), 1e-12);
  }
}

TEST(RescaledSystem, UnobservedEntriesAreDropped) {
  Matrix mask = Matrix::Ones(3, 3);
  mask(1, 2) = 0.0;
  const SensingOperator op = completion_from_mask(mask);
  const RescaledSystem sys = rescaled_system(op, build_rescaling(op), Vector::Ones(9));
  EXPECT_EQ(sys.A.rows(), 8);
}

// Property: radius 0 is the equality program. Both solves run tighter than the
// defaults so the comparison measures the programs, not the stopping rule.
TEST(Ball, ZeroRadiusMatchesEquality) {
  SolverConfig cfg;
  cfg.abs_tol = cfg.rel_tol = 1e-11;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 5, 5, 15, seed);
    const RescalingPair pair = build_rescaling(op);
    const Vector b = op.forward(sample_low_rank(5, 5, 1, true, seed + 100).matrix);
    const Matrix eq = solve_nuclear_equality(equality_program(op, pair, b), cfg).X_hat;
    const Matrix ball = solve_nuclear_ball(ball_program(op, pair, b, 0.0), cfg).X_hat;
    EXPECT_LE((ball - eq).norm(), 1e-8 * std::max(1.0, eq.norm())) << "seed " << seed;
  }
}

TEST(Ball, LargeRadiusGivesZero) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 4, 4, 12, 2);
  const Vector b = op.forward(sample_low_rank(4, 4, 1, true, 3).matrix);
  const SolverReport rep = solve_nuclear_ball(ball_program(op, build_rescaling(op), b, b.norm()));
  EXPECT_EQ(rep.X_hat.norm(), 0.0);
  EXPECT_EQ(rep.objective, 0.0);
  EXPECT_THROW(ball_program(op, build_rescaling(op), b, -1.0), ParameterError);
}

TEST(Ball, NoisyErrorTracksRate) {
  const Index d = 12;
  const Index r = 2;
  const Index m = 300;
  const double sigma = 0.1;
  const double rate = sigma * std::sqrt(static_cast<double>(r * 2 * d) / static_cast<double>(m));
  int within = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, d, d, m, 1000 + trial);
    const RescalingPair pair = build_rescaling(op);
    const Matrix truth = sample_low_rank(d, d, r, true, 2000 + trial).matrix;
    Gen g(static_cast<unsigned>(3000 + trial));
    const Vector e = sigma * g.vector(m);
    const SolverReport rep = solve_nuclear_ball(ball_program(op, pair, op.forward(truth) + e, e.norm()));
    if ((unscale(pair, rep.X_hat) - truth).norm() <= 5.0 * rate) ++within;
  }
  EXPECT_GE(within, 90);
}

TEST(RobustPca, ZeroRadiusReturnsObservation) {
  Gen g(4);
  const Matrix y = g.matrix(6, 5);
  const SolverReport rep = solve_robust_pca(robust_pca_program(y, 0.0));
  EXPECT_LE((rep.X_hat - y).norm(), 1e-12);
}

TEST(RobustPca, RecoversSparseCorruption) {
  const Index d = 20;
  const GroundTruth t = sample_low_rank(d, d, 1, false, 5);
  Gen g(6);
  std::vector<Index> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
  Matrix s = Matrix::Zero(d, d);
  const double scale = t.matrix.cwiseAbs().maxCoeff();
  for (Index i = 0; i < d; ++i) s(i, perm[static_cast<std::size_t>(i)]) = (g.uniform() < 0.5 ? -1 : 1) * g.uniform(0.5, 1.0) * scale;
  const ConvexProgramSpec spec = robust_pca_program(t.matrix + s, s.cwiseAbs().sum());
  const SolverReport rep = solve_robust_pca(spec);
  EXPECT_LE((rep.X_hat - t.matrix).norm(), 1e-5);
  // X_hat is the low-rank iterate, one primal residual away from the feasible one.
  EXPECT_LE(rep.feasibility, 1e-7 * s.cwiseAbs().sum());
}

TEST(Symmetric, ZeroRightHandSideGivesZero) {
  const SensingOperator op = sample_ensemble(EnsembleKind::quadratic, 5, 5, 20, 1);
  const SolverReport rep = solve_nuclear_symmetric(symmetric_program(op, build_rescaling(op), Vector::Zero(20)));
  EXPECT_EQ(rep.X_hat.norm(), 0.0);
}

TEST(Symmetric, CovarianceCornerRecovery) {
  const SensingOperator op = sample_ensemble(EnsembleKind::quadratic, 10, 10, 80, 2);
  const GroundTruth t = sample_symmetric_signed(10, 1, 0, true, 3);
  const RescalingPair pair = build_rescaling(op);
  const ConvexProgramSpec spec = symmetric_program(op, pair, op.forward(t.matrix));
  const SolverReport rep = solve_nuclear_symmetric(spec);
  EXPECT_LE((rep.X_hat - pair.D1 * t.matrix * pair.D1).norm(), 1e-6);
  EXPECT_LE((rep.X_hat - rep.X_hat.transpose()).norm(), 1e-12);
  EXPECT_TRUE(verify_optimality(spec, rep.X_hat).certifies());
}

TEST(Symmetric, SplitRecoveryImpliesFullRecovery) {
  const SensingOperator q = sample_ensemble(EnsembleKind::quadratic, 8, 8, 160, 4);
  const SensingOperator s = split_bilinear(q);
  const GroundTruth t = sample_symmetric_signed(8, 1, 1, true, 5);
  const RescalingPair ps = build_rescaling(s);
  const Matrix split = unscale(ps, solve_nuclear_symmetric(symmetric_program(s, ps, s.forward(t.matrix))).X_hat);
  ASSERT_LE((split - t.matrix).norm(), 1e-6) << "split program should recover at this size";
  const RescalingPair pq = build_rescaling(q);
  const Matrix full = unscale(pq, solve_nuclear_symmetric(symmetric_program(q, pq, q.forward(t.matrix))).X_hat);
  EXPECT_LE((full - split).norm(), 1e-6);
}

TEST(Symmetric, RejectsAsymmetricKinds) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 4, 4, 10, 1);
  EXPECT_THROW(symmetric_program(op, build_rescaling(op), Vector::Zero(10)), ParameterError);
}

TEST(WeightedLp, WeightedL1HandExample) {
  const SensingOperator op = row_operator();
  const SolverReport rep = solve_weighted_lp(weighted_lp_program(op, Vector::Ones(2), Vector::Constant(1, 2.0), 1.0));
  EXPECT_NEAR(rep.X_hat(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(rep.X_hat(1, 0), 0.0, 1e-8);
  EXPECT_NEAR(rep.objective, 1.0, 1e-8);
}

TEST(WeightedLp, NearTwoApproachesLeastNorm) {
  const SolverReport rep =
      solve_weighted_lp(weighted_lp_program(row_operator(), Vector::Ones(2), Vector::Constant(1, 2.0), 1.999));
  EXPECT_NEAR(rep.X_hat(0, 0), 0.8, 1e-2);
  EXPECT_NEAR(rep.X_hat(1, 0), 0.4, 1e-2);
}

TEST(WeightedLp, DepthThreeMatchesLineSearch) {
  const SensingOperator op = row_operator();
  const RescalingPair pair = make_rescaling(Matrix::Identity(2, 2), Matrix::Identity(1, 1), RescalingShape::diagonal);
  const SolverReport rep = solve_weighted_lp(depth_program(op, pair, Vector::Constant(1, 2.0), 3));
  const double p = 4.0 / 3.0;
  auto f = [&](double x1) { return std::pow(std::abs(x1), p) + std::pow(std::abs(2.0 - 2.0 * x1), p); };
  const double x1 = golden_min(f, -1.0, 2.0);
  EXPECT_NEAR(rep.X_hat(0, 0), x1, 1e-6);
  EXPECT_NEAR(rep.X_hat(1, 0), 2.0 - 2.0 * x1, 1e-6);
}

TEST(WeightedLp, L1MatchesVertexEnumeration) {
  Gen g(8);
  for (int t = 0; t < 5; ++t) {
    const Matrix a = g.matrix(3, 6);
    Vector x0 = Vector::Zero(6);
    x0(g.integer(0, 5)) = g.normal();
    const Vector b = a * x0;
    const SolverReport rep = solve_weighted_lp(weighted_lp_program(columns_from_design(a), Vector::Ones(6), b, 1.0));
    EXPECT_LE((rep.X_hat.col(0) - basis_pursuit_oracle(a, b)).norm(), 1e-8);
  }
}

TEST(WeightedLp, RejectsShallowDepth) {
  const RescalingPair pair = make_rescaling(Matrix::Identity(2, 2), Matrix::Identity(1, 1), RescalingShape::diagonal);
  EXPECT_THROW(depth_program(row_operator(), pair, Vector::Constant(1, 2.0), 1), ParameterError);
  EXPECT_THROW(weighted_lp_program(row_operator(), Vector::Ones(2), Vector::Constant(1, 2.0), 2.0), ParameterError);
}

TEST(Certificate, TrivialZeroHasZeroGap) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 4, 4, 8, 1);
  const CertificateReport c = verify_optimality(equality_program(op, build_rescaling(op), Vector::Zero(8)), Matrix::Zero(4, 4));
  EXPECT_EQ(c.rank, 0);
  EXPECT_NEAR(c.duality_gap, 0.0, 1e-12);
}

TEST(Certificate, PerturbedSolutionFailsToCertify) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 8, 8, 48, 3);
  const GroundTruth t = sample_low_rank(8, 8, 1, true, 4);
  const RescalingPair pair = build_rescaling(op);
  const ConvexProgramSpec spec = equality_program(op, pair, op.forward(t.matrix));
  const Matrix good = solve_nuclear_equality(spec).X_hat;
  Gen g(9);
  const CertificateReport c = verify_optimality(spec, good + 0.1 * g.matrix(8, 8));
  EXPECT_GT(c.duality_gap, 1e-3);
  EXPECT_FALSE(c.certifies());
}

TEST(Certificate, GapIsNeverMeaningfullyNegative) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 6, 6, 20, seed);
    const RescalingPair pair = build_rescaling(op);
    const ConvexProgramSpec spec = equality_program(op, pair, op.forward(sample_low_rank(6, 6, 2, true, seed).matrix));
    const CertificateReport c = verify_optimality(spec, solve_nuclear_equality(spec).X_hat);
    EXPECT_GE(c.duality_gap, -1e-8);
  }
}
