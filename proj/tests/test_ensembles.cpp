#include "flatmin/ensembles.hpp"
#include "flatmin/rng.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace flatmin;
using flatmin::testing::Gen;

namespace {

const EnsembleKind kAllKinds[] = {EnsembleKind::gaussian,         EnsembleKind::bilinear,
                                  EnsembleKind::completion,       EnsembleKind::quadratic,
                                  EnsembleKind::hadamard_columns, EnsembleKind::identity};

SensingOperator sample_small(EnsembleKind kind, std::uint64_t seed) {
  switch (kind) {
    case EnsembleKind::completion: return sample_ensemble(kind, 4, 3, 0.6, seed);
    case EnsembleKind::quadratic: return sample_ensemble(kind, 4, 4, 9, seed);
    case EnsembleKind::hadamard_columns: return sample_ensemble(kind, 5, 1, 7, seed);
    default: return sample_ensemble(kind, 4, 3, 9, seed);
  }
}

// Forward map from explicitly formed measurement matrices.
Vector dense_forward(const SensingOperator& op, const Matrix& x) {
  const std::vector<Matrix> a = op.materialize();
  Vector y(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) y(static_cast<Index>(i)) = a[i].cwiseProduct(x).sum();
  return y;
}

}  // namespace

TEST(Rng, DeriveSeedDependsOnEveryCoordinate) {
  const auto a = derive_seed(1, {tag("x"), 0, 1});
  EXPECT_EQ(a, derive_seed(1, {tag("x"), 0, 1}));
  EXPECT_NE(a, derive_seed(2, {tag("x"), 0, 1}));
  EXPECT_NE(a, derive_seed(1, {tag("y"), 0, 1}));
  EXPECT_NE(a, derive_seed(1, {tag("x"), 1, 0}));
  EXPECT_NE(tag("phase"), tag("depth"));
}

TEST(Ensembles, KindNamesRoundTrip) {
  for (EnsembleKind k : kAllKinds) EXPECT_EQ(ensemble_kind_from_string(to_string(k)), k);
  EXPECT_EQ(ensemble_kind_from_string("split-bilinear"), EnsembleKind::split_bilinear);
  EXPECT_THROW(ensemble_kind_from_string("sparse"), ParameterError);
}

TEST(Ensembles, IdentityEnumeratesEntries) {
  const SensingOperator op = sample_ensemble(EnsembleKind::identity, 2, 2, 0, 1);
  EXPECT_EQ(op.m(), 4);
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  const Vector y = op.forward(x);
  EXPECT_EQ(y, Eigen::Map<const Vector>(x.data(), 4));
  EXPECT_DOUBLE_EQ(y.norm(), x.norm());
}

TEST(Ensembles, FullCompletionIsVec) {
  const SensingOperator op = sample_ensemble(EnsembleKind::completion, 3, 3, 1.0, 5);
  const auto& mask = std::get<SensingOperator::Mask>(op.payload()).mask;
  EXPECT_EQ(mask, Matrix::Ones(3, 3));
  Gen g(1);
  const Matrix x = g.matrix(3, 3);
  EXPECT_EQ(op.forward(x), Eigen::Map<const Vector>(x.data(), 9));
}

TEST(Ensembles, GaussianEntryMoments) {
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 10, 10, 200, 7);
  const Matrix& rows = std::get<SensingOperator::DenseRows>(op.payload()).rows;
  const double n = static_cast<double>(rows.size());
  const double mean = rows.mean();
  const double var = (rows.array() - mean).square().sum() / (n - 1.0);
  EXPECT_LE(std::abs(mean), 3.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Ensembles, BilinearCoordinatePick) {
  Matrix left = Matrix::Zero(3, 1);
  Matrix right = Matrix::Zero(3, 1);
  left(0, 0) = 1.0;
  right(1, 0) = 1.0;
  const SensingOperator op = bilinear_from_vectors(left, right);
  Gen g(2);
  const Matrix x = g.matrix(3, 3);
  EXPECT_DOUBLE_EQ(op.forward(x)(0), x(0, 1));
}

TEST(Ensembles, FactoredForwardMatchesDense) {
  Gen g(3);
  for (EnsembleKind kind : kAllKinds) {
    const SensingOperator op = sample_small(kind, 21);
    const Matrix x = g.matrix(op.d1(), op.d2());
    const Vector want = dense_forward(op, x);
    EXPECT_LE((op.forward(x) - want).norm(), 1e-12 * std::max(1.0, want.norm())) << to_string(kind);
  }
}

TEST(Ensembles, AdjointIdentityOnRandomProbes) {
  Gen g(4);
  std::vector<SensingOperator> ops;
  for (EnsembleKind kind : kAllKinds) ops.push_back(sample_small(kind, 31));
  ops.push_back(split_bilinear(sample_ensemble(EnsembleKind::quadratic, 4, 4, 10, 3)));
  for (const auto& op : ops) {
    for (int t = 0; t < 50; ++t) {
      const Matrix x = g.matrix(op.d1(), op.d2());
      const Vector y = g.vector(op.m());
      const double lhs = op.forward(x).dot(y);
      const double rhs = x.cwiseProduct(op.adjoint(y)).sum();
      EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs))) << to_string(op.kind());
    }
  }
}

TEST(Ensembles, CompletionAdjointForwardIsMask) {
  const SensingOperator op = sample_ensemble(EnsembleKind::completion, 5, 4, 0.5, 9);
  const auto& mask = std::get<SensingOperator::Mask>(op.payload()).mask;
  Gen g(5);
  const Matrix x = g.matrix(5, 4);
  EXPECT_EQ(op.adjoint(op.forward(x)), mask.cwiseProduct(x));
}

TEST(Ensembles, SymmetricKindsHaveSymmetricMeasurements) {
  const SensingOperator q = sample_ensemble(EnsembleKind::quadratic, 4, 4, 6, 1);
  const SensingOperator s = split_bilinear(q);
  for (const auto* op : {&q, &s}) {
    EXPECT_TRUE(op->symmetric_measurements());
    for (const Matrix& a : op->materialize()) EXPECT_LE((a - a.transpose()).norm(), 1e-15);
  }
  EXPECT_THROW(sample_ensemble(EnsembleKind::quadratic, 3, 4, 6, 1), ShapeError);
}

TEST(Ensembles, DeterministicUnderSeed) {
  for (EnsembleKind kind : kAllKinds) {
    const SensingOperator a = sample_small(kind, 77);
    const SensingOperator b = sample_small(kind, 77);
    const auto ma = a.materialize();
    const auto mb = b.materialize();
    ASSERT_EQ(ma.size(), mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_EQ(ma[i], mb[i]);
  }
  const auto x = sample_small(EnsembleKind::gaussian, 1).materialize();
  const auto y = sample_small(EnsembleKind::gaussian, 2).materialize();
  EXPECT_NE(x[0], y[0]);
}

TEST(Ensembles, RejectsBadParameters) {
  EXPECT_THROW(sample_ensemble(EnsembleKind::completion, 3, 3, 0.0, 1), ParameterError);
  EXPECT_THROW(sample_ensemble(EnsembleKind::completion, 3, 3, 1.5, 1), ParameterError);
  EXPECT_THROW(sample_ensemble(EnsembleKind::gaussian, 0, 3, 5, 1), ParameterError);
  EXPECT_THROW(sample_ensemble(EnsembleKind::gaussian, 3, 3, 0, 1), ParameterError);
  const SensingOperator op = sample_ensemble(EnsembleKind::gaussian, 3, 3, 5, 1);
  EXPECT_THROW(op.forward(Matrix::Zero(3, 2)), ShapeError);
  EXPECT_THROW(op.adjoint(Vector::Zero(4)), ShapeError);
}

TEST(SplitBilinear, HandComputedValue) {
  Matrix features = Matrix::Identity(2, 2);  // x1 = e1, x2 = e2
  const SensingOperator split = split_bilinear(quadratic_from_features(features));
  EXPECT_EQ(split.m(), 1);
  EXPECT_DOUBLE_EQ(split.forward(Matrix::Identity(2, 2))(0), 0.0);
}

TEST(SplitBilinear, PairIdentityOnSymmetricInputs) {
  const SensingOperator q = sample_ensemble(EnsembleKind::quadratic, 5, 5, 10, 4);
  const SensingOperator s = split_bilinear(q);
  ASSERT_EQ(s.m(), 5);
  Gen g(6);
  const Matrix z = g.symmetric(5);
  const Vector yq = q.forward(z);
  const Vector ys = s.forward(z);
  for (Index i = 0; i < s.m(); ++i) EXPECT_NEAR(ys(i), 0.5 * (yq(2 * i) - yq(2 * i + 1)), 1e-12);
}

TEST(SplitBilinear, OddTailDroppedAndFlagged) {
  const SensingOperator s = split_bilinear(sample_ensemble(EnsembleKind::quadratic, 3, 3, 7, 4));
  EXPECT_EQ(s.m(), 3);
  EXPECT_TRUE(s.provenance().dropped_odd_tail);
  EXPECT_THROW(split_bilinear(sample_ensemble(EnsembleKind::gaussian, 3, 3, 4, 1)), ParameterError);
}

TEST(SplitBilinear, IgnoresSkewPart) {
  const SensingOperator s = split_bilinear(sample_ensemble(EnsembleKind::quadratic, 4, 4, 8, 8));
  Gen g(9);
  const Matrix z = g.matrix(4, 4);
  const Matrix skew = 0.5 * (z - z.transpose());
  EXPECT_LE(s.forward(skew).norm(), 1e-12);
  EXPECT_LE((s.forward(z) - s.forward(symmetrize(z))).norm(), 1e-12);
}

TEST(Ensembles, DescriptorRoundTrip) {
  for (EnsembleKind kind : kAllKinds) {
    const SensingOperator a = sample_small(kind, 99);
    const SensingOperator b = SensingOperator::from_descriptor(a.descriptor());
    EXPECT_EQ(a.kind(), b.kind());
    const auto ma = a.materialize();
    const auto mb = b.materialize();
    ASSERT_EQ(ma.size(), mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_EQ(ma[i], mb[i]);
  }
  const SensingOperator s = split_bilinear(sample_ensemble(EnsembleKind::quadratic, 3, 3, 6, 2));
  const SensingOperator t = SensingOperator::from_descriptor(s.descriptor());
  EXPECT_EQ(t.kind(), EnsembleKind::split_bilinear);
  EXPECT_EQ(s.materialize()[1], t.materialize()[1]);
}

TEST(GroundTruth, LowRankHasExactRankAndUnitNorm) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const GroundTruth t = sample_low_rank(8, 6, 2, true, seed);
    EXPECT_NEAR(t.matrix.norm(), 1.0, 1e-12);
    EXPECT_EQ(svd(t.matrix).numerical_rank(), 2);
    EXPECT_LE((t.left_factor * t.right_factor.transpose() - t.matrix).norm(), 1e-12);
  }
}

TEST(GroundTruth, SymmetricSignedHasSignedInertia) {
  const GroundTruth t = sample_symmetric_signed(7, 2, 1, true, 3);
  EXPECT_NEAR(t.matrix.norm(), 1.0, 1e-12);
  const EigenDecomposition e = symmetric_eigen(t.matrix);
  const double tol = 1e-10;
  EXPECT_EQ((e.eigenvalues.array() > tol).count(), 2);
  EXPECT_EQ((e.eigenvalues.array() < -tol).count(), 1);
  const Matrix& u = t.left_factor;
  EXPECT_LE((u * t.output_weights.asDiagonal() * u.transpose() - t.matrix).norm(), 1e-12);
}

TEST(GroundTruth, LeadingOnes) {
  const GroundTruth t = leading_ones_vector(6, 2);
  Vector want = Vector::Zero(6);
  want.head(2).setOnes();
  EXPECT_EQ(t.matrix.col(0), want);
  EXPECT_EQ(t.rank, 2);
}
