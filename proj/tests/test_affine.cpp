#include "flatmin/affine.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace flatmin;
using flatmin::testing::Gen;

namespace {

// Projection via the normal equations, valid when A has full row rank.
Vector normal_equation_projection(const Matrix& a, const Vector& b, const Vector& v) {
  const Matrix gram = a * a.transpose();
  return v - a.transpose() * gram.ldlt().solve(a * v - b);
}

}  // namespace

TEST(Affine, FullRowRankMatchesNormalEquations) {
  Gen g(1);
  for (Index m : {3, 10, 19}) {
    const Matrix a = g.matrix(m, 20);
    const Vector b = g.vector(m);
    const AffineProjector proj(a, b);
    EXPECT_FALSE(proj.rank_deficient());
    for (int t = 0; t < 5; ++t) {
      const Vector v = g.vector(20);
      const Vector p = proj.project(v);
      EXPECT_LE((p - normal_equation_projection(a, b, v)).norm(), 1e-10 * (1 + v.norm()));
      EXPECT_LE((a * p - b).norm(), 1e-10);
      EXPECT_LE((proj.project(p) - p).norm(), 1e-12 * (1 + p.norm()));
    }
    const Vector least = a.transpose() * (a * a.transpose()).ldlt().solve(b);
    EXPECT_LE((proj.anchor() - least).norm(), 1e-10);
  }
}

TEST(Affine, TallSystemUsesNullSpace) {
  // n - rank is small: the projector keeps a null-space basis.
  Gen g(2);
  const Matrix a = g.matrix(18, 20);
  const Vector b = g.vector(18);
  const AffineProjector proj(a, b);
  const Vector v = g.vector(20);
  EXPECT_LE((proj.project(v) - normal_equation_projection(a, b, v)).norm(), 1e-9);
}

TEST(Affine, RankDeficientConsistentSystem) {
  Gen g(3);
  const Matrix base = g.matrix(3, 8);
  Matrix a(5, 8);
  a << base, base.row(0) + base.row(1), 2.0 * base.row(2);
  const Vector x0 = g.vector(8);
  const AffineProjector proj(a, a * x0);
  EXPECT_EQ(proj.rank(), 3);
  EXPECT_TRUE(proj.rank_deficient());
  EXPECT_FALSE(proj.inconsistent());
  const Vector p = proj.project(g.vector(8));
  EXPECT_LE((a * p - a * x0).norm(), 1e-10);
}

TEST(Affine, InconsistentRightHandSideIsFlagged) {
  Matrix a(2, 3);
  a << 1, 0, 0, 1, 0, 0;
  const Vector b = (Vector(2) << 1, 3).finished();
  const AffineProjector proj(a, b);
  EXPECT_TRUE(proj.inconsistent());
  // Projects onto x0 = 2, the least-squares compromise.
  EXPECT_NEAR(proj.project(Vector::Zero(3))(0), 2.0, 1e-12);
}

TEST(Affine, CoordinateRowsOverwriteEntries) {
  Matrix a = Matrix::Zero(2, 4);
  a(0, 1) = 2.0;
  a(1, 3) = -0.5;
  const Vector b = (Vector(2) << 4.0, 1.0).finished();
  const AffineProjector proj(a, b);
  EXPECT_TRUE(proj.coordinate_form());
  const Vector v = (Vector(4) << 7, 8, 9, 10).finished();
  const Vector want = (Vector(4) << 7, 2, 9, -2).finished();
  EXPECT_LE((proj.project(v) - want).norm(), 1e-15);
}

TEST(Affine, ScaledReusesFactorization) {
  Gen g(4);
  const Matrix a = g.matrix(4, 9);
  const Vector b = g.vector(4);
  const AffineProjector proj(a, b);
  const AffineProjector twice = proj.scaled(-3.0);
  const Vector v = g.vector(9);
  EXPECT_LE((twice.project(v) - AffineProjector(a, -3.0 * b).project(v)).norm(), 1e-10);
}

TEST(Affine, RejectsBadShapes) {
  EXPECT_THROW(AffineProjector(Matrix::Zero(2, 3), Vector::Zero(3)), ShapeError);
  const AffineProjector proj(Matrix::Identity(2, 3), Vector::Zero(2));
  EXPECT_THROW(proj.project(Vector::Zero(2)), ShapeError);
}
