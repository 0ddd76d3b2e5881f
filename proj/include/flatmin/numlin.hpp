#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flatmin {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Invalid numeric argument (non-finite input, out-of-range parameter).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Incompatible dimensions between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Relative threshold below which singular values count as zero.
inline constexpr double kRankTolerance = 1e-8;

/// Thin singular value decomposition X = U diag(sigma) V^T.
///
/// Singular values are sorted descending and nonnegative; U is d1 x l and V is
/// d2 x l with l = min(d1, d2).
struct Spectrum {
  Vector singular_values;
  Matrix left_vectors;
  Matrix right_vectors;

  /// Number of singular values above rel_tol * sigma_max.
  Index numerical_rank(double rel_tol = kRankTolerance) const;
  Matrix reconstruct() const;
};

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Matrix reconstruct() const;
};

Spectrum svd(const Matrix& x);

/// Eigendecomposition of (X + X^T)/2.
EigenDecomposition symmetric_eigen(const Matrix& x);

/// Square root of a symmetric PSD matrix. Eigenvalues below
/// rel_clamp * lambda_max (including negative round-off) are set to zero.
Matrix psd_sqrt(const Matrix& x, double rel_clamp = 1e-12);

double nuclear_norm(const Matrix& x);
double operator_norm(const Matrix& x);
Matrix symmetrize(const Matrix& x);

/// Singular value thresholding: the proximal map of tau * nuclear norm.
Matrix svt(const Matrix& x, double tau);

/// Euclidean projection onto {Z : sum |Z_ij| <= radius}.
Matrix project_l1_ball(const Matrix& v, double radius);

/// Minimizer of 0.5 (t - v)^2 + step * weight * |t|^p for p in [1, 2).
double prox_power(double v, double weight, double p, double step);

void require_finite(const Matrix& x, const char* what);

}  // namespace flatmin
