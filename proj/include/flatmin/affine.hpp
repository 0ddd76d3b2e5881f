#pragma once

#include "flatmin/numlin.hpp"

#include <vector>

namespace flatmin {

/// Euclidean projection onto {z : A z = b} for a dense m x n matrix A.
///
/// Built once from an SVD of A. When every row has a single nonzero in a
/// distinct column (matrix completion after rescaling) the projection just
/// overwrites those coordinates.
class AffineProjector {
 public:
  AffineProjector(const Matrix& a, const Vector& b, double rank_tol = 1e-10);

  Vector project(const Vector& v) const;
  /// Least-norm point A^+ b of the affine set.
  const Vector& anchor() const { return anchor_; }

  Index rank() const { return rank_; }
  Index dimension() const { return n_; }
  bool rank_deficient() const { return rank_ < rows_; }
  /// b is not in the range of A; the set is replaced by {z : A z = P_range(b)}.
  bool inconsistent() const { return inconsistent_; }
  bool coordinate_form() const { return !coords_.empty() || (rank_ == 0 && rows_ > 0); }

  /// Same constraint matrix with right-hand side scaled by c (reuses the factorization).
  AffineProjector scaled(double c) const;

 private:
  AffineProjector() = default;

  Index n_ = 0;
  Index rows_ = 0;
  Index rank_ = 0;
  bool inconsistent_ = false;
  bool use_null_ = false;
  Matrix basis_;  // row-space basis (n x rank) or null-space basis (n x (n - rank))
  Vector anchor_;
  std::vector<Index> coords_;
};

}  // namespace flatmin
