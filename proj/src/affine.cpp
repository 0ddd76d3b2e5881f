#include "flatmin/affine.hpp"

#include <Eigen/QR>

#include <cmath>

namespace flatmin {
namespace {

// Returns true and fills coords/values if each nonzero row of a has exactly one
// nonzero, in pairwise distinct columns.
bool detect_coordinates(const Matrix& a, const Vector& b, std::vector<Index>& coords,
                        Vector& values, bool& inconsistent) {
  std::vector<char> used(static_cast<std::size_t>(a.cols()), 0);
  coords.clear();
  std::vector<double> vals;
  inconsistent = false;
  for (Index i = 0; i < a.rows(); ++i) {
    Index col = -1;
    for (Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) != 0.0) {
        if (col >= 0) return false;
        col = j;
      }
    }
    if (col < 0) {
      if (b(i) != 0.0) inconsistent = true;
      continue;
    }
    if (used[static_cast<std::size_t>(col)]) return false;
    used[static_cast<std::size_t>(col)] = 1;
    coords.push_back(col);
    vals.push_back(b(i) / a(i, col));
  }
  values = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
  return true;
}

}  // namespace

AffineProjector::AffineProjector(const Matrix& a, const Vector& b, double rank_tol) {
  if (a.rows() != b.size()) throw ShapeError("AffineProjector: rows of A != length of b");
  require_finite(a, "AffineProjector");
  require_finite(b, "AffineProjector");
  n_ = a.cols();
  rows_ = a.rows();

  Vector values;
  if (detect_coordinates(a, b, coords_, values, inconsistent_)) {
    rank_ = static_cast<Index>(coords_.size());
    anchor_ = Vector::Zero(n_);
    for (std::size_t i = 0; i < coords_.size(); ++i) anchor_(coords_[i]) = values(static_cast<Index>(i));
    return;
  }

  const Spectrum dec = svd(a);
  const Vector& s = dec.singular_values;
  const double smax = s.size() ? s(0) : 0.0;
  rank_ = 0;
  while (rank_ < s.size() && s(rank_) > rank_tol * smax) ++rank_;
  const Matrix vr = dec.right_vectors.leftCols(rank_);
  const Vector coeff = (dec.left_vectors.leftCols(rank_).transpose() * b).cwiseQuotient(s.head(rank_));
  anchor_ = vr * coeff;
  const double bnorm = b.norm();
  inconsistent_ = (a * anchor_ - b).norm() > 1e-8 * std::max(1.0, bnorm);
  // Keep whichever basis is thinner; the null basis completes vr via QR.
  use_null_ = (n_ - rank_) < rank_;
  if (use_null_) {
    const Matrix q = Eigen::HouseholderQR<Matrix>(vr).householderQ();
    basis_ = q.rightCols(n_ - rank_);
  } else {
    basis_ = vr;
  }
}

Vector AffineProjector::project(const Vector& x) const {
  if (x.size() != n_) throw ShapeError("AffineProjector::project: length mismatch");
  if (!coords_.empty() || rank_ == 0) {
    Vector out = x;
    for (std::size_t i = 0; i < coords_.size(); ++i) out(coords_[i]) = anchor_(coords_[i]);
    return out;
  }
  if (use_null_) {
    if (basis_.cols() == 0) return anchor_;
    return anchor_ + basis_ * (basis_.transpose() * x);
  }
  return anchor_ + x - basis_ * (basis_.transpose() * x);
}

AffineProjector AffineProjector::scaled(double c) const {
  AffineProjector out = *this;
  out.anchor_ *= c;
  return out;
}

}  // namespace flatmin
