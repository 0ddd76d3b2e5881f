#include "flatmin/numlin.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace flatmin {

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) {
    throw ParameterError(std::string(what) + ": non-finite entries");
  }
}

Index Spectrum::numerical_rank(double rel_tol) const {
  if (singular_values.size() == 0) return 0;
  const double smax = singular_values(0);
  if (smax <= 0.0) return 0;
  Index r = 0;
  while (r < singular_values.size() && singular_values(r) > rel_tol * smax) ++r;
  return r;
}

Matrix Spectrum::reconstruct() const {
  return left_vectors * singular_values.asDiagonal() * right_vectors.transpose();
}

Matrix EigenDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

Spectrum svd(const Matrix& x) {
  require_finite(x, "svd");
  Spectrum s;
  if (x.size() == 0) {
    s.singular_values = Vector(0);
    s.left_vectors = Matrix(x.rows(), 0);
    s.right_vectors = Matrix(x.cols(), 0);
    return s;
  }
  // BDCSVD falls back to Jacobi below 16 anyway; above that it is about twice as fast.
  if (std::min(x.rows(), x.cols()) <= 16) {
    Eigen::JacobiSVD<Matrix> dec(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    s.singular_values = dec.singularValues();
    s.left_vectors = dec.matrixU();
    s.right_vectors = dec.matrixV();
    return s;
  }
  Eigen::BDCSVD<Matrix> dec(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  s.singular_values = dec.singularValues();
  s.left_vectors = dec.matrixU();
  s.right_vectors = dec.matrixV();
  // Eigen 3.4.0 BDCSVD occasionally returns factors that do not reproduce x
  // (seen on rotated measurement systems); redo those with Jacobi.
  if ((s.reconstruct() - x).norm() > 1e-10 * x.norm()) {
    Eigen::JacobiSVD<Matrix> jac(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    s.singular_values = jac.singularValues();
    s.left_vectors = jac.matrixU();
    s.right_vectors = jac.matrixV();
  }
  return s;
}

Matrix symmetrize(const Matrix& x) {
  if (x.rows() != x.cols()) throw ShapeError("symmetrize: matrix is not square");
  return 0.5 * (x + x.transpose());
}

EigenDecomposition symmetric_eigen(const Matrix& x) {
  require_finite(x, "symmetric_eigen");
  const Matrix sym = symmetrize(x);
  Eigen::SelfAdjointEigenSolver<Matrix> dec(sym);
  EigenDecomposition out;
  out.eigenvalues = dec.eigenvalues().reverse();
  out.eigenvectors = dec.eigenvectors().rowwise().reverse();
  return out;
}

Matrix psd_sqrt(const Matrix& x, double rel_clamp) {
  EigenDecomposition e = symmetric_eigen(x);
  const double lmax = e.eigenvalues.size() ? std::max(0.0, e.eigenvalues(0)) : 0.0;
  Vector root(e.eigenvalues.size());
  for (Index i = 0; i < root.size(); ++i) {
    const double l = e.eigenvalues(i);
    root(i) = (l > rel_clamp * lmax && l > 0.0) ? std::sqrt(l) : 0.0;
  }
  return e.eigenvectors * root.asDiagonal() * e.eigenvectors.transpose();
}

double nuclear_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  return svd(x).singular_values.sum();
}

double operator_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  return svd(x).singular_values(0);
}

Matrix svt(const Matrix& x, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ParameterError("svt: tau must be >= 0");
  require_finite(x, "svt");
  if (tau == 0.0 || x.size() == 0) return x;
  Spectrum s = svd(x);
  Index keep = 0;
  while (keep < s.singular_values.size() && s.singular_values(keep) > tau) ++keep;
  if (keep == 0) return Matrix::Zero(x.rows(), x.cols());
  const Vector shrunk = s.singular_values.head(keep).array() - tau;
  return s.left_vectors.leftCols(keep) * shrunk.asDiagonal() *
         s.right_vectors.leftCols(keep).transpose();
}

Matrix project_l1_ball(const Matrix& v, double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw ParameterError("project_l1_ball: radius must be >= 0");
  }
  require_finite(v, "project_l1_ball");
  const double l1 = v.cwiseAbs().sum();
  if (l1 <= radius) return v;
  if (radius == 0.0) return Matrix::Zero(v.rows(), v.cols());

  // Sort magnitudes descending and locate the soft-threshold level.
  std::vector<double> mags(v.data(), v.data() + v.size());
  for (double& a : mags) a = std::abs(a);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mags.size(); ++j) {
    cumsum += mags[j];
    const double t = (cumsum - radius) / static_cast<double>(j + 1);
    if (mags[j] - t > 0.0) theta = t;
  }
  Matrix out(v.rows(), v.cols());
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i)) - theta;
    out(i) = a > 0.0 ? std::copysign(a, v(i)) : 0.0;
  }
  return out;
}

double prox_power(double v, double weight, double p, double step) {
  if (!(p >= 1.0 && p < 2.0)) throw ParameterError("prox_power: p must lie in [1, 2)");
  if (!(weight > 0.0) || !(step > 0.0)) {
    throw ParameterError("prox_power: weight and step must be positive");
  }
  if (!std::isfinite(v)) throw ParameterError("prox_power: non-finite input");
  const double a = std::abs(v);
  const double c = step * weight;
  if (a == 0.0) return 0.0;
  if (p == 1.0) return std::copysign(std::max(a - c, 0.0), v);

  // Root of g(t) = t + c p t^(p-1) - a on (0, a); g is increasing and concave.
  const double cp = c * p;
  auto g = [&](double t) { return t + cp * std::pow(t, p - 1.0) - a; };
  constexpr double kTiny = 1e-300;
  // Near p = 1 the root can underflow; treat it as an exact zero.
  if (g(kTiny) >= 0.0) return 0.0;
  double lo = kTiny;
  double hi = a;
  double t = std::max(a - cp, 0.5 * a);
  for (int it = 0; it < 500; ++it) {
    const double gt = g(t);
    if (std::abs(gt) <= 1e-12 * std::max(1.0, a)) break;
    if (gt > 0.0) {
      hi = t;
    } else {
      lo = t;
    }
    const double dg = 1.0 + cp * (p - 1.0) * std::pow(t, p - 2.0);
    double next = t - gt / dg;
    // Geometric bisection keeps progress when the root sits many decades below a.
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    t = next;
  }
  return std::copysign(t, v);
}

}  // namespace flatmin
