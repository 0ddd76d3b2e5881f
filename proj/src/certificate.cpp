#include "flatmin/solvers.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace flatmin {
namespace {

struct FullSvd {
  Matrix u;  // d1 x d1
  Matrix v;  // d2 x d2
  Vector s;
  Index rank = 0;
};

FullSvd full_svd(const Matrix& x) {
  Eigen::JacobiSVD<Matrix> dec(x, Eigen::ComputeFullU | Eigen::ComputeFullV);
  FullSvd out;
  out.u = dec.matrixU();
  out.v = dec.matrixV();
  out.s = dec.singularValues();
  const double smax = out.s.size() ? out.s(0) : 0.0;
  if (smax > 0.0)
    while (out.rank < out.s.size() && out.s(out.rank) > kRankTolerance * smax) ++out.rank;
  return out;
}

// Minimum-norm least-squares solution of a x = rhs.
Vector lstsq(const Matrix& a, const Vector& rhs) {
  if (a.cols() == 0) return Vector(0);
  return a.completeOrthogonalDecomposition().solve(rhs);
}

// Off-tangent norm the refined dual aims for; well inside the strict margin.
constexpr double kStrictMargin = 0.99;

// Proximal map of t * operator norm: X minus its projection onto the nuclear
// ball of radius t (Moreau), i.e. singular values clipped from above.
Matrix prox_operator_norm(const Matrix& x, double t) {
  const Spectrum s = svd(x);
  const Vector kept = project_l1_ball(s.singular_values, t).col(0);
  return x - s.left_vectors * kept.asDiagonal() * s.right_vectors.transpose();
}

// min_z ||mat(c + P z)||_op by ADMM on the split V = mat(c + P z). Returns the
// best z seen; any z keeps the tangent conditions exact, so early exit is safe.
Vector min_operator_norm(const Vector& c, const Matrix& p, Index rows, Index cols,
                         const Vector& z_start, double target) {
  const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(p);
  auto opn = [&](const Vector& z) {
    const Vector w = c + p * z;
    return operator_norm(Eigen::Map<const Matrix>(w.data(), rows, cols));
  };
  Vector z = z_start;
  Vector best_z = z;
  double best = opn(z);
  Vector w = c + p * z;
  Matrix v = Eigen::Map<const Matrix>(w.data(), rows, cols);
  Matrix lam = Matrix::Zero(rows, cols);
  double rho = 1.0;
  for (int it = 0; it < 3000 && best > target; ++it) {
    const Matrix wm = Eigen::Map<const Matrix>(w.data(), rows, cols);
    const Matrix v_old = v;
    v = prox_operator_norm(wm + lam, 1.0 / rho);
    const Matrix rhs = v - lam;
    z = cod.solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()) - c);
    w = c + p * z;
    const Matrix wn = Eigen::Map<const Matrix>(w.data(), rows, cols);
    lam += wn - v;
    const double cur = operator_norm(wn);
    if (cur < best) {
      best = cur;
      best_z = z;
    }
    // residual balancing; lam is scaled with 1/rho
    const double r = (wn - v).norm();
    const double s = rho * (v - v_old).norm();
    if (r > 10.0 * s) {
      rho *= 2.0;
      lam /= 2.0;
    } else if (s > 10.0 * r) {
      rho /= 2.0;
      lam *= 2.0;
    }
  }
  return best_z;
}

CertificateReport equality_certificate(const ConvexProgramSpec& spec, const Matrix& x_hat) {
  const SensingOperator& op = *spec.op;
  const Index d1 = op.d1();
  const Index d2 = op.d2();
  if (x_hat.rows() != d1 || x_hat.cols() != d2) throw ShapeError("verify_optimality: X_hat shape");
  const RescaledSystem sys = rescaled_system(op, spec.rescaling, spec.b);
  const Index m = sys.A.rows();
  const FullSvd f = full_svd(x_hat);
  const Index r = f.rank;

  CertificateReport rep;
  rep.rank = r;
  rep.primal_value = f.s.head(r).sum();

  // Rotate every rescaled measurement into the singular bases of X_hat. The
  // tangent space is every entry outside the trailing (d1-r) x (d2-r) block.
  const Index nt = d1 * d2 - (d1 - r) * (d2 - r);
  const Index np = (d1 - r) * (d2 - r);
  Matrix bt(nt, m);
  Matrix bp(np, m);
  for (Index k = 0; k < m; ++k) {
    const Vector row = sys.A.row(k).transpose();
    const Eigen::Map<const Matrix> ak(row.data(), d1, d2);
    const Matrix g = f.u.transpose() * ak * f.v;
    Index it = 0;
    Index ip = 0;
    for (Index j = 0; j < d2; ++j) {
      for (Index i = 0; i < d1; ++i) {
        if (i >= r && j >= r) {
          bp(ip++, k) = g(i, j);
        } else {
          bt(it++, k) = g(i, j);
        }
      }
    }
  }
  // Target U V^T: the identity on the leading r x r block.
  Vector e = Vector::Zero(nt);
  {
    Index it = 0;
    for (Index j = 0; j < d2; ++j)
      for (Index i = 0; i < d1; ++i) {
        if (i >= r && j >= r) continue;
        if (i == j && i < r) e(it) = 1.0;
        ++it;
      }
  }

  // y = y0 + N z with B_T y0 = e (least squares) and N spanning null(B_T);
  // z minimizes the Frobenius norm of the off-tangent block.
  Vector y;
  if (nt == 0) {
    y = Vector::Zero(m);
  } else {
    // QR of B_T^T splits R^m into range(B_T^T) and null(B_T). BDCSVD with a
    // thin U and full V returned inconsistent factors here, so it is avoided.
    Eigen::ColPivHouseholderQR<Matrix> qr(bt.transpose());
    qr.setThreshold(1e-12);
    const Index rt = qr.rank();
    const Matrix q = qr.householderQ();
    const Vector y0 = q.leftCols(rt) * lstsq(bt * q.leftCols(rt), e);
    const Matrix null = q.rightCols(m - rt);
    y = y0;
    if (null.cols() > 0 && np > 0) {
      const Matrix p = bp * null;
      const Vector c = bp * y0;
      Vector z = -lstsq(p, c);
      // The Frobenius fit is often strictly feasible already; when it is not,
      // descend on the operator norm itself.
      const Vector w = c + p * z;
      if (operator_norm(Eigen::Map<const Matrix>(w.data(), d1 - r, d2 - r)) > kStrictMargin)
        z = min_operator_norm(c, p, d1 - r, d2 - r, z, kStrictMargin);
      y += null * z;
    }
  }

  const Vector gvec = bt * y;
  rep.tangent_residual = (gvec - e).norm();
  Matrix w(d1 - r, d2 - r);
  if (np > 0) {
    const Vector wv = bp * y;
    w = Eigen::Map<const Matrix>(wv.data(), d1 - r, d2 - r);
    rep.offtangent_opnorm = operator_norm(w);
  }
  const Vector lifted = sys.A.transpose() * y;
  const double opn = operator_norm(Eigen::Map<const Matrix>(lifted.data(), d1, d2));
  rep.dual_value = opn > 0.0 ? sys.b.dot(y) / opn : 0.0;
  rep.duality_gap = rep.primal_value - rep.dual_value;
  return rep;
}

CertificateReport rpca_certificate(const ConvexProgramSpec& spec, const Matrix& x_hat) {
  const Matrix& y = spec.Y;
  const Index d1 = y.rows();
  const Index d2 = y.cols();
  if (x_hat.rows() != d1 || x_hat.cols() != d2) throw ShapeError("verify_optimality: X_hat shape");
  const FullSvd f = full_svd(x_hat);
  const Index r = f.rank;
  CertificateReport rep;
  rep.rank = r;
  rep.primal_value = f.s.head(r).sum();
  const double tau = spec.radius;

  // Dual: max <G, Y> - tau ||G||_inf  s.t. ||G||_op <= 1.
  auto dual_of = [&](const Matrix& g) {
    const double opn = operator_norm(g);
    if (opn == 0.0) return 0.0;
    return (g.cwiseProduct(y).sum() - tau * g.cwiseAbs().maxCoeff()) / opn;
  };

  const Matrix uvt = f.u.leftCols(r) * f.v.leftCols(r).transpose();
  const Matrix s_hat = y - x_hat;
  const double smax = s_hat.cwiseAbs().maxCoeff();
  std::vector<std::pair<Index, Index>> support;
  for (Index j = 0; j < d2; ++j)
    for (Index i = 0; i < d1; ++i)
      if (smax > 0.0 && std::abs(s_hat(i, j)) > 1e-6 * smax) support.emplace_back(i, j);

  if (r == 0 || support.empty()) {
    rep.dual_value = dual_of(uvt);
    rep.duality_gap = rep.primal_value - rep.dual_value;
    return rep;
  }

  // G = U V^T + U_perp Z V_perp^T with G = lambda sign(S_hat) on the support.
  // Z is linear in lambda: Z = Z0 + lambda Z1 (minimum-norm fits).
  const Matrix up = f.u.rightCols(d1 - r);
  const Matrix vp = f.v.rightCols(d2 - r);
  const Index ns = static_cast<Index>(support.size());
  const Index nz = (d1 - r) * (d2 - r);
  Matrix a(ns, nz);
  Vector c0(ns);
  Vector c1(ns);
  for (Index q = 0; q < ns; ++q) {
    const auto [i, j] = support[static_cast<std::size_t>(q)];
    // (U_perp Z V_perp^T)_{ij} = sum_{ab} up(i,a) Z(a,b) vp(j,b)
    for (Index b = 0; b < d2 - r; ++b)
      for (Index a2 = 0; a2 < d1 - r; ++a2) a(q, b * (d1 - r) + a2) = up(i, a2) * vp(j, b);
    c0(q) = -uvt(i, j);
    c1(q) = s_hat(i, j) > 0.0 ? 1.0 : -1.0;
  }
  const auto cod = a.completeOrthogonalDecomposition();
  const Vector z0 = cod.solve(c0);
  const Vector z1 = cod.solve(c1);
  auto build = [&](double lambda, Matrix* w_out) {
    const Vector zv = z0 + lambda * z1;
    const Matrix z = Eigen::Map<const Matrix>(zv.data(), d1 - r, d2 - r);
    const Matrix w = up * z * vp.transpose();
    if (w_out) *w_out = z;
    return Matrix(uvt + w);
  };
  auto gap_at = [&](double lambda) { return rep.primal_value - dual_of(build(lambda, nullptr)); };

  // Coarse log grid, then golden-section refinement around the best point.
  double best = 1e-3;
  double best_gap = gap_at(best);
  const int grid = 240;
  for (int t = 0; t <= grid; ++t) {
    const double lambda = std::pow(10.0, -3.0 + 4.0 * t / grid);
    const double g = gap_at(lambda);
    if (g < best_gap) {
      best_gap = g;
      best = lambda;
    }
  }
  double lo = best * std::pow(10.0, -4.0 / grid);
  double hi = best * std::pow(10.0, 4.0 / grid);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double m1 = hi - phi * (hi - lo);
    const double m2 = lo + phi * (hi - lo);
    if (gap_at(m1) < gap_at(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  const double refined = 0.5 * (lo + hi);
  if (gap_at(refined) < best_gap) best = refined;

  Matrix z;
  const Matrix g = build(best, &z);
  rep.lambda = best;
  rep.offtangent_opnorm = operator_norm(z);
  Matrix fit(ns, 1);
  for (Index q = 0; q < ns; ++q) {
    const auto [i, j] = support[static_cast<std::size_t>(q)];
    fit(q, 0) = g(i, j) - best * c1(q);
  }
  rep.tangent_residual = fit.norm();
  rep.dual_value = dual_of(g);
  rep.duality_gap = rep.primal_value - rep.dual_value;
  return rep;
}

}  // namespace

CertificateReport verify_optimality(const ConvexProgramSpec& spec, const Matrix& X_hat) {
  require_finite(X_hat, "verify_optimality");
  switch (spec.family) {
    case ProgramFamily::nuclear_equality:
    case ProgramFamily::nuclear_symmetric:
      if (!spec.op) throw ParameterError("verify_optimality: program has no operator");
      return equality_certificate(spec, X_hat);
    case ProgramFamily::nuclear_l1ball:
      return rpca_certificate(spec, X_hat);
    default:
      throw ParameterError("verify_optimality: no certificate for family " +
                           to_string(spec.family));
  }
}

}  // namespace flatmin
