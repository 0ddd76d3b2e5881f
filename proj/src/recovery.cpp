#include "flatmin/recovery.hpp"

#include <cmath>

namespace flatmin {
namespace {

Matrix pad_columns(const Matrix& a, Index k) {
  Matrix out = Matrix::Zero(a.rows(), k);
  out.leftCols(a.cols()) = a;
  return out;
}

double relative_nuclear(const Matrix& x, const Matrix& m) {
  const double mn = nuclear_norm(m);
  return mn > 0.0 ? nuclear_norm(x - m) / mn : nuclear_norm(x);
}

}  // namespace

FactorPair extract_factors(const Matrix& X_hat, const RescalingPair& pair, Index k) {
  if (pair.D1.rows() != X_hat.rows() || pair.D2.rows() != X_hat.cols())
    throw ShapeError("extract_factors: rescaling does not match X_hat");
  const Matrix l_inv = pair.D1_inverse();
  const Matrix r_inv = pair.D2_inverse();
  const Spectrum s = svd(X_hat);
  const Index rank = s.numerical_rank();
  if (k < rank)
    throw ParameterError("extract_factors: k = " + std::to_string(k) +
                         " is below the numerical rank " + std::to_string(rank));
  const Vector root = s.singular_values.head(rank).cwiseSqrt();
  const Matrix l = l_inv * s.left_vectors.leftCols(rank) * root.asDiagonal();
  const Matrix r = r_inv * s.right_vectors.leftCols(rank) * root.asDiagonal();
  return FactorPair::asymmetric(pad_columns(l, k), pad_columns(r, k));
}

EigenSplit eigen_count_split(const Matrix& X, Index k1, Index k2) {
  if (X.rows() != X.cols()) throw ShapeError("eigen_count_split: X must be square");
  const EigenDecomposition e = symmetric_eigen(X);
  const double top = e.eigenvalues.cwiseAbs().maxCoeff();
  const double thr = kRankTolerance * top;
  std::vector<Index> pos;
  std::vector<Index> neg;
  for (Index i = 0; i < e.eigenvalues.size(); ++i) {
    if (e.eigenvalues(i) > thr) pos.push_back(i);
    if (e.eigenvalues(i) < -thr) neg.push_back(i);
  }
  EigenSplit out;
  out.positive = static_cast<Index>(pos.size());
  out.negative = static_cast<Index>(neg.size());
  out.feasible = out.positive <= k1 && out.negative <= k2;
  if (!out.feasible) return out;
  Matrix u1 = Matrix::Zero(X.rows(), k1);
  Matrix u2 = Matrix::Zero(X.rows(), k2);
  for (std::size_t j = 0; j < pos.size(); ++j)
    u1.col(static_cast<Index>(j)) = e.eigenvectors.col(pos[j]) * std::sqrt(e.eigenvalues(pos[j]));
  for (std::size_t j = 0; j < neg.size(); ++j)
    u2.col(static_cast<Index>(j)) = e.eigenvectors.col(neg[j]) * std::sqrt(-e.eigenvalues(neg[j]));
  out.factors = FactorPair::signed_symmetric(std::move(u1), std::move(u2));
  return out;
}

FactorPair extract_symmetric_factors(const Matrix& X_hat, const RescalingPair& pair, Index k1,
                                     Index k2) {
  EigenSplit split = eigen_count_split(X_hat, k1, k2);
  if (!split.feasible)
    throw ParameterError("extract_symmetric_factors: eigenvalue counts (" +
                         std::to_string(split.positive) + ", " + std::to_string(split.negative) +
                         ") exceed the widths");
  const Matrix inv = pair.D1_inverse();
  return FactorPair::signed_symmetric(inv * split.factors.U1(), inv * split.factors.U2());
}

std::vector<Vector> hadamard_split(const Vector& x, int k) {
  if (k < 2) throw ParameterError("hadamard_split: k must be >= 2");
  const Vector mag = x.cwiseAbs().array().pow(1.0 / k).matrix();
  std::vector<Vector> out(static_cast<std::size_t>(k), mag);
  for (Index j = 0; j < x.size(); ++j)
    if (x(j) < 0.0) out[0](j) = -mag(j);
  return out;
}

double generalization_gap(const Matrix& U1, const Matrix& U2, const Matrix& M) {
  if (M.rows() != M.cols() || U1.rows() != M.rows() || U2.rows() != M.rows())
    throw ShapeError("generalization_gap: dimension mismatch");
  // tr(U U^T) = ||U||_F^2
  return U1.squaredNorm() - U2.squaredNorm() - M.trace();
}

double balancedness(const FactorPair& f, const Matrix& M) {
  const double mn = nuclear_norm(M);
  const Matrix g = f.L().transpose() * f.L() - f.R().transpose() * f.R();
  return mn > 0.0 ? nuclear_norm(g) / mn : nuclear_norm(g);
}

double norm_ratio(const FactorPair& f, const Matrix& X_nuc) {
  return (f.L().squaredNorm() + f.R().squaredNorm()) / (2.0 * nuclear_norm(X_nuc));
}

GrowthCheck completion_growth_check(const SensingOperator& op, const Matrix& M, const Matrix& X) {
  if (op.kind() != EnsembleKind::completion)
    throw ParameterError("completion_growth_check: operator must be of completion kind");
  const Matrix& mask = std::get<SensingOperator::Mask>(op.payload()).mask;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((mask.cwiseProduct(X - M)).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw ParameterError("completion_growth_check: X does not agree with M on the mask");
  GrowthCheck g;
  const double prov = op.provenance().m_or_p;
  g.p = (prov > 0.0 && prov <= 1.0) ? prov : mask.mean();
  const Spectrum s = svd(M);
  const double r = static_cast<double>(s.numerical_rank());
  const double mn = s.singular_values.sum();
  g.lhs = nuclear_norm(X - M);
  g.rhs = 8.0 * (1.0 + std::sqrt(6.0 * r / g.p)) * (nuclear_norm(X) - mn);
  const RescalingPair pair = build_rescaling(op);
  g.suboptimality_bound = pair.singular() ? std::numeric_limits<double>::infinity()
                                          : (pair.kappa * pair.kappa - 1.0) * mn;
  return g;
}

Incoherence incoherence(const Matrix& M, Index r) {
  const Spectrum s = svd(M);
  if (r < 1 || r > s.singular_values.size()) throw ParameterError("incoherence: bad rank");
  const Matrix u = s.left_vectors.leftCols(r);
  const Matrix v = s.right_vectors.leftCols(r);
  const double d1 = static_cast<double>(M.rows());
  const double d2 = static_cast<double>(M.cols());
  const double rr = static_cast<double>(r);
  Incoherence out;
  out.mu = std::max(u.rowwise().squaredNorm().maxCoeff() * d1 / rr,
                    v.rowwise().squaredNorm().maxCoeff() * d2 / rr);
  const double joint = (u * v.transpose()).cwiseAbs().maxCoeff();
  out.mu_strong = std::max(out.mu, joint * joint * d1 * d2 / rr);
  return out;
}

RecoveryReport flat_pipeline(const SensingOperator& op, const GroundTruth& truth, Index k,
                             const RecoveryConfig& cfg) {
  const Matrix& M = truth.matrix;
  if (M.rows() != op.d1() || M.cols() != op.d2()) throw ShapeError("flat_pipeline: truth shape");
  if (op.symmetric_measurements() || op.kind() == EnsembleKind::hadamard_columns)
    throw ParameterError("flat_pipeline: use symmetric_pipeline or depth_pipeline for this kind");
  const Vector b = op.forward(M);
  RecoveryReport rep;
  const RescalingPair pair = build_rescaling(op);
  rep.kappa = pair.kappa;

  if (cfg.run_baseline) {
    const ConvexProgramSpec base = equality_program(op, identity_rescaling(op.d1(), op.d2()), b);
    SolverReport br = solve(base, cfg.solver);
    if (cfg.certify) br.certificate = verify_optimality(base, br.X_hat);
    rep.baseline_fro_error = (br.X_hat - M).norm();
    rep.baseline_success = rep.baseline_fro_error < cfg.success_threshold;
    rep.baseline = std::move(br);
  }
  if (pair.singular()) {
    rep.singular_D = true;
    return rep;
  }
  const ConvexProgramSpec spec = equality_program(op, pair, b);
  rep.solver = solve(spec, cfg.solver);
  if (cfg.certify) rep.solver.certificate = verify_optimality(spec, rep.solver.X_hat);
  rep.X_hat = rep.solver.X_hat;
  rep.X_recovered = pair.D1_inverse() * rep.X_hat * pair.D2_inverse();
  rep.fro_error = (rep.X_recovered - M).norm();
  rep.nuc_error = relative_nuclear(rep.X_recovered, M);
  rep.success = rep.fro_error < cfg.success_threshold;
  rep.factors = extract_factors(rep.X_hat, pair, std::max(k, svd(rep.X_hat).numerical_rank()));
  rep.balancedness = balancedness(rep.factors, M);
  if (rep.baseline) rep.norm_ratio = norm_ratio(rep.factors, rep.baseline->X_hat);
  return rep;
}

RecoveryReport symmetric_pipeline(const SensingOperator& op, const GroundTruth& truth, Index k1,
                                  Index k2, const RecoveryConfig& cfg) {
  const Matrix& M = truth.matrix;
  if (!op.symmetric_measurements())
    throw ParameterError("symmetric_pipeline: operator must be quadratic or split-bilinear");
  if (M.rows() != op.d1() || M.cols() != op.d2()) throw ShapeError("symmetric_pipeline: shape");
  const Vector b = op.forward(M);
  RecoveryReport rep;
  const RescalingPair pair = build_rescaling(op);
  rep.kappa = pair.kappa;
  if (cfg.run_baseline) {
    const ConvexProgramSpec base = symmetric_program(op, identity_rescaling(op.d1(), op.d1()), b);
    SolverReport br = solve(base, cfg.solver);
    if (cfg.certify) br.certificate = verify_optimality(base, br.X_hat);
    rep.baseline_fro_error = (br.X_hat - M).norm();
    rep.baseline_success = rep.baseline_fro_error < cfg.success_threshold;
    rep.baseline = std::move(br);
  }
  if (pair.singular()) {
    rep.singular_D = true;
    return rep;
  }
  const ConvexProgramSpec spec = symmetric_program(op, pair, b);
  rep.solver = solve(spec, cfg.solver);
  if (cfg.certify) rep.solver.certificate = verify_optimality(spec, rep.solver.X_hat);
  rep.X_hat = rep.solver.X_hat;
  const Matrix inv = pair.D1_inverse();
  rep.X_recovered = inv * rep.X_hat * inv;
  rep.fro_error = (rep.X_recovered - M).norm();
  rep.nuc_error = relative_nuclear(rep.X_recovered, M);
  rep.success = rep.fro_error < cfg.success_threshold;
  const EigenSplit split = eigen_count_split(rep.X_hat, k1, k2);
  if (split.feasible) {
    rep.factors = FactorPair::signed_symmetric(inv * split.factors.U1(), inv * split.factors.U2());
    rep.generalization_gap = generalization_gap(rep.factors.U1(), rep.factors.U2(), M);
  }
  return rep;
}

RecoveryReport rpca_pipeline(const Matrix& Y, const Matrix& M, double radius, Index k,
                             const RecoveryConfig& cfg) {
  if (Y.rows() != M.rows() || Y.cols() != M.cols()) throw ShapeError("rpca_pipeline: shape");
  RecoveryReport rep;
  rep.kappa = 1.0;
  const ConvexProgramSpec spec = robust_pca_program(Y, radius);
  rep.solver = solve(spec, cfg.solver);
  if (cfg.certify) rep.solver.certificate = verify_optimality(spec, rep.solver.X_hat);
  rep.X_hat = rep.solver.X_hat;
  rep.X_recovered = rep.X_hat;
  rep.fro_error = (rep.X_hat - M).norm();
  rep.nuc_error = relative_nuclear(rep.X_hat, M);
  rep.success = rep.fro_error < cfg.success_threshold;
  const RescalingPair id = identity_rescaling(M.rows(), M.cols());
  rep.factors = extract_factors(rep.X_hat, id, std::max(k, svd(rep.X_hat).numerical_rank()));
  rep.balancedness = balancedness(rep.factors, M);
  return rep;
}

NoisyReport noisy_pipeline(const SensingOperator& op, const Matrix& M, const Vector& b,
                           double radius, const RecoveryConfig& cfg) {
  NoisyReport rep;
  const RescalingPair pair = build_rescaling(op);
  const SolverReport base =
      solve(ball_program(op, identity_rescaling(op.d1(), op.d2()), b, radius), cfg.solver);
  rep.baseline_error = (base.X_hat - M).norm();
  if (pair.singular()) {
    rep.singular_D = true;
    rep.flat_error = std::numeric_limits<double>::quiet_NaN();
    rep.converged = base.converged;
    return rep;
  }
  const SolverReport flat = solve(ball_program(op, pair, b, radius), cfg.solver);
  rep.flat_error = (pair.D1_inverse() * flat.X_hat * pair.D2_inverse() - M).norm();
  rep.converged = base.converged && flat.converged;
  return rep;
}

DepthReport depth_pipeline(const SensingOperator& op, const Vector& x_truth, int k,
                           const RecoveryConfig& cfg) {
  if (op.kind() != EnsembleKind::hadamard_columns)
    throw ParameterError("depth_pipeline: operator must be hadamard-columns");
  DepthReport rep;
  const RescalingPair pair = build_rescaling(op);
  if (pair.singular()) {
    rep.singular_D = true;
    return rep;
  }
  const Vector b = op.forward(x_truth);
  const SolverReport sr = solve(depth_program(op, pair, b, k), cfg.solver);
  rep.x_hat = sr.X_hat.col(0);
  rep.relative_error = (rep.x_hat - x_truth).norm() / x_truth.norm();
  rep.converged = sr.converged;
  rep.iterations = sr.iterations;
  return rep;
}

}  // namespace flatmin
