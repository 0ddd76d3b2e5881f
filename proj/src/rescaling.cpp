#include "flatmin/rescaling.hpp"

#include "flatmin/rng.hpp"

#include <algorithm>
#include <cmath>

namespace flatmin {
namespace {

constexpr double kSingularClamp = 1e-12;

struct SideSpectrum {
  double lo = 0.0;
  double hi = 0.0;
};

// Extreme eigenvalues of D given D^2, with the same relative clamp as psd_sqrt.
SideSpectrum side_from_square(const Matrix& sq) {
  const EigenDecomposition e = symmetric_eigen(sq);
  const double top = std::max(0.0, e.eigenvalues(0));
  const double bottom = e.eigenvalues(e.eigenvalues.size() - 1);
  SideSpectrum s;
  s.hi = std::sqrt(top);
  s.lo = (bottom > kSingularClamp * top && bottom > 0.0) ? std::sqrt(bottom) : 0.0;
  return s;
}

void finish(RescalingPair& p, const SideSpectrum& a, const SideSpectrum& b) {
  p.eig_min1 = a.lo;
  p.eig_max1 = a.hi;
  p.eig_min2 = b.lo;
  p.eig_max2 = b.hi;
  const double lo = std::min(a.lo, b.lo);
  const double hi = std::max(a.hi, b.hi);
  p.kappa = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

Matrix sum_outer_generic(const SensingOperator& op, bool left) {
  Matrix acc = Matrix::Zero(left ? op.d1() : op.d2(), left ? op.d1() : op.d2());
  for (Index i = 0; i < op.m(); ++i) {
    const Matrix a = op.measurement(i);
    if (left) {
      acc.noalias() += a * a.transpose();
    } else {
      acc.noalias() += a.transpose() * a;
    }
  }
  return acc;
}

// sum A_i A_i^T and sum A_i^T A_i using the payload structure.
std::pair<Matrix, Matrix> second_moments(const SensingOperator& op) {
  const Index d1 = op.d1();
  const Index d2 = op.d2();
  switch (op.kind()) {
    case EnsembleKind::bilinear: {
      const auto& p = std::get<SensingOperator::RankOne>(op.payload());
      const Vector ln = p.left.colwise().squaredNorm().transpose();
      const Vector rn = p.right.colwise().squaredNorm().transpose();
      return {p.left * rn.asDiagonal() * p.left.transpose(),
              p.right * ln.asDiagonal() * p.right.transpose()};
    }
    case EnsembleKind::completion: {
      const auto& p = std::get<SensingOperator::Mask>(op.payload());
      return {Matrix(p.mask.rowwise().sum().asDiagonal()),
              Matrix(p.mask.colwise().sum().transpose().asDiagonal())};
    }
    case EnsembleKind::quadratic: {
      const auto& p = std::get<SensingOperator::Quadratic>(op.payload());
      const Vector n = p.features.colwise().squaredNorm().transpose();
      const Matrix s = p.features * n.asDiagonal() * p.features.transpose();
      return {s, s};
    }
    case EnsembleKind::identity:
      return {static_cast<double>(d2) * Matrix::Identity(d1, d1),
              static_cast<double>(d1) * Matrix::Identity(d2, d2)};
    case EnsembleKind::gaussian: {
      const auto& p = std::get<SensingOperator::DenseRows>(op.payload());
      Matrix l = Matrix::Zero(d1, d1);
      Matrix r = Matrix::Zero(d2, d2);
      for (Index i = 0; i < op.m(); ++i) {
        const Vector row = p.rows.row(i).transpose();
        const Eigen::Map<const Matrix> a(row.data(), d1, d2);
        l.noalias() += a * a.transpose();
        r.noalias() += a.transpose() * a;
      }
      return {l, r};
    }
    default:
      return {sum_outer_generic(op, true), sum_outer_generic(op, false)};
  }
}

}  // namespace

double RescalingPair::alpha_min() const { return std::min(eig_min1, eig_min2); }
double RescalingPair::alpha_max() const { return std::max(eig_max1, eig_max2); }

Matrix RescalingPair::D1_inverse() const {
  if (singular()) throw PreconditionError("rescaling is singular");
  if (shape == RescalingShape::diagonal) return Matrix(D1.diagonal().cwiseInverse().asDiagonal());
  return D1.inverse();
}

Matrix RescalingPair::D2_inverse() const {
  if (singular()) throw PreconditionError("rescaling is singular");
  return D2.inverse();
}

nlohmann::json RescalingPair::summary() const {
  nlohmann::json j;
  j["shape"] = shape == RescalingShape::pair        ? "pair"
               : shape == RescalingShape::symmetric ? "symmetric"
                                                    : "diagonal";
  j["eig_min1"] = eig_min1;
  j["eig_max1"] = eig_max1;
  j["eig_min2"] = eig_min2;
  j["eig_max2"] = eig_max2;
  j["singular"] = singular();
  if (singular()) {
    j["kappa"] = nullptr;
  } else {
    j["kappa"] = kappa;
  }
  return j;
}

std::pair<Matrix, Matrix> second_moments_bruteforce(const SensingOperator& op) {
  return {sum_outer_generic(op, true), sum_outer_generic(op, false)};
}

RescalingPair build_rescaling(const SensingOperator& op) {
  const double m = static_cast<double>(op.m());
  RescalingPair p;
  if (op.kind() == EnsembleKind::hadamard_columns) {
    const auto& a = std::get<SensingOperator::Columns>(op.payload()).design;
    const Vector diag = a.colwise().squaredNorm().transpose() / m;
    p.shape = RescalingShape::diagonal;
    p.D1 = diag.asDiagonal();
    p.D2 = Matrix::Identity(1, 1);
    SideSpectrum s;
    s.hi = diag.maxCoeff();
    const double lo = diag.minCoeff();
    s.lo = lo > kSingularClamp * s.hi ? lo : 0.0;
    finish(p, s, s);
    return p;
  }
  const auto [left, right] = second_moments(op);
  const double d1 = static_cast<double>(op.d1());
  const double d2 = static_cast<double>(op.d2());
  const Matrix sq1 = left / (m * d2);
  const Matrix sq2 = right / (m * d1);
  if (op.symmetric_measurements()) {
    p.shape = RescalingShape::symmetric;
    p.D1 = psd_sqrt(sq1, kSingularClamp);
    p.D2 = p.D1;
    const SideSpectrum s = side_from_square(sq1);
    finish(p, s, s);
    return p;
  }
  p.shape = RescalingShape::pair;
  p.D1 = psd_sqrt(sq1, kSingularClamp);
  p.D2 = psd_sqrt(sq2, kSingularClamp);
  finish(p, side_from_square(sq1), side_from_square(sq2));
  return p;
}

RescalingPair identity_rescaling(Index d1, Index d2) {
  return make_rescaling(Matrix::Identity(d1, d1), Matrix::Identity(d2, d2));
}

RescalingPair make_rescaling(const Matrix& D1, const Matrix& D2, RescalingShape shape) {
  if (D1.rows() != D1.cols() || D2.rows() != D2.cols())
    throw ShapeError("make_rescaling: matrices must be square");
  RescalingPair p;
  p.shape = shape;
  p.D1 = symmetrize(D1);
  p.D2 = symmetrize(D2);
  auto side = [](const Matrix& d) {
    const EigenDecomposition e = symmetric_eigen(d);
    SideSpectrum s;
    s.hi = std::max(0.0, e.eigenvalues(0));
    const double lo = e.eigenvalues(e.eigenvalues.size() - 1);
    s.lo = (lo > kSingularClamp * s.hi && lo > 0.0) ? lo : 0.0;
    return s;
  };
  finish(p, side(p.D1), side(p.D2));
  return p;
}

std::string to_string(PNorm p) { return p == PNorm::l1 ? "l1" : "l2"; }

nlohmann::json RipEstimate::summary() const {
  return {{"p_norm", to_string(p_norm)}, {"rank", rank_tested},     {"trials", trials},
          {"delta1_hat", delta1_hat},    {"delta2_hat", delta2_hat}, {"mean_ratio", mean_ratio}};
}

namespace {

RipEstimate rip_core(const SensingOperator& op, const Matrix* left_inv, const Matrix* right_inv,
                     Index r, Index trials, PNorm p_norm, std::uint64_t seed) {
  const Index d1 = op.d1();
  const Index d2 = op.d2();
  if (r < 1 || r > std::min(d1, d2)) throw ParameterError("estimate_rip: need 1 <= r <= min(d1, d2)");
  if (trials < 1) throw ParameterError("estimate_rip: trials must be >= 1");
  Rng rng(seed);
  RipEstimate est;
  est.p_norm = p_norm;
  est.rank_tested = r;
  est.trials = trials;
  est.delta1_hat = std::numeric_limits<double>::infinity();
  est.delta2_hat = 0.0;
  const double m = static_cast<double>(op.m());
  const double scale = p_norm == PNorm::l1 ? m : std::sqrt(m);
  double total = 0.0;
  for (Index t = 0; t < trials; ++t) {
    Matrix g1(d1, r);
    Matrix g2(d2, r);
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < d1; ++i) g1(i, j) = rng.normal();
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < d2; ++i) g2(i, j) = rng.normal();
    Matrix x = g1 * g2.transpose();
    x /= x.norm();
    Matrix arg = x;
    if (left_inv) arg = (*left_inv) * x * (*right_inv);
    const Vector y = op.forward(arg);
    const double num = p_norm == PNorm::l1 ? y.lpNorm<1>() : y.norm();
    const double ratio = num / scale;
    est.delta1_hat = std::min(est.delta1_hat, ratio);
    est.delta2_hat = std::max(est.delta2_hat, ratio);
    total += ratio;
  }
  est.mean_ratio = total / static_cast<double>(trials);
  return est;
}

}  // namespace

RipEstimate estimate_rip(const SensingOperator& op, Index r, Index trials, PNorm p_norm,
                         std::uint64_t seed) {
  return rip_core(op, nullptr, nullptr, r, trials, p_norm, seed);
}

RipEstimate estimate_rip(const SensingOperator& op, const RescalingPair& pair, Index r,
                         Index trials, PNorm p_norm, std::uint64_t seed) {
  const Matrix a = pair.D1_inverse();
  const Matrix b = pair.D2_inverse();
  if (a.rows() != op.d1() || b.rows() != op.d2()) throw ShapeError("estimate_rip: pair shape");
  return rip_core(op, &a, &b, r, trials, p_norm, seed);
}

RipEstimate transfer_rip(const RipEstimate& est, const RescalingPair& pair) {
  if (pair.singular()) throw PreconditionError("transfer_rip: rescaling is singular");
  RipEstimate out = est;
  const double lo = pair.alpha_min();
  const double hi = pair.alpha_max();
  out.delta1_hat = est.delta1_hat / (hi * hi);
  out.delta2_hat = est.delta2_hat / (lo * lo);
  out.mean_ratio = std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace flatmin
