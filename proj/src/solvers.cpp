#include "flatmin/solvers.hpp"

#include "flatmin/affine.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace flatmin {
namespace {

Vector vec(const Matrix& x) { return Eigen::Map<const Vector>(x.data(), x.size()); }
Matrix unvec(const Vector& v, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Vector project_l2_ball(const Vector& v, const Vector& center, double radius) {
  const Vector d = v - center;
  const double n = d.norm();
  if (n <= radius) return v;
  return center + (radius / n) * d;
}

// Residual balancing on the scaled dual: rho *= f implies u /= f.
template <class... Duals>
void balance(const SolverConfig& cfg, long it, double r, double s, double& rho, Duals&... u) {
  if (cfg.balance_every <= 0 || it % cfg.balance_every != 0) return;
  if (r > cfg.balance_mu * s) {
    rho *= cfg.balance_factor;
    ((u /= cfg.balance_factor), ...);
  } else if (s > cfg.balance_mu * r) {
    rho /= cfg.balance_factor;
    ((u *= cfg.balance_factor), ...);
  }
}

void require_nonsingular(const RescalingPair& pair) {
  if (pair.singular()) throw PreconditionError("rescaling is singular; the program is undefined");
}

// min ||X||_* s.t. X in the affine set, X reshaped d1 x d2. The affine set is
// given in normalized units; the caller rescales the result.
SolverReport nuclear_affine_admm(const AffineProjector& proj, Index d1, Index d2, bool symmetric,
                                 const SolverConfig& cfg) {
  SolverReport rep;
  const Index n = d1 * d2;
  const double sqn = std::sqrt(static_cast<double>(n));
  Vector z = proj.anchor();
  Vector u = Vector::Zero(n);
  Vector x = z;
  double rho = cfg.rho;
  if (proj.rank() == n) {
    rep.X_hat = unvec(z, d1, d2);
    rep.converged = true;
    rep.final_rho = rho;
    return rep;
  }
  double r = 0.0;
  double s = 0.0;
  long it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    Matrix xm = svt(unvec(z - u, d1, d2), 1.0 / rho);
    if (symmetric) xm = symmetrize(xm);
    x = vec(xm);
    const Vector z_old = z;
    z = proj.project(x + u);
    u += x - z;
    r = (x - z).norm();
    s = rho * (z - z_old).norm();
    const double eps_pri = sqn * cfg.abs_tol + cfg.rel_tol * std::max(x.norm(), z.norm());
    const double eps_dual = sqn * cfg.abs_tol + cfg.rel_tol * rho * u.norm();
    if (r <= eps_pri && s <= eps_dual) {
      rep.converged = true;
      break;
    }
    if (it % kHistoryStride == 0) rep.residual_history.push_back(r + s);
    balance(cfg, it, r, s, rho, u);
  }
  rep.iterations = std::min(it, cfg.max_iter);
  rep.primal_residual = r;
  rep.dual_residual = s;
  rep.final_rho = rho;
  rep.X_hat = unvec(x, d1, d2);
  return rep;
}

SolverReport equality_core(const ConvexProgramSpec& spec, const SolverConfig& cfg,
                           bool symmetric) {
  cfg.validate();
  if (!spec.op) throw ParameterError("program has no operator");
  require_nonsingular(spec.rescaling);
  const SensingOperator& op = *spec.op;
  const RescaledSystem sys = rescaled_system(op, spec.rescaling, spec.b);
  const Index d1 = op.d1();
  const Index d2 = op.d2();

  SolverReport rep;
  AffineProjector proj(sys.A, sys.b);
  const double scale = proj.anchor().norm();
  if (scale == 0.0) {
    rep.X_hat = Matrix::Zero(d1, d2);
    rep.converged = true;
    rep.final_rho = cfg.rho;
  } else {
    rep = nuclear_affine_admm(proj.scaled(1.0 / scale), d1, d2, symmetric, cfg);
    rep.X_hat *= scale;
  }
  rep.rank_deficient = proj.rank_deficient();
  rep.inconsistent = proj.inconsistent();
  rep.feasibility = (sys.A * vec(rep.X_hat) - sys.b).norm();
  rep.objective = nuclear_norm(rep.X_hat);
  return rep;
}

}  // namespace

std::string to_string(ProgramFamily f) {
  switch (f) {
    case ProgramFamily::nuclear_equality: return "nuclear-equality";
    case ProgramFamily::nuclear_ball: return "nuclear-ball";
    case ProgramFamily::nuclear_l1ball: return "nuclear-l1ball";
    case ProgramFamily::nuclear_symmetric: return "nuclear-symmetric";
    case ProgramFamily::weighted_lp: return "weighted-lp";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (!(rho > 0.0) || !(balance_mu > 1.0) || !(balance_factor > 1.0))
    throw ParameterError("solver config: rho > 0, balance_mu > 1, balance_factor > 1 required");
  if (!(abs_tol >= 0.0) || !(rel_tol >= 0.0) || (abs_tol == 0.0 && rel_tol == 0.0))
    throw ParameterError("solver config: tolerances must be nonnegative and not both zero");
  if (max_iter < 1) throw ParameterError("solver config: max_iter must be >= 1");
}

nlohmann::json SolverConfig::to_json() const {
  return {{"rho", rho},         {"balance_mu", balance_mu}, {"balance_factor", balance_factor},
          {"balance_every", balance_every}, {"abs_tol", abs_tol}, {"rel_tol", rel_tol},
          {"max_iter", max_iter}};
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) {
  SolverConfig c;
  if (!j.is_object()) throw ParameterError("solver config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "rho") c.rho = value.get<double>();
    else if (key == "balance_mu") c.balance_mu = value.get<double>();
    else if (key == "balance_factor") c.balance_factor = value.get<double>();
    else if (key == "balance_every") c.balance_every = value.get<long>();
    else if (key == "abs_tol") c.abs_tol = value.get<double>();
    else if (key == "rel_tol") c.rel_tol = value.get<double>();
    else if (key == "max_iter") c.max_iter = value.get<long>();
    else throw ParameterError("solver config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

nlohmann::json CertificateReport::to_json() const {
  return {{"rank", rank},
          {"tangent_residual", tangent_residual},
          {"offtangent_opnorm", offtangent_opnorm},
          {"duality_gap", duality_gap},
          {"primal_value", primal_value},
          {"dual_value", dual_value},
          {"lambda", lambda}};
}

nlohmann::json SolverReport::to_json() const {
  nlohmann::json j{{"family", to_string(family)},
                   {"primal_residual", primal_residual},
                   {"dual_residual", dual_residual},
                   {"feasibility", feasibility},
                   {"iterations", iterations},
                   {"objective", objective},
                   {"final_rho", final_rho},
                   {"converged", converged},
                   {"rank_deficient", rank_deficient},
                   {"inconsistent", inconsistent}};
  if (certificate) j["certificate"] = certificate->to_json();
  return j;
}

ConvexProgramSpec equality_program(const SensingOperator& op, const RescalingPair& pair,
                                   const Vector& b) {
  if (b.size() != op.m()) throw ShapeError("equality_program: b has wrong length");
  ConvexProgramSpec s;
  s.family = ProgramFamily::nuclear_equality;
  s.op = op;
  s.rescaling = pair;
  s.b = b;
  return s;
}

ConvexProgramSpec ball_program(const SensingOperator& op, const RescalingPair& pair,
                               const Vector& b, double radius) {
  if (!(radius >= 0.0)) throw ParameterError("ball_program: radius must be >= 0");
  ConvexProgramSpec s = equality_program(op, pair, b);
  s.family = ProgramFamily::nuclear_ball;
  s.radius = radius;
  return s;
}

ConvexProgramSpec robust_pca_program(const Matrix& Y, double radius) {
  if (!(radius >= 0.0)) throw ParameterError("robust_pca_program: radius must be >= 0");
  require_finite(Y, "robust_pca_program");
  ConvexProgramSpec s;
  s.family = ProgramFamily::nuclear_l1ball;
  s.Y = Y;
  s.radius = radius;
  return s;
}

ConvexProgramSpec symmetric_program(const SensingOperator& op, const RescalingPair& pair,
                                    const Vector& b) {
  if (!op.symmetric_measurements())
    throw ParameterError("symmetric_program: operator must be quadratic or split-bilinear");
  ConvexProgramSpec s = equality_program(op, pair, b);
  s.family = ProgramFamily::nuclear_symmetric;
  return s;
}

ConvexProgramSpec weighted_lp_program(const SensingOperator& op, const Vector& weights,
                                      const Vector& b, double p) {
  if (op.kind() != EnsembleKind::hadamard_columns)
    throw ParameterError("weighted_lp_program: operator must be hadamard-columns");
  if (!(p >= 1.0 && p < 2.0)) throw ParameterError("weighted_lp_program: p must lie in [1, 2)");
  if (weights.size() != op.d1() || !(weights.minCoeff() > 0.0))
    throw ParameterError("weighted_lp_program: weights must be positive, one per coordinate");
  if (b.size() != op.m()) throw ShapeError("weighted_lp_program: b has wrong length");
  ConvexProgramSpec s;
  s.family = ProgramFamily::weighted_lp;
  s.op = op;
  s.b = b;
  s.weights = weights;
  s.p = p;
  return s;
}

ConvexProgramSpec depth_program(const SensingOperator& op, const RescalingPair& pair,
                                const Vector& b, int k) {
  if (k < 2) throw ParameterError("depth_program: depth k must be >= 2");
  require_nonsingular(pair);
  ConvexProgramSpec s = weighted_lp_program(op, pair.D1.diagonal(), b, 2.0 - 2.0 / k);
  s.rescaling = pair;
  return s;
}

RescaledSystem rescaled_system(const SensingOperator& op, const RescalingPair& pair,
                               const Vector& b) {
  if (b.size() != op.m()) throw ShapeError("rescaled_system: b has wrong length");
  const Matrix l = pair.D1_inverse();
  const Matrix r = pair.D2_inverse();
  if (l.rows() != op.d1() || r.rows() != op.d2())
    throw ShapeError("rescaled_system: rescaling does not match operator");
  std::vector<Index> keep;
  std::vector<Vector> rows;
  for (Index i = 0; i < op.m(); ++i) {
    const Matrix a = op.measurement(i);
    if (a.cwiseAbs().maxCoeff() == 0.0) continue;
    const Matrix t = l * a * r;
    rows.push_back(vec(t));
    keep.push_back(i);
  }
  RescaledSystem sys;
  sys.A.resize(static_cast<Index>(rows.size()), op.d1() * op.d2());
  sys.b.resize(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    sys.A.row(static_cast<Index>(k)) = rows[k].transpose();
    sys.b(static_cast<Index>(k)) = b(keep[k]);
  }
  return sys;
}

SolverReport solve_nuclear_equality(const ConvexProgramSpec& spec, const SolverConfig& cfg) {
  if (spec.family != ProgramFamily::nuclear_equality)
    throw ParameterError("solve_nuclear_equality: wrong program family");
  SolverReport rep = equality_core(spec, cfg, false);
  rep.family = spec.family;
  return rep;
}

SolverReport solve_nuclear_symmetric(const ConvexProgramSpec& spec, const SolverConfig& cfg) {
  if (spec.family != ProgramFamily::nuclear_symmetric)
    throw ParameterError("solve_nuclear_symmetric: wrong program family");
  if (!spec.op || !spec.op->symmetric_measurements())
    throw ParameterError("solve_nuclear_symmetric: operator must be quadratic or split-bilinear");
  SolverReport rep = equality_core(spec, cfg, true);
  rep.family = spec.family;
  return rep;
}

SolverReport solve_nuclear_ball(const ConvexProgramSpec& spec, const SolverConfig& cfg) {
  if (spec.family != ProgramFamily::nuclear_ball)
    throw ParameterError("solve_nuclear_ball: wrong program family");
  cfg.validate();
  if (!spec.op) throw ParameterError("program has no operator");
  require_nonsingular(spec.rescaling);
  const SensingOperator& op = *spec.op;
  const Index d1 = op.d1();
  const Index d2 = op.d2();
  const RescaledSystem sys = rescaled_system(op, spec.rescaling, spec.b);
  SolverReport rep;
  rep.family = spec.family;
  rep.final_rho = cfg.rho;

  const Index m = sys.A.rows();
  const Index n = sys.A.cols();
  if (m == 0 || spec.radius >= sys.b.norm()) {
    // The origin is feasible.
    rep.X_hat = Matrix::Zero(d1, d2);
    rep.converged = true;
    rep.feasibility = 0.0;
    rep.objective = 0.0;
    return rep;
  }

  // Normalize the operator to unit mean squared singular value and X to O(1).
  const double c = sys.A.norm() / std::sqrt(static_cast<double>(std::min(m, n)));
  const Matrix a = sys.A / c;
  const double xscale = (sys.b.norm() / c) * std::sqrt(static_cast<double>(n) / std::min(m, n));
  const Vector bn = sys.b / (c * xscale);
  const double rad = spec.radius / (c * xscale);

  // (I + A^T A)^{-1} via whichever Gram is smaller.
  const bool primal_gram = n <= m;
  Eigen::LLT<Matrix> llt;
  if (primal_gram) {
    llt.compute(Matrix::Identity(n, n) + a.transpose() * a);
  } else {
    llt.compute(Matrix::Identity(m, m) + a * a.transpose());
  }
  auto solve_z = [&](const Vector& rhs) -> Vector {
    if (primal_gram) return llt.solve(rhs);
    return rhs - a.transpose() * llt.solve(a * rhs);
  };

  const double sq = std::sqrt(static_cast<double>(n + m));
  Vector z = Vector::Zero(n);
  Vector az = Vector::Zero(m);
  Vector x = z;
  Vector w = az;
  Vector u1 = Vector::Zero(n);
  Vector u2 = Vector::Zero(m);
  double rho = cfg.rho;
  double r = 0.0;
  double s = 0.0;
  long it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    x = vec(svt(unvec(z - u1, d1, d2), 1.0 / rho));
    w = project_l2_ball(az - u2, bn, rad);
    const Vector z_old = z;
    const Vector az_old = az;
    z = solve_z(x + u1 + a.transpose() * (w + u2));
    az = a * z;
    u1 += x - z;
    u2 += w - az;
    r = std::sqrt((x - z).squaredNorm() + (w - az).squaredNorm());
    s = rho * std::sqrt((z - z_old).squaredNorm() + (az - az_old).squaredNorm());
    const double eps_pri =
        sq * cfg.abs_tol + cfg.rel_tol * std::max(std::sqrt(x.squaredNorm() + w.squaredNorm()),
                                                   std::sqrt(z.squaredNorm() + az.squaredNorm()));
    const double eps_dual =
        sq * cfg.abs_tol + cfg.rel_tol * rho * (u1 + a.transpose() * u2).norm();
    if (r <= eps_pri && s <= eps_dual) {
      rep.converged = true;
      break;
    }
    if (it % kHistoryStride == 0) rep.residual_history.push_back(r + s);
    balance(cfg, it, r, s, rho, u1, u2);
  }
  rep.iterations = std::min(it, cfg.max_iter);
  rep.primal_residual = r;
  rep.dual_residual = s;
  rep.final_rho = rho;
  rep.X_hat = xscale * unvec(x, d1, d2);
  rep.feasibility =
      std::max(0.0, (sys.A * vec(rep.X_hat) - sys.b).norm() - spec.radius);
  rep.objective = nuclear_norm(rep.X_hat);
  return rep;
}

SolverReport solve_robust_pca(const ConvexProgramSpec& spec, const SolverConfig& cfg) {
  if (spec.family != ProgramFamily::nuclear_l1ball)
    throw ParameterError("solve_robust_pca: wrong program family");
  cfg.validate();
  const Matrix& y = spec.Y;
  SolverReport rep;
  rep.family = spec.family;
  rep.final_rho = cfg.rho;
  if (spec.radius == 0.0) {
    // The feasible set is the single point Y.
    rep.X_hat = y;
    rep.converged = true;
    rep.objective = nuclear_norm(y);
    return rep;
  }
  if (spec.radius >= y.cwiseAbs().sum()) {
    rep.X_hat = Matrix::Zero(y.rows(), y.cols());
    rep.converged = true;
    return rep;
  }
  const double scale = y.norm();
  const Matrix yn = y / scale;
  const double tau = spec.radius / scale;
  const double sqn = std::sqrt(static_cast<double>(y.size()));
  Matrix z = yn;
  Matrix u = Matrix::Zero(y.rows(), y.cols());
  Matrix x = z;
  double rho = cfg.rho;
  double r = 0.0;
  double s = 0.0;
  long it = 0;
  for (it = 1; it <= cfg.max_iter; ++it) {
    x = svt(z - u, 1.0 / rho);
    const Matrix z_old = z;
    z = yn - project_l1_ball(yn - (x + u), tau);
    u += x - z;
    r = (x - z).norm();
    s = rho * (z - z_old).norm();
    const double eps_pri = sqn * cfg.abs_tol + cfg.rel_tol * std::max(x.norm(), z.norm());
    const double eps_dual = sqn * cfg.abs_tol + cfg.rel_tol * rho * u.norm();
    if (r <= eps_pri && s <= eps_dual) {
      rep.converged = true;
      break;
    }
    if (it % kHistoryStride == 0) rep.residual_history.push_back(r + s);
    balance(cfg, it, r, s, rho, u);
  }
  rep.iterations = std::min(it, cfg.max_iter);
  rep.primal_residual = r;
  rep.dual_residual = s;
  rep.final_rho = rho;
  rep.X_hat = scale * x;
  rep.feasibility = std::max(0.0, (y - rep.X_hat).cwiseAbs().sum() - spec.radius);
  rep.objective = nuclear_norm(rep.X_hat);
  return rep;
}

SolverReport solve_weighted_lp(const ConvexProgramSpec& spec, const SolverConfig& cfg) {
  if (spec.family != ProgramFamily::weighted_lp)
    throw ParameterError("solve_weighted_lp: wrong program family");
  cfg.validate();
  if (!spec.op || spec.op->kind() != EnsembleKind::hadamard_columns)
    throw ParameterError("solve_weighted_lp: operator must be hadamard-columns");
  if (!(spec.p >= 1.0 && spec.p < 2.0)) throw ParameterError("solve_weighted_lp: p in [1, 2)");
  const Matrix& a = std::get<SensingOperator::Columns>(spec.op->payload()).design;
  const Index d = a.cols();
  SolverReport rep;
  rep.family = spec.family;
  rep.final_rho = cfg.rho;

  AffineProjector proj(a, spec.b);
  rep.rank_deficient = proj.rank_deficient();
  rep.inconsistent = proj.inconsistent();
  const double scale = proj.anchor().norm();
  // The minimizer is invariant to a common positive factor on the weights.
  const Vector wts = spec.weights / spec.weights.mean();
  if (scale == 0.0 || proj.rank() == d) {
    rep.X_hat = proj.anchor();
    rep.converged = true;
  } else {
    const AffineProjector pn = proj.scaled(1.0 / scale);
    const double sqn = std::sqrt(static_cast<double>(d));
    Vector z = pn.anchor();
    Vector u = Vector::Zero(d);
    Vector x = z;
    double rho = cfg.rho;
    double r = 0.0;
    double s = 0.0;
    long it = 0;
    for (it = 1; it <= cfg.max_iter; ++it) {
      const Vector v = z - u;
      for (Index i = 0; i < d; ++i) x(i) = prox_power(v(i), wts(i), spec.p, 1.0 / rho);
      const Vector z_old = z;
      z = pn.project(x + u);
      u += x - z;
      r = (x - z).norm();
      s = rho * (z - z_old).norm();
      const double eps_pri = sqn * cfg.abs_tol + cfg.rel_tol * std::max(x.norm(), z.norm());
      const double eps_dual = sqn * cfg.abs_tol + cfg.rel_tol * rho * u.norm();
      if (r <= eps_pri && s <= eps_dual) {
        rep.converged = true;
        break;
      }
      if (it % kHistoryStride == 0) rep.residual_history.push_back(r + s);
      balance(cfg, it, r, s, rho, u);
    }
    rep.iterations = std::min(it, cfg.max_iter);
    rep.primal_residual = r;
    rep.dual_residual = s;
    rep.final_rho = rho;
    rep.X_hat = scale * x;
  }
  rep.feasibility = (a * rep.X_hat.col(0) - spec.b).norm();
  rep.objective = spec.weights.dot(rep.X_hat.col(0).cwiseAbs().array().pow(spec.p).matrix());
  return rep;
}

SolverReport solve(const ConvexProgramSpec& spec, const SolverConfig& cfg) {
  switch (spec.family) {
    case ProgramFamily::nuclear_equality: return solve_nuclear_equality(spec, cfg);
    case ProgramFamily::nuclear_ball: return solve_nuclear_ball(spec, cfg);
    case ProgramFamily::nuclear_l1ball: return solve_robust_pca(spec, cfg);
    case ProgramFamily::nuclear_symmetric: return solve_nuclear_symmetric(spec, cfg);
    case ProgramFamily::weighted_lp: return solve_weighted_lp(spec, cfg);
  }
  throw ParameterError("solve: unknown program family");
}

}  // namespace flatmin
