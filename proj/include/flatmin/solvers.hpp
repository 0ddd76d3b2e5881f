#pragma once

#include "flatmin/rescaling.hpp"

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace flatmin {

enum class ProgramFamily {
  nuclear_equality,   // min ||X||_*  s.t. A(D1^{-1} X D2^{-1}) = b
  nuclear_ball,       // min ||X||_*  s.t. ||A(D1^{-1} X D2^{-1}) - b|| <= radius
  nuclear_l1ball,     // min ||X||_*  s.t. ||Y - X||_1 <= radius          (robust PCA)
  nuclear_symmetric,  // nuclear_equality over symmetric X, single D
  weighted_lp,        // min sum_i w_i |x_i|^p  s.t. A x = b
};

std::string to_string(ProgramFamily f);

/// ADMM settings shared by every family.
struct SolverConfig {
  double rho = 1.0;
  double balance_mu = 10.0;      // adapt rho when one residual exceeds mu times the other
  double balance_factor = 2.0;
  long balance_every = 10;       // iterations between adaptation checks
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  long max_iter = 100000;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static SolverConfig from_json(const nlohmann::json& j);
};

struct CertificateReport {
  Index rank = 0;
  double tangent_residual = 0.0;   // ||P_T(A~* y) - U V^T||_F
  double offtangent_opnorm = 0.0;  // ||P_{T-perp}(A~* y)||_op
  double duality_gap = 0.0;        // primal_value - dual_value
  double primal_value = 0.0;       // ||X_hat||_*
  double dual_value = 0.0;         // best dual objective of the scaled candidate
  double lambda = 0.0;             // robust PCA only: multiplier of the l1 constraint

  /// Strictly dual feasible off the tangent space and a small gap.
  bool certifies(double gap_tol = 1e-6, double margin = 1e-3) const {
    return offtangent_opnorm <= 1.0 - margin && duality_gap <= gap_tol;
  }
  nlohmann::json to_json() const;
};

inline constexpr long kHistoryStride = 100;

struct SolverReport {
  ProgramFamily family = ProgramFamily::nuclear_equality;
  Matrix X_hat;  // d1 x d2, or d x 1 for weighted_lp
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double feasibility = 0.0;  // family constraint violation at X_hat (0 when satisfied)
  long iterations = 0;
  double objective = 0.0;
  double final_rho = 0.0;
  bool converged = false;
  bool rank_deficient = false;  // constraint Gram was singular, pseudo-projection used
  bool inconsistent = false;    // b outside the range of the rescaled operator
  std::optional<CertificateReport> certificate;
  /// Combined residual r + s sampled every kHistoryStride iterations.
  std::vector<double> residual_history;

  nlohmann::json to_json() const;
};

/// Everything a solve needs. Built with the factory functions below.
struct ConvexProgramSpec {
  ProgramFamily family = ProgramFamily::nuclear_equality;
  std::optional<SensingOperator> op;
  RescalingPair rescaling;
  Vector b;
  Matrix Y;  // robust PCA observation
  double radius = 0.0;
  Vector weights;  // weighted_lp
  double p = 1.0;  // weighted_lp exponent
};

ConvexProgramSpec equality_program(const SensingOperator& op, const RescalingPair& pair,
                                   const Vector& b);
ConvexProgramSpec ball_program(const SensingOperator& op, const RescalingPair& pair,
                               const Vector& b, double radius);
ConvexProgramSpec robust_pca_program(const Matrix& Y, double radius);
ConvexProgramSpec symmetric_program(const SensingOperator& op, const RescalingPair& pair,
                                    const Vector& b);
/// Weighted l^p program with an explicit exponent p in [1, 2).
ConvexProgramSpec weighted_lp_program(const SensingOperator& op, const Vector& weights,
                                      const Vector& b, double p);
/// The depth-k program: weights = diagonal of the depth D, p = 2 - 2/k. Needs k >= 2.
ConvexProgramSpec depth_program(const SensingOperator& op, const RescalingPair& pair,
                                const Vector& b, int k);

/// The rescaled constraint matrix: row i = vec(D1^{-1} A_i D2^{-1}). Rows whose
/// measurement matrix vanishes (unobserved completion entries) are dropped
/// together with their entries of b.
struct RescaledSystem {
  Matrix A;
  Vector b;
};
RescaledSystem rescaled_system(const SensingOperator& op, const RescalingPair& pair,
                               const Vector& b);

SolverReport solve_nuclear_equality(const ConvexProgramSpec& spec, const SolverConfig& cfg = {});
SolverReport solve_nuclear_ball(const ConvexProgramSpec& spec, const SolverConfig& cfg = {});
SolverReport solve_robust_pca(const ConvexProgramSpec& spec, const SolverConfig& cfg = {});
SolverReport solve_nuclear_symmetric(const ConvexProgramSpec& spec, const SolverConfig& cfg = {});
SolverReport solve_weighted_lp(const ConvexProgramSpec& spec, const SolverConfig& cfg = {});

/// Dispatch on spec.family.
SolverReport solve(const ConvexProgramSpec& spec, const SolverConfig& cfg = {});

/// Dual certificate for an equality-type (equality or symmetric) or robust PCA
/// solution; see CertificateReport. Rank is detected with the 1e-8 relative
/// threshold.
CertificateReport verify_optimality(const ConvexProgramSpec& spec, const Matrix& X_hat);

}  // namespace flatmin
