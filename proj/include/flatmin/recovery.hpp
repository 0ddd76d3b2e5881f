#pragma once

#include "flatmin/hessian.hpp"
#include "flatmin/solvers.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace flatmin {

struct RecoveryConfig {
  SolverConfig solver;
  double success_threshold = 1e-6;
  bool run_baseline = true;  // also solve the plain nuclear program (D = I)
  bool certify = false;      // attach dual certificates to the solver reports
};

/// Outcome of one relaxation solve plus factor extraction and metrics.
struct RecoveryReport {
  Matrix X_hat;        // solution of the rescaled program
  Matrix X_recovered;  // D1^{-1} X_hat D2^{-1} (or the family analog)
  FactorPair factors;
  double fro_error = std::numeric_limits<double>::quiet_NaN();
  double nuc_error = std::numeric_limits<double>::quiet_NaN();  // ||X_rec - M||_* / ||M||_*
  bool success = false;
  double balancedness = std::numeric_limits<double>::quiet_NaN();
  double norm_ratio = std::numeric_limits<double>::quiet_NaN();
  double generalization_gap = std::numeric_limits<double>::quiet_NaN();
  bool singular_D = false;
  double kappa = std::numeric_limits<double>::infinity();

  SolverReport solver;
  std::optional<SolverReport> baseline;
  double baseline_fro_error = std::numeric_limits<double>::quiet_NaN();
  bool baseline_success = false;
};

/// L = D1^{-1} U sqrt(S), R = D2^{-1} V sqrt(S) from the SVD of X_hat,
/// zero-padded to k columns.
FactorPair extract_factors(const Matrix& X_hat, const RescalingPair& pair, Index k);

/// Signed eigen-split X = U1 U1^T - U2 U2^T with U1 = P+ sqrt(L+), U2 = P- sqrt(L-),
/// zero-padded to k1 and k2 columns. Eigenvalues with |lambda| <= 1e-8 max|lambda|
/// count toward neither side.
struct EigenSplit {
  bool feasible = false;
  Index positive = 0;  // number of positive eigenvalues found
  Index negative = 0;
  FactorPair factors;  // valid only when feasible
};
EigenSplit eigen_count_split(const Matrix& X, Index k1, Index k2);

/// The symmetric analog of extract_factors: U_i = [D^{-1} P_i sqrt(L_i), 0].
FactorPair extract_symmetric_factors(const Matrix& X_hat, const RescalingPair& pair, Index k1,
                                     Index k2);

/// Balanced Hadamard factorization: |v_h| = |x|^{1/k}, sign carried by v_1.
std::vector<Vector> hadamard_split(const Vector& x, int k);

/// tr(U1 U1^T - U2 U2^T - M): the expected prediction gap under x ~ N(0, I).
double generalization_gap(const Matrix& U1, const Matrix& U2, const Matrix& M);

/// ||L^T L - R^T R||_* / ||M||_*.
double balancedness(const FactorPair& f, const Matrix& M);

/// (||L||^2 + ||R||^2) / (2 ||X_nuc||_*).
double norm_ratio(const FactorPair& f, const Matrix& X_nuc);

struct GrowthCheck {
  double lhs = 0.0;  // ||X - M||_*
  double rhs = 0.0;  // 8 (1 + sqrt(6 r / p)) (||X||_* - ||M||_*)
  double suboptimality_bound = 0.0;  // (kappa^2 - 1) ||M||_*
  double p = 0.0;
  bool holds() const { return lhs <= rhs * (1.0 + 1e-12) + 1e-12; }
};
/// Evaluate both sides of the completion growth inequality for a feasible X.
/// p is taken from the operator's sampling provenance, or the observed fraction.
GrowthCheck completion_growth_check(const SensingOperator& op, const Matrix& M, const Matrix& X);

struct Incoherence {
  double mu = 0.0;         // row-norm incoherence
  double mu_strong = 0.0;  // adds the entrywise bound on U V^T
};
Incoherence incoherence(const Matrix& M, Index r);

/// Asymmetric families (gaussian, bilinear, completion, identity): solve the
/// flat relaxation, extract width-k factors, and compute every metric.
RecoveryReport flat_pipeline(const SensingOperator& op, const GroundTruth& truth, Index k,
                             const RecoveryConfig& cfg = {});

/// Quadratic-activation network: symmetric relaxation with the single D,
/// signed factors of widths k1, k2.
RecoveryReport symmetric_pipeline(const SensingOperator& op, const GroundTruth& truth, Index k1,
                                  Index k2, const RecoveryConfig& cfg = {});

/// Robust PCA from Y = M + S with radius ||S||_1.
RecoveryReport rpca_pipeline(const Matrix& Y, const Matrix& M, double radius, Index k,
                             const RecoveryConfig& cfg = {});

/// Noisy sensing: ball programs (flat and plain) with the given radius.
struct NoisyReport {
  double flat_error = 0.0;      // ||D1^{-1} X_hat D2^{-1} - M||_F
  double baseline_error = 0.0;  // ||X_nuc - M||_F
  bool singular_D = false;
  bool converged = false;
};
NoisyReport noisy_pipeline(const SensingOperator& op, const Matrix& M, const Vector& b,
                           double radius, const RecoveryConfig& cfg = {});

/// Depth-k Hadamard recovery through the weighted l^{2-2/k} program.
struct DepthReport {
  Vector x_hat;
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  bool singular_D = false;
  bool converged = false;
  long iterations = 0;
};
DepthReport depth_pipeline(const SensingOperator& op, const Vector& x_truth, int k,
                           const RecoveryConfig& cfg = {});

}  // namespace flatmin
