#pragma once

#include "flatmin/rescaling.hpp"

#include <vector>

namespace flatmin {

enum class FactorShape { asymmetric, signed_symmetric, hadamard };

/// Candidate solution of a factored problem.
///   asymmetric:       X = L R^T            (first = L, second = R)
///   signed_symmetric: X = U1 U1^T - U2 U2^T (first = U1, second = U2)
///   hadamard:         x = v_1 * ... * v_k   (entrywise, v_list)
struct FactorPair {
  FactorShape shape = FactorShape::asymmetric;
  Matrix first;
  Matrix second;
  std::vector<Vector> v_list;

  static FactorPair asymmetric(Matrix L, Matrix R);
  static FactorPair signed_symmetric(Matrix U1, Matrix U2);
  static FactorPair hadamard(std::vector<Vector> v);

  const Matrix& L() const { return first; }
  const Matrix& R() const { return second; }
  const Matrix& U1() const { return first; }
  const Matrix& U2() const { return second; }

  /// The represented matrix (d x 1 for the Hadamard shape).
  Matrix product() const;
};

/// Loss of the factored problem:
///   asymmetric        ||A(L R^T) - b||^2
///   signed_symmetric  (1/m) ||A(U1 U1^T - U2 U2^T) - b||^2
///   hadamard          (1/m) ||A (v_1 * ... * v_k) - b||^2
double factored_loss(const SensingOperator& op, const FactorPair& f, const Vector& b);

/// Second directional derivative of factored_loss at f along a direction of
/// the same shape as f. Exact (includes the residual term).
double hessian_form(const SensingOperator& op, const FactorPair& f, const Vector& b,
                    const FactorPair& direction);

inline constexpr double kInterpolationTolerance = 1e-8;

/// The Hessian trace from its definition: the quadratic form summed over every
/// coordinate basis direction. Asymmetric factors use weights 1/d1 on the L
/// block and 1/d2 on the R block; the other shapes return the plain trace.
/// Throws PreconditionError unless ||residual|| <= 1e-8 or allow_noninterpolating.
double scaled_trace_direct(const SensingOperator& op, const FactorPair& f, const Vector& b,
                           bool allow_noninterpolating = false);

/// Closed forms of the same quantity:
///   asymmetric        2 m (||D1 L||^2 + ||D2 R||^2)
///   signed_symmetric  8 d (||D U1||^2 + ||D U2||^2)
///   hadamard          2 sum_h ||sqrt(D) prod_{i != h} v_i||^2
double scaled_trace_closed(const SensingOperator& op, const RescalingPair& pair,
                           const FactorPair& f);

/// sum_h ||sqrt(D) prod_{i != h} v_i||^2 for a diagonal D; half the Hadamard trace.
double hadamard_factor_energy(const Vector& d_diag, const std::vector<Vector>& v_list);

/// Reduced scaled trace of the smoothed robust PCA model, 2 (||L||^2 + ||R||^2).
double rpca_scaled_trace(const Matrix& L, const Matrix& R);

}  // namespace flatmin
