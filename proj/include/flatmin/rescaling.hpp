#pragma once

#include "flatmin/ensembles.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include <json.hpp>

namespace flatmin {

enum class RescalingShape {
  pair,       // D1, D2 for d1 x d2 matrices
  symmetric,  // single D for symmetric measurements (D1 == D2)
  diagonal,   // depth model: D = (1/m) diag(a_j^T a_j), D2 is the 1 x 1 identity
};

/// Rescaling matrices built from the second moments of the measurements.
struct RescalingPair {
  RescalingShape shape = RescalingShape::pair;
  Matrix D1;
  Matrix D2;
  double eig_min1 = 0.0;
  double eig_max1 = 0.0;
  double eig_min2 = 0.0;
  double eig_max2 = 0.0;
  /// alpha_max / alpha_min over both sides, +inf when either side is singular.
  double kappa = std::numeric_limits<double>::infinity();

  bool singular() const { return !std::isfinite(kappa); }
  double alpha_min() const;
  double alpha_max() const;
  /// Inverses; throw PreconditionError when singular.
  Matrix D1_inverse() const;
  Matrix D2_inverse() const;

  nlohmann::json summary() const;
};

/// D1 = ((1/(m d2)) sum A_i A_i^T)^{1/2}, D2 = ((1/(m d1)) sum A_i^T A_i)^{1/2};
/// a single D for quadratic and split-bilinear operators; the diagonal depth
/// matrix for hadamard-columns operators.
RescalingPair build_rescaling(const SensingOperator& op);

/// D1 = I, D2 = I (the plain nuclear-norm baseline).
RescalingPair identity_rescaling(Index d1, Index d2);

/// Assemble a pair from explicit matrices (tests, custom rescalings).
RescalingPair make_rescaling(const Matrix& D1, const Matrix& D2,
                             RescalingShape shape = RescalingShape::pair);

/// The raw second-moment sums (sum A_i A_i^T, sum A_i^T A_i) by direct looping.
/// Oracle for the structured formulas inside build_rescaling.
std::pair<Matrix, Matrix> second_moments_bruteforce(const SensingOperator& op);

enum class PNorm { l1, l2 };

std::string to_string(PNorm p);

struct RipEstimate {
  PNorm p_norm = PNorm::l2;
  Index rank_tested = 1;
  Index trials = 0;
  double delta1_hat = 0.0;  // smallest observed ratio
  double delta2_hat = 0.0;  // largest observed ratio
  double mean_ratio = 0.0;

  nlohmann::json summary() const;
};

/// Sampled bracket of the RIP constants: ratios ||A(X)||_p / (m^{1/p} ||X||_F)
/// over random rank-r unit-Frobenius X (Gaussian factors). This is an inner
/// bracket only; the true constants can be worse.
RipEstimate estimate_rip(const SensingOperator& op, Index r, Index trials, PNorm p_norm,
                         std::uint64_t seed);

/// The same estimate for the rescaled map X -> A(D1^{-1} X D2^{-1}).
RipEstimate estimate_rip(const SensingOperator& op, const RescalingPair& pair, Index r,
                         Index trials, PNorm p_norm, std::uint64_t seed);

/// Constants for the rescaled map implied by the original ones:
/// (delta1 / alpha_max^2, delta2 / alpha_min^2).
RipEstimate transfer_rip(const RipEstimate& est, const RescalingPair& pair);

}  // namespace flatmin
