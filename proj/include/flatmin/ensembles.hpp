#pragma once

#include "flatmin/numlin.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace flatmin {

enum class EnsembleKind {
  gaussian,
  bilinear,
  completion,
  quadratic,
  hadamard_columns,
  identity,
  split_bilinear,
};

std::string to_string(EnsembleKind kind);
EnsembleKind ensemble_kind_from_string(const std::string& name);

/// A linear map from d1 x d2 matrices to R^m, X -> (<A_1, X>, ..., <A_m, X>).
///
/// Payloads are stored in the cheapest faithful form: Gaussian measurement
/// matrices as rows of an m x (d1 d2) matrix, bilinear and quadratic
/// measurements as their vectors, completion as a 0/1 mask with m = d1 d2.
/// The hadamard-columns kind acts on vectors, represented as d x 1 matrices.
/// Operators are immutable once built.
class SensingOperator {
 public:
  struct DenseRows {
    Matrix rows;  // m x (d1 d2), row i = vec(A_i) in column-major order
  };
  struct RankOne {
    Matrix left;   // d1 x m
    Matrix right;  // d2 x m
  };
  struct Mask {
    Matrix mask;  // d1 x d2, entries 0/1
  };
  struct Quadratic {
    Matrix features;  // d x m, A_i = x_i x_i^T
  };
  struct Columns {
    Matrix design;  // m x d
  };
  struct Identity {};
  using Payload = std::variant<DenseRows, RankOne, Mask, Quadratic, Columns, Identity>;

  SensingOperator(EnsembleKind kind, Index d1, Index d2, Payload payload, std::uint64_t seed);

  EnsembleKind kind() const { return kind_; }
  Index d1() const { return d1_; }
  Index d2() const { return d2_; }
  Index m() const { return m_; }
  std::uint64_t seed() const { return seed_; }
  const Payload& payload() const { return payload_; }

  /// True when every A_i is symmetric by construction.
  bool symmetric_measurements() const {
    return kind_ == EnsembleKind::quadratic || kind_ == EnsembleKind::split_bilinear;
  }

  Vector forward(const Matrix& x) const;
  Matrix adjoint(const Vector& y) const;

  /// The i-th measurement matrix A_i (d1 x d2).
  Matrix measurement(Index i) const;
  /// Every A_i formed densely. Debug and oracle use only.
  std::vector<Matrix> materialize() const;

  /// Sampling parameters used to regenerate this operator, if any.
  struct Provenance {
    double m_or_p = 0.0;
    std::optional<std::uint64_t> source_seed;  // split-bilinear: seed of the quadratic source
    Index source_m = 0;
    bool dropped_odd_tail = false;
  };
  const Provenance& provenance() const { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = std::move(p); }

  /// JSON descriptor {kind, d1, d2, m_or_p, seed}; the payload is never stored.
  nlohmann::json descriptor() const;
  static SensingOperator from_descriptor(const nlohmann::json& j);

 private:
  EnsembleKind kind_;
  Index d1_;
  Index d2_;
  Index m_;
  std::uint64_t seed_;
  Payload payload_;
  Provenance provenance_;
};

/// Sample an operator. m_or_p is a measurement count, except for completion
/// where it is the Bernoulli observation probability in (0, 1]. identity and
/// completion ignore it as a count (m = d1 d2). hadamard-columns uses d1 as the
/// signal dimension and requires d2 == 1.
SensingOperator sample_ensemble(EnsembleKind kind, Index d1, Index d2, double m_or_p,
                                std::uint64_t seed);

/// Operators from explicit payloads (tests, hand-built instances).
SensingOperator operator_from_matrices(const std::vector<Matrix>& measurements);
SensingOperator bilinear_from_vectors(const Matrix& left, const Matrix& right);
SensingOperator quadratic_from_features(const Matrix& features);
SensingOperator completion_from_mask(const Matrix& mask);
SensingOperator columns_from_design(const Matrix& design);

/// Pair consecutive quadratic measurements into the bilinear map
/// [A_1(Z)]_i = ((x_{2i-1} + x_{2i})/sqrt2)^T Z ((x_{2i-1} - x_{2i})/sqrt2).
/// The operator acts through the symmetric part of Z, so each measurement
/// matrix is (x_{2i-1} x_{2i-1}^T - x_{2i} x_{2i}^T)/2. An odd trailing
/// measurement is dropped and flagged in the provenance.
SensingOperator split_bilinear(const SensingOperator& quadratic);

enum class TruthKind { low_rank, symmetric_signed, sparse_vector };

struct GroundTruth {
  TruthKind kind = TruthKind::low_rank;
  Matrix matrix;  // d1 x d2, or d x 1 for sparse vectors
  Index rank = 0;  // r for matrices, sparsity for vectors
  Matrix left_factor;   // low-rank: d1 x r;  symmetric: U (d x r)
  Matrix right_factor;  // low-rank: d2 x r
  Vector output_weights;  // symmetric: v with r1 positive and r2 negative entries
};

/// M = G1 G2^T with Gaussian factors, rescaled to unit Frobenius norm when asked.
GroundTruth sample_low_rank(Index d1, Index d2, Index r, bool unit_norm, std::uint64_t seed);

/// M = U diag(v) U^T with v = (1 x r1, -1 x r2), U Gaussian.
GroundTruth sample_symmetric_signed(Index d, Index r1, Index r2, bool unit_norm,
                                    std::uint64_t seed);

/// x with its first r coordinates equal to one.
GroundTruth leading_ones_vector(Index d, Index r);

}  // namespace flatmin
