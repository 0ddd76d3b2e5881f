#include "flatmin/ensembles.hpp"

#include "flatmin/rng.hpp"

#include <cmath>
#include <string>
#include <type_traits>

namespace flatmin {
namespace {

Matrix gaussian_matrix(Rng& rng, Index rows, Index cols) {
  // Explicit column-major fill so the draw order is fixed.
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = rng.normal();
  return g;
}

Index payload_m(EnsembleKind kind, Index d1, Index d2, const SensingOperator::Payload& p) {
  return std::visit(
      [&](const auto& v) -> Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SensingOperator::DenseRows>) {
          if (v.rows.cols() != d1 * d2) throw ShapeError("gaussian payload: row length != d1*d2");
          return v.rows.rows();
        } else if constexpr (std::is_same_v<T, SensingOperator::RankOne>) {
          if (v.left.rows() != d1 || v.right.rows() != d2 || v.left.cols() != v.right.cols())
            throw ShapeError("rank-one payload: vector dimensions do not match");
          return v.left.cols();
        } else if constexpr (std::is_same_v<T, SensingOperator::Mask>) {
          if (v.mask.rows() != d1 || v.mask.cols() != d2) throw ShapeError("mask shape");
          for (Index i = 0; i < v.mask.size(); ++i)
            if (v.mask(i) != 0.0 && v.mask(i) != 1.0)
              throw ParameterError("completion mask must be 0/1");
          return d1 * d2;
        } else if constexpr (std::is_same_v<T, SensingOperator::Quadratic>) {
          if (d1 != d2 || v.features.rows() != d1) throw ShapeError("quadratic payload shape");
          return v.features.cols();
        } else if constexpr (std::is_same_v<T, SensingOperator::Columns>) {
          if (d2 != 1 || v.design.cols() != d1) throw ShapeError("design must be m x d, d2 = 1");
          return v.design.rows();
        } else {
          (void)kind;
          return d1 * d2;
        }
      },
      p);
}

bool payload_matches(EnsembleKind kind, const SensingOperator::Payload& p) {
  switch (kind) {
    case EnsembleKind::gaussian:
      return std::holds_alternative<SensingOperator::DenseRows>(p);
    case EnsembleKind::bilinear:
    case EnsembleKind::split_bilinear:
      return std::holds_alternative<SensingOperator::RankOne>(p);
    case EnsembleKind::completion:
      return std::holds_alternative<SensingOperator::Mask>(p);
    case EnsembleKind::quadratic:
      return std::holds_alternative<SensingOperator::Quadratic>(p);
    case EnsembleKind::hadamard_columns:
      return std::holds_alternative<SensingOperator::Columns>(p);
    case EnsembleKind::identity:
      return std::holds_alternative<SensingOperator::Identity>(p);
  }
  return false;
}

}  // namespace

std::string to_string(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::gaussian: return "gaussian";
    case EnsembleKind::bilinear: return "bilinear";
    case EnsembleKind::completion: return "completion";
    case EnsembleKind::quadratic: return "quadratic";
    case EnsembleKind::hadamard_columns: return "hadamard-columns";
    case EnsembleKind::identity: return "identity";
    case EnsembleKind::split_bilinear: return "split-bilinear";
  }
  return "unknown";
}

EnsembleKind ensemble_kind_from_string(const std::string& name) {
  for (EnsembleKind k : {EnsembleKind::gaussian, EnsembleKind::bilinear, EnsembleKind::completion,
                         EnsembleKind::quadratic, EnsembleKind::hadamard_columns,
                         EnsembleKind::identity, EnsembleKind::split_bilinear}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown ensemble kind '" + name + "'");
}

SensingOperator::SensingOperator(EnsembleKind kind, Index d1, Index d2, Payload payload,
                                 std::uint64_t seed)
    : kind_(kind), d1_(d1), d2_(d2), m_(0), seed_(seed), payload_(std::move(payload)) {
  if (d1 <= 0 || d2 <= 0) throw ParameterError("operator dimensions must be positive");
  if (!payload_matches(kind, payload_)) throw ParameterError("payload does not match kind");
  if ((kind == EnsembleKind::quadratic || kind == EnsembleKind::split_bilinear) && d1 != d2)
    throw ShapeError("symmetric measurement kinds need d1 == d2");
  m_ = payload_m(kind, d1, d2, payload_);
  if (m_ <= 0) throw ParameterError("operator has no measurements");
}

Vector SensingOperator::forward(const Matrix& x) const {
  if (x.rows() != d1_ || x.cols() != d2_) throw ShapeError("forward: input shape mismatch");
  return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseRows>) {
          return v.rows * Eigen::Map<const Vector>(x.data(), x.size());
        } else if constexpr (std::is_same_v<T, RankOne>) {
          if (kind_ == EnsembleKind::split_bilinear) {
            const Matrix s = 0.5 * (x + x.transpose());
            return (s * v.right).cwiseProduct(v.left).colwise().sum().transpose();
          }
          return (x * v.right).cwiseProduct(v.left).colwise().sum().transpose();
        } else if constexpr (std::is_same_v<T, Mask>) {
          const Matrix masked = v.mask.cwiseProduct(x);
          return Eigen::Map<const Vector>(masked.data(), masked.size());
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return (x * v.features).cwiseProduct(v.features).colwise().sum().transpose();
        } else if constexpr (std::is_same_v<T, Columns>) {
          return v.design * x.col(0);
        } else {
          return Eigen::Map<const Vector>(x.data(), x.size());
        }
      },
      payload_);
}

Matrix SensingOperator::adjoint(const Vector& y) const {
  if (y.size() != m_) throw ShapeError("adjoint: vector length != m");
  return std::visit(
      [&](const auto& v) -> Matrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseRows>) {
          const Vector flat = v.rows.transpose() * y;
          return Eigen::Map<const Matrix>(flat.data(), d1_, d2_);
        } else if constexpr (std::is_same_v<T, RankOne>) {
          const Matrix g = v.left * y.asDiagonal() * v.right.transpose();
          if (kind_ == EnsembleKind::split_bilinear) return 0.5 * (g + g.transpose());
          return g;
        } else if constexpr (std::is_same_v<T, Mask>) {
          return Eigen::Map<const Matrix>(y.data(), d1_, d2_).cwiseProduct(v.mask);
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return v.features * y.asDiagonal() * v.features.transpose();
        } else if constexpr (std::is_same_v<T, Columns>) {
          return v.design.transpose() * y;
        } else {
          return Eigen::Map<const Matrix>(y.data(), d1_, d2_);
        }
      },
      payload_);
}

Matrix SensingOperator::measurement(Index i) const {
  if (i < 0 || i >= m_) throw ParameterError("measurement index out of range");
  return std::visit(
      [&](const auto& v) -> Matrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseRows>) {
          const Vector row = v.rows.row(i).transpose();
          return Eigen::Map<const Matrix>(row.data(), d1_, d2_);
        } else if constexpr (std::is_same_v<T, RankOne>) {
          const Matrix g = v.left.col(i) * v.right.col(i).transpose();
          if (kind_ == EnsembleKind::split_bilinear) return 0.5 * (g + g.transpose());
          return g;
        } else if constexpr (std::is_same_v<T, Mask>) {
          Matrix a = Matrix::Zero(d1_, d2_);
          a(i % d1_, i / d1_) = v.mask(i % d1_, i / d1_);
          return a;
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return v.features.col(i) * v.features.col(i).transpose();
        } else if constexpr (std::is_same_v<T, Columns>) {
          return v.design.row(i).transpose();
        } else {
          Matrix a = Matrix::Zero(d1_, d2_);
          a(i % d1_, i / d1_) = 1.0;
          return a;
        }
      },
      payload_);
}

std::vector<Matrix> SensingOperator::materialize() const {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(m_));
  for (Index i = 0; i < m_; ++i) out.push_back(measurement(i));
  return out;
}

nlohmann::json SensingOperator::descriptor() const {
  nlohmann::json j;
  j["kind"] = to_string(kind_);
  j["d1"] = d1_;
  j["d2"] = d2_;
  j["m"] = m_;
  j["m_or_p"] = provenance_.m_or_p;
  j["seed"] = seed_;
  if (kind_ == EnsembleKind::split_bilinear) {
    j["source_m"] = provenance_.source_m;
    j["dropped_odd_tail"] = provenance_.dropped_odd_tail;
  }
  return j;
}

SensingOperator SensingOperator::from_descriptor(const nlohmann::json& j) {
  const EnsembleKind kind = ensemble_kind_from_string(j.at("kind").get<std::string>());
  const Index d1 = j.at("d1").get<Index>();
  const Index d2 = j.at("d2").get<Index>();
  const auto seed = j.at("seed").get<std::uint64_t>();
  if (kind == EnsembleKind::split_bilinear) {
    const Index source_m = j.at("source_m").get<Index>();
    return split_bilinear(
        sample_ensemble(EnsembleKind::quadratic, d1, d2, static_cast<double>(source_m), seed));
  }
  const double m_or_p = j.contains("m_or_p") ? j.at("m_or_p").get<double>()
                                             : static_cast<double>(j.at("m").get<Index>());
  return sample_ensemble(kind, d1, d2, m_or_p, seed);
}

SensingOperator sample_ensemble(EnsembleKind kind, Index d1, Index d2, double m_or_p,
                                std::uint64_t seed) {
  if (d1 <= 0 || d2 <= 0) throw ParameterError("sample_ensemble: dimensions must be positive");
  if (!std::isfinite(m_or_p)) throw ParameterError("sample_ensemble: non-finite m_or_p");
  auto count = [&]() -> Index {
    const double r = std::round(m_or_p);
    if (r < 1.0 || std::abs(r - m_or_p) > 1e-9)
      throw ParameterError("sample_ensemble: measurement count must be a positive integer");
    return static_cast<Index>(r);
  };
  Rng rng(seed);
  SensingOperator::Payload payload;
  switch (kind) {
    case EnsembleKind::gaussian: {
      const Index m = count();
      // Row i holds vec(A_i); draw A_i entries contiguously.
      Matrix rows(m, d1 * d2);
      for (Index i = 0; i < m; ++i)
        for (Index c = 0; c < d1 * d2; ++c) rows(i, c) = rng.normal();
      payload = SensingOperator::DenseRows{std::move(rows)};
      break;
    }
    case EnsembleKind::bilinear: {
      const Index m = count();
      Matrix left = gaussian_matrix(rng, d1, m);
      Matrix right = gaussian_matrix(rng, d2, m);
      payload = SensingOperator::RankOne{std::move(left), std::move(right)};
      break;
    }
    case EnsembleKind::completion: {
      if (!(m_or_p > 0.0 && m_or_p <= 1.0))
        throw ParameterError("sample_ensemble: completion probability must lie in (0, 1]");
      Matrix mask(d1, d2);
      for (Index j = 0; j < d2; ++j)
        for (Index i = 0; i < d1; ++i) mask(i, j) = rng.bernoulli(m_or_p) ? 1.0 : 0.0;
      payload = SensingOperator::Mask{std::move(mask)};
      break;
    }
    case EnsembleKind::quadratic: {
      if (d1 != d2) throw ShapeError("quadratic ensemble needs d1 == d2");
      payload = SensingOperator::Quadratic{gaussian_matrix(rng, d1, count())};
      break;
    }
    case EnsembleKind::hadamard_columns: {
      if (d2 != 1) throw ShapeError("hadamard-columns ensemble needs d2 == 1");
      const Index m = count();
      payload = SensingOperator::Columns{gaussian_matrix(rng, m, d1)};
      break;
    }
    case EnsembleKind::identity:
      payload = SensingOperator::Identity{};
      break;
    case EnsembleKind::split_bilinear: {
      auto op = split_bilinear(sample_ensemble(EnsembleKind::quadratic, d1, d2, m_or_p, seed));
      return op;
    }
  }
  SensingOperator op(kind, d1, d2, std::move(payload), seed);
  SensingOperator::Provenance prov;
  prov.m_or_p = m_or_p;
  op.set_provenance(prov);
  return op;
}

SensingOperator operator_from_matrices(const std::vector<Matrix>& measurements) {
  if (measurements.empty()) throw ParameterError("operator_from_matrices: no measurements");
  const Index d1 = measurements.front().rows();
  const Index d2 = measurements.front().cols();
  Matrix rows(static_cast<Index>(measurements.size()), d1 * d2);
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    const Matrix& a = measurements[i];
    if (a.rows() != d1 || a.cols() != d2) throw ShapeError("measurement shapes differ");
    rows.row(static_cast<Index>(i)) = Eigen::Map<const Vector>(a.data(), a.size()).transpose();
  }
  return SensingOperator(EnsembleKind::gaussian, d1, d2,
                         SensingOperator::DenseRows{std::move(rows)}, 0);
}

SensingOperator bilinear_from_vectors(const Matrix& left, const Matrix& right) {
  return SensingOperator(EnsembleKind::bilinear, left.rows(), right.rows(),
                         SensingOperator::RankOne{left, right}, 0);
}

SensingOperator quadratic_from_features(const Matrix& features) {
  return SensingOperator(EnsembleKind::quadratic, features.rows(), features.rows(),
                         SensingOperator::Quadratic{features}, 0);
}

SensingOperator completion_from_mask(const Matrix& mask) {
  return SensingOperator(EnsembleKind::completion, mask.rows(), mask.cols(),
                         SensingOperator::Mask{mask}, 0);
}

SensingOperator columns_from_design(const Matrix& design) {
  return SensingOperator(EnsembleKind::hadamard_columns, design.cols(), 1,
                         SensingOperator::Columns{design}, 0);
}

SensingOperator split_bilinear(const SensingOperator& quadratic) {
  if (quadratic.kind() != EnsembleKind::quadratic)
    throw ParameterError("split_bilinear: operator must be of quadratic kind");
  const auto& x = std::get<SensingOperator::Quadratic>(quadratic.payload()).features;
  const Index pairs = quadratic.m() / 2;
  if (pairs == 0) throw ParameterError("split_bilinear: need at least two measurements");
  const double s = 1.0 / std::sqrt(2.0);
  Matrix u(x.rows(), pairs);
  Matrix w(x.rows(), pairs);
  for (Index i = 0; i < pairs; ++i) {
    u.col(i) = s * (x.col(2 * i) + x.col(2 * i + 1));
    w.col(i) = s * (x.col(2 * i) - x.col(2 * i + 1));
  }
  SensingOperator op(EnsembleKind::split_bilinear, quadratic.d1(), quadratic.d2(),
                     SensingOperator::RankOne{std::move(u), std::move(w)}, quadratic.seed());
  SensingOperator::Provenance prov;
  prov.m_or_p = static_cast<double>(pairs);
  prov.source_seed = quadratic.seed();
  prov.source_m = quadratic.m();
  prov.dropped_odd_tail = (quadratic.m() % 2) != 0;
  op.set_provenance(prov);
  return op;
}

GroundTruth sample_low_rank(Index d1, Index d2, Index r, bool unit_norm, std::uint64_t seed) {
  if (d1 <= 0 || d2 <= 0 || r <= 0 || r > std::min(d1, d2))
    throw ParameterError("sample_low_rank: need 0 < r <= min(d1, d2)");
  Rng rng(seed);
  GroundTruth gt;
  gt.kind = TruthKind::low_rank;
  gt.rank = r;
  gt.left_factor = gaussian_matrix(rng, d1, r);
  gt.right_factor = gaussian_matrix(rng, d2, r);
  gt.matrix = gt.left_factor * gt.right_factor.transpose();
  if (unit_norm) {
    const double s = 1.0 / std::sqrt(gt.matrix.norm());
    gt.left_factor *= s;
    gt.right_factor *= s;
    gt.matrix = gt.left_factor * gt.right_factor.transpose();
  }
  return gt;
}

GroundTruth sample_symmetric_signed(Index d, Index r1, Index r2, bool unit_norm,
                                    std::uint64_t seed) {
  if (d <= 0 || r1 < 0 || r2 < 0 || r1 + r2 == 0 || r1 + r2 > d)
    throw ParameterError("sample_symmetric_signed: need 0 < r1 + r2 <= d");
  Rng rng(seed);
  GroundTruth gt;
  gt.kind = TruthKind::symmetric_signed;
  gt.rank = r1 + r2;
  gt.left_factor = gaussian_matrix(rng, d, r1 + r2);
  gt.output_weights = Vector::Ones(r1 + r2);
  gt.output_weights.tail(r2).setConstant(-1.0);
  gt.matrix = gt.left_factor * gt.output_weights.asDiagonal() * gt.left_factor.transpose();
  if (unit_norm) {
    gt.left_factor /= std::sqrt(gt.matrix.norm());
    gt.matrix = gt.left_factor * gt.output_weights.asDiagonal() * gt.left_factor.transpose();
  }
  return gt;
}

GroundTruth leading_ones_vector(Index d, Index r) {
  if (d <= 0 || r <= 0 || r > d) throw ParameterError("leading_ones_vector: need 0 < r <= d");
  GroundTruth gt;
  gt.kind = TruthKind::sparse_vector;
  gt.rank = r;
  gt.matrix = Matrix::Zero(d, 1);
  gt.matrix.topRows(r).setOnes();
  return gt;
}

}  // namespace flatmin
