#include "flatmin/hessian.hpp"

namespace flatmin {
namespace {

Vector hadamard_product(const std::vector<Vector>& v, std::size_t skip = std::size_t(-1)) {
  Vector out = Vector::Ones(v.front().size());
  for (std::size_t h = 0; h < v.size(); ++h)
    if (h != skip) out = out.cwiseProduct(v[h]);
  return out;
}

void check_shapes(const SensingOperator& op, const FactorPair& f) {
  switch (f.shape) {
    case FactorShape::asymmetric:
      if (f.first.rows() != op.d1() || f.second.rows() != op.d2() ||
          f.first.cols() != f.second.cols())
        throw ShapeError("factor pair does not match operator dimensions");
      break;
    case FactorShape::signed_symmetric:
      if (!op.symmetric_measurements())
        throw ParameterError("signed symmetric factors need a symmetric-measurement operator");
      if (f.first.rows() != op.d1() || f.second.rows() != op.d1())
        throw ShapeError("factor pair does not match operator dimensions");
      break;
    case FactorShape::hadamard:
      if (op.kind() != EnsembleKind::hadamard_columns)
        throw ParameterError("Hadamard factors need a hadamard-columns operator");
      if (f.v_list.empty()) throw ParameterError("Hadamard factors: empty list");
      for (const Vector& v : f.v_list)
        if (v.size() != op.d1()) throw ShapeError("Hadamard factor length != d");
      break;
  }
}

double loss_scale(const SensingOperator& op, const FactorPair& f) {
  return f.shape == FactorShape::asymmetric ? 1.0 : 1.0 / static_cast<double>(op.m());
}

}  // namespace

FactorPair FactorPair::asymmetric(Matrix L, Matrix R) {
  FactorPair f;
  f.shape = FactorShape::asymmetric;
  f.first = std::move(L);
  f.second = std::move(R);
  return f;
}

FactorPair FactorPair::signed_symmetric(Matrix U1, Matrix U2) {
  FactorPair f;
  f.shape = FactorShape::signed_symmetric;
  f.first = std::move(U1);
  f.second = std::move(U2);
  return f;
}

FactorPair FactorPair::hadamard(std::vector<Vector> v) {
  if (v.empty()) throw ParameterError("FactorPair::hadamard: need at least one factor");
  FactorPair f;
  f.shape = FactorShape::hadamard;
  f.v_list = std::move(v);
  return f;
}

Matrix FactorPair::product() const {
  switch (shape) {
    case FactorShape::asymmetric:
      return first * second.transpose();
    case FactorShape::signed_symmetric:
      return first * first.transpose() - second * second.transpose();
    case FactorShape::hadamard:
      return hadamard_product(v_list);
  }
  return {};
}

double factored_loss(const SensingOperator& op, const FactorPair& f, const Vector& b) {
  check_shapes(op, f);
  return loss_scale(op, f) * (op.forward(f.product()) - b).squaredNorm();
}

double hessian_form(const SensingOperator& op, const FactorPair& f, const Vector& b,
                    const FactorPair& dir) {
  check_shapes(op, f);
  if (dir.shape != f.shape) throw ParameterError("hessian_form: direction shape differs");
  const Vector residual = op.forward(f.product()) - b;
  // Along t -> f + t dir the model output is residual + t g1 + t^2 g2 + O(t^3),
  // so the second derivative of the loss is 2 ||g1||^2 + 4 <residual, g2>.
  Vector g1;
  Vector g2;
  switch (f.shape) {
    case FactorShape::asymmetric:
      g1 = op.forward(f.first * dir.second.transpose() + dir.first * f.second.transpose());
      g2 = op.forward(dir.first * dir.second.transpose());
      break;
    case FactorShape::signed_symmetric: {
      const Matrix a = dir.first * f.first.transpose();
      const Matrix c = dir.second * f.second.transpose();
      g1 = op.forward(a + a.transpose() - c - c.transpose());
      g2 = op.forward(dir.first * dir.first.transpose() - dir.second * dir.second.transpose());
      break;
    }
    case FactorShape::hadamard: {
      const std::size_t k = f.v_list.size();
      if (dir.v_list.size() != k) throw ShapeError("hessian_form: direction length differs");
      Vector lin = Vector::Zero(op.d1());
      Vector quad = Vector::Zero(op.d1());
      for (std::size_t h = 0; h < k; ++h) {
        Vector term = dir.v_list[h];
        for (std::size_t i = 0; i < k; ++i)
          if (i != h) term = term.cwiseProduct(f.v_list[i]);
        lin += term;
        for (std::size_t g = h + 1; g < k; ++g) {
          Vector pair_term = dir.v_list[h].cwiseProduct(dir.v_list[g]);
          for (std::size_t i = 0; i < k; ++i)
            if (i != h && i != g) pair_term = pair_term.cwiseProduct(f.v_list[i]);
          quad += pair_term;
        }
      }
      g1 = op.forward(lin);
      g2 = op.forward(quad);
      break;
    }
  }
  return loss_scale(op, f) * (2.0 * g1.squaredNorm() + 4.0 * residual.dot(g2));
}

double scaled_trace_direct(const SensingOperator& op, const FactorPair& f, const Vector& b,
                           bool allow_noninterpolating) {
  check_shapes(op, f);
  if (b.size() != op.m()) throw ShapeError("scaled_trace_direct: b has wrong length");
  const double res = (op.forward(f.product()) - b).norm();
  if (!allow_noninterpolating && !(res <= kInterpolationTolerance))
    throw PreconditionError("scaled_trace_direct: factors do not interpolate b");

  if (f.shape == FactorShape::hadamard) {
    const std::size_t k = f.v_list.size();
    const Index d = op.d1();
    double total = 0.0;
    for (std::size_t h = 0; h < k; ++h) {
      for (Index j = 0; j < d; ++j) {
        std::vector<Vector> dir(k, Vector::Zero(d));
        dir[h](j) = 1.0;
        total += hessian_form(op, f, b, FactorPair::hadamard(std::move(dir)));
      }
    }
    return total;
  }

  // Basis directions for one block at a time, the other block zero.
  auto block_sum = [&](bool first_block) {
    const Matrix& blk = first_block ? f.first : f.second;
    double s = 0.0;
    for (Index j = 0; j < blk.cols(); ++j) {
      for (Index i = 0; i < blk.rows(); ++i) {
        FactorPair dir = f;
        dir.first.setZero();
        dir.second.setZero();
        (first_block ? dir.first : dir.second)(i, j) = 1.0;
        s += hessian_form(op, f, b, dir);
      }
    }
    return s;
  };
  const double a = block_sum(true);
  const double c = block_sum(false);
  if (f.shape == FactorShape::asymmetric) {
    return a / static_cast<double>(op.d1()) + c / static_cast<double>(op.d2());
  }
  return a + c;
}

double hadamard_factor_energy(const Vector& d_diag, const std::vector<Vector>& v_list) {
  if (v_list.empty()) throw ParameterError("hadamard_factor_energy: empty factor list");
  double total = 0.0;
  for (std::size_t h = 0; h < v_list.size(); ++h) {
    const Vector p = hadamard_product(v_list, h);
    if (p.size() != d_diag.size()) throw ShapeError("hadamard_factor_energy: length mismatch");
    total += d_diag.dot(p.cwiseAbs2());
  }
  return total;
}

double scaled_trace_closed(const SensingOperator& op, const RescalingPair& pair,
                           const FactorPair& f) {
  check_shapes(op, f);
  switch (f.shape) {
    case FactorShape::asymmetric:
      if (pair.D1.rows() != op.d1() || pair.D2.rows() != op.d2())
        throw ShapeError("scaled_trace_closed: rescaling does not match operator");
      return 2.0 * static_cast<double>(op.m()) *
             ((pair.D1 * f.first).squaredNorm() + (pair.D2 * f.second).squaredNorm());
    case FactorShape::signed_symmetric:
      if (pair.D1.rows() != op.d1())
        throw ShapeError("scaled_trace_closed: rescaling does not match operator");
      return 8.0 * static_cast<double>(op.d1()) *
             ((pair.D1 * f.first).squaredNorm() + (pair.D1 * f.second).squaredNorm());
    case FactorShape::hadamard:
      if (pair.D1.rows() != op.d1())
        throw ShapeError("scaled_trace_closed: rescaling does not match operator");
      return 2.0 * hadamard_factor_energy(pair.D1.diagonal(), f.v_list);
  }
  return 0.0;
}

double rpca_scaled_trace(const Matrix& L, const Matrix& R) {
  return 2.0 * (L.squaredNorm() + R.squaredNorm());
}

}  // namespace flatmin
