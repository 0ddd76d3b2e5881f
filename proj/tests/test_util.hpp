#pragma once

#include "flatmin/numlin.hpp"

#include <cmath>
#include <random>

namespace flatmin::testing {

// Test-local generator; deliberately separate from the library's Rng so the
// oracles share no code with the implementation.
class Gen {
 public:
  explicit Gen(unsigned seed) : engine_(seed) {}
  double normal() { return normal_(engine_); }
  double uniform(double a = 0.0, double b = 1.0) {
    return std::uniform_real_distribution<double>(a, b)(engine_);
  }
  long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }
  Matrix matrix(Index r, Index c) {
    Matrix a(r, c);
    for (Index i = 0; i < a.size(); ++i) a(i) = normal();
    return a;
  }
  Vector vector(Index n) { return matrix(n, 1).col(0); }
  Matrix symmetric(Index n) {
    const Matrix a = matrix(n, n);
    return 0.5 * (a + a.transpose());
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

// Minimize a unimodal scalar function on [a, b] by golden-section search.
template <class F>
double golden_min(F f, double a, double b, int iters = 200) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  for (int i = 0; i < iters; ++i) {
    if (f(c) < f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - phi * (b - a);
    d = a + phi * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace flatmin::testing
