#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lpk/errors.hpp"

namespace lpk {

/// Dense row-major matrix of doubles. Values are immutable by convention once
/// a routine returns one; all routines here treat inputs as read-only.
class Matrix {
 public:
  Matrix() = default;
  Matrix(long rows, long cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows * cols), 0.0) {
    if (rows < 0 || cols < 0) throw DimensionError("matrix dimensions must be nonnegative");
  }

  static Matrix identity(long n) {
    Matrix m(n, n);
    for (long i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  long rows() const { return rows_; }
  long cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(long r, long c) { return data_[static_cast<size_t>(r * cols_ + c)]; }
  double operator()(long r, long c) const { return data_[static_cast<size_t>(r * cols_ + c)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<const double> row(long r) const {
    return {data_.data() + static_cast<size_t>(r * cols_), static_cast<size_t>(cols_)};
  }
  std::span<double> row(long r) {
    return {data_.data() + static_cast<size_t>(r * cols_), static_cast<size_t>(cols_)};
  }

  bool all_finite() const;
  double frobenius_norm() const;

 private:
  long rows_ = 0;
  long cols_ = 0;
  std::vector<double> data_;
};

/// Eigendecomposition of a symmetric matrix: values descending, orthonormal
/// eigenvectors stored as columns.
struct SymEig {
  std::vector<double> values;
  Matrix vectors;
};

/// Cyclic Jacobi eigensolver. Converges when the off-diagonal Frobenius norm
/// falls below 1e-12 * ||A||_F, capped at 100 sweeps.
SymEig sym_eig(const Matrix& a);

/// Action of e^{-A t} on v through the eigendecomposition of A:
/// returns sum_i e^{-lambda_i t} u_i (u_i^T v).
std::vector<double> sym_expm_action(const SymEig& eig, double t, std::span<const double> v);

/// G = J J^T (exactly symmetric by construction).
Matrix gram(const Matrix& j);

// Dense products used across the library (Eigen-backed).
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
std::vector<double> matvec(const Matrix& a, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm_sq(std::span<const double> v);
double norm(std::span<const double> v);

/// Counter-based deterministic generator. A fixed (seed, stream) pair always
/// yields the same sequence; distinct streams derived from one seed are
/// statistically independent, so each module can claim its own.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  /// Derive an independent stream from the same master seed.
  Rng stream(uint64_t substream) const;

  uint64_t seed_value() const { return seed_; }
  uint64_t stream_value() const { return stream_; }

  uint64_t next_u64();
  double uniform();                // [0, 1)
  uint64_t below(uint64_t bound);  // unbiased integer in [0, bound)
  double gaussian();
  int rademacher();  // -1 or +1

  std::vector<double> gaussian_vec(size_t n);
  std::vector<int> rademacher_vec(size_t n);
  std::vector<double> sphere(size_t dim);  // uniform on the unit sphere
  std::vector<int> perm(int n);            // permutation of 0..n-1

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace lpk
