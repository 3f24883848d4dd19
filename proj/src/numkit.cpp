#include "lpk/numkit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lpk {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMat>;
using MutMap = Eigen::Map<EigenRowMat>;

ConstMap map_of(const Matrix& m) { return ConstMap(m.data(), m.rows(), m.cols()); }

}  // namespace

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  MutMap(out.data(), out.rows(), out.cols()).noalias() = map_of(a) * map_of(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  MutMap(out.data(), out.rows(), out.cols()).noalias() = map_of(a) * map_of(b).transpose();
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> v) {
  if (a.cols() != static_cast<long>(v.size())) throw DimensionError("matvec: length mismatch");
  std::vector<double> out(static_cast<size_t>(a.rows()));
  Eigen::Map<Eigen::VectorXd>(out.data(), a.rows()).noalias() =
      map_of(a) * Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size())
      .dot(Eigen::Map<const Eigen::VectorXd>(b.data(), b.size()));
}

double norm_sq(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).squaredNorm();
}

double norm(std::span<const double> v) { return std::sqrt(norm_sq(v)); }

Matrix gram(const Matrix& j) {
  if (!j.all_finite()) throw NumericError("gram: non-finite entries");
  Matrix g(j.rows(), j.rows());
  MutMap m(g.data(), g.rows(), g.cols());
  m.noalias() = map_of(j) * map_of(j).transpose();
  // mirror the lower triangle so symmetry holds bitwise
  for (long r = 0; r < g.rows(); ++r)
    for (long c = 0; c < r; ++c) g(c, r) = g(r, c);
  return g;
}

SymEig sym_eig(const Matrix& a) {
  const long n = a.rows();
  if (n != a.cols()) throw DimensionError("sym_eig: matrix not square");
  const double frob = a.frobenius_norm();
  double asym = 0.0;
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(a(i, j) - a(j, i)));
  if (asym > 1e-10 * std::max(frob, 1e-300))
    throw DimensionError("sym_eig: matrix not symmetric within 1e-10 relative");

  Matrix b = a;
  // enforce exact symmetry before rotating
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j) {
      const double v = 0.5 * (b(i, j) + b(j, i));
      b(i, j) = v;
      b(j, i) = v;
    }
  Matrix v = Matrix::identity(n);

  const double tol = 1e-12 * frob;
  auto off_norm = [&]() {
    double s = 0.0;
    for (long i = 0; i < n; ++i)
      for (long j = i + 1; j < n; ++j) s += 2.0 * b(i, j) * b(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (long p = 0; p < n; ++p) {
      for (long q = p + 1; q < n; ++q) {
        const double apq = b(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (b(q, q) - b(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = b(p, p), aqq = b(q, q);
        b(p, p) = app - t * apq;
        b(q, q) = aqq + t * apq;
        b(p, q) = 0.0;
        b(q, p) = 0.0;
        for (long r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = b(r, p), arq = b(r, q);
            b(r, p) = arp - s * (arq + tau * arp);
            b(p, r) = b(r, p);
            b(r, q) = arq + s * (arp - tau * arq);
            b(q, r) = b(r, q);
          }
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  std::vector<long> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](long i, long j) { return b(i, i) > b(j, j); });

  SymEig out;
  out.values.resize(static_cast<size_t>(n));
  out.vectors = Matrix(n, n);
  for (long k = 0; k < n; ++k) {
    out.values[static_cast<size_t>(k)] = b(order[static_cast<size_t>(k)], order[static_cast<size_t>(k)]);
    for (long r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[static_cast<size_t>(k)]);
  }
  return out;
}

std::vector<double> sym_expm_action(const SymEig& eig, double t, std::span<const double> v) {
  const long n = eig.vectors.rows();
  if (static_cast<long>(v.size()) != n) throw DimensionError("sym_expm_action: length mismatch");
  std::vector<double> coeff(static_cast<size_t>(n), 0.0);
  for (long k = 0; k < n; ++k) {
    double c = 0.0;
    for (long r = 0; r < n; ++r) c += eig.vectors(r, k) * v[static_cast<size_t>(r)];
    coeff[static_cast<size_t>(k)] = std::exp(-eig.values[static_cast<size_t>(k)] * t) * c;
  }
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (long r = 0; r < n; ++r) {
    double s = 0.0;
    for (long k = 0; k < n; ++k) s += eig.vectors(r, k) * coeff[static_cast<size_t>(k)];
    out[static_cast<size_t>(r)] = s;
  }
  return out;
}

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

uint64_t splitmix(uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {
  key_ = splitmix(splitmix(seed) ^ splitmix(stream ^ 0xda3e39cb94b95bdbULL));
}

Rng Rng::stream(uint64_t substream) const {
  return Rng(seed_, splitmix(stream_ ^ splitmix(substream)));
}

uint64_t Rng::next_u64() { return splitmix(key_ + kGolden * counter_++); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::below(uint64_t bound) {
  if (bound == 0) throw DomainError("Rng::below: bound must be positive");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::gaussian() {
  // Box-Muller; u1 kept away from 0
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::rademacher() { return (next_u64() >> 63) ? 1 : -1; }

std::vector<double> Rng::gaussian_vec(size_t n) {
  std::vector<double> out(n);
  for (double& x : out) x = gaussian();
  return out;
}

std::vector<int> Rng::rademacher_vec(size_t n) {
  std::vector<int> out(n);
  for (int& x : out) x = rademacher();
  return out;
}

std::vector<double> Rng::sphere(size_t dim) {
  if (dim == 0) throw DomainError("Rng::sphere: dimension must be positive");
  std::vector<double> out;
  double nrm = 0.0;
  do {
    out = gaussian_vec(dim);
    nrm = norm(out);
  } while (nrm < 1e-12);
  for (double& x : out) x /= nrm;
  return out;
}

std::vector<int> Rng::perm(int n) {
  if (n < 0) throw DomainError("Rng::perm: n must be nonnegative");
  std::vector<int> out(static_cast<size_t>(n));
  std::iota(out.begin(), out.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(out[static_cast<size_t>(i)], out[below(static_cast<uint64_t>(i) + 1)]);
  return out;
}

}  // namespace lpk
