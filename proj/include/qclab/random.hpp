#pragma once

#include <cstdint>
#include <random>

#include <qclab/types.hpp>

namespace qclab {

/// Seeded source for every random matrix in the library and its tests.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::uint64_t next() { return engine_(); }

  template <typename Scalar>
  Scalar scalar()
  {
    if constexpr (is_complex_v<Scalar>) {
      const double re = normal();
      const double im = normal();
      return Scalar(re, im) / std::sqrt(2.0);
    } else {
      return normal();
    }
  }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

template <typename Scalar = Complex>
DenseMatrix<Scalar> random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols)
{
  DenseMatrix<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      m(i, j) = rng.scalar<Scalar>();
    }
  }
  return m;
}

template <typename Scalar = Complex>
DenseMatrix<Scalar> random_hermitian(Rng& rng, Eigen::Index n)
{
  const DenseMatrix<Scalar> m = random_matrix<Scalar>(rng, n, n);
  return (m + m.adjoint()) / 2.0;
}

/// Haar-distributed unitary: QR of a Gaussian matrix with the phases of R removed.
template <typename Scalar = Complex>
DenseMatrix<Scalar> random_unitary(Rng& rng, Eigen::Index n)
{
  const DenseMatrix<Scalar> m = random_matrix<Scalar>(rng, n, n);
  Eigen::HouseholderQR<DenseMatrix<Scalar>> qr(m);
  DenseMatrix<Scalar> q = qr.householderQ();
  const DenseMatrix<Scalar> r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto d = r(j, j);
    if (std::abs(d) > 0.0) {
      q.col(j) *= d / std::abs(d);
    }
  }
  return q;
}

/// Hermitian Toeplitz matrix with random diagonals up to `band`, entries of order one.
template <typename Scalar = Complex>
DenseMatrix<Scalar> random_banded_toeplitz(Rng& rng, Eigen::Index n, int band)
{
  DenseMatrix<Scalar> m = DenseMatrix<Scalar>::Zero(n, n);
  const double main = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = main;
  }
  for (int d = 1; d <= band; ++d) {
    const Scalar c = rng.scalar<Scalar>();
    for (Eigen::Index i = 0; i + d < n; ++i) {
      m(i + d, i) = c;
      m(i, i + d) = Eigen::numext::conj(c);
    }
  }
  return m;
}

/// Positive semidefinite with unit trace.
template <typename Scalar = Complex>
DenseMatrix<Scalar> random_density(Rng& rng, Eigen::Index n)
{
  const DenseMatrix<Scalar> g = random_matrix<Scalar>(rng, n, n);
  DenseMatrix<Scalar> rho = g * g.adjoint();
  rho /= Eigen::numext::real(rho.trace());
  return (rho + rho.adjoint()) / 2.0;
}

} // namespace qclab
