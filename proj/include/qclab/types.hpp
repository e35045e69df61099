#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

namespace qclab {

using Complex = std::complex<double>;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Matrix = DenseMatrix<Complex>;
using RealMatrix = DenseMatrix<double>;
using Vector = Eigen::VectorXd;

template <typename Scalar>
inline constexpr bool is_complex_v = !std::is_same_v<Scalar, typename Eigen::NumTraits<Scalar>::Real>;

/// Precondition violation on a public operation (bad dimensions, bad window, ...).
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to produce a certified result.
class NumericalFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
  if (!condition) {
    throw InvalidInput(message);
  }
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* what)
{
  if (m.rows() != m.cols()) {
    throw InvalidInput(std::string(what) + ": matrix is not square (" + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ")");
  }
}

/// Copy `block` into the leading corner of an n x n zero matrix.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> pad_to(const Eigen::MatrixBase<Derived>& block, Eigen::Index n)
{
  using Scalar = typename Derived::Scalar;
  DenseMatrix<Scalar> out = DenseMatrix<Scalar>::Zero(n, n);
  const auto r = std::min(n, block.rows());
  const auto c = std::min(n, block.cols());
  out.topLeftCorner(r, c) = block.topLeftCorner(r, c);
  return out;
}

/// Tr(A B) without forming the product.
template <typename DA, typename DB>
typename DA::Scalar trace_of_product(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b)
{
  return a.cwiseProduct(b.transpose()).sum();
}

} // namespace qclab
