#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <qclab/gauges.hpp>

namespace qclab {

//
// Hermitian n-tuples given as banded infinite matrices. Only leading N x N
// corners are ever materialized; a model is a deterministic rule for entry (i, j).
//

struct OperatorModelSpec {
  std::string name;
  int n = 1;
  int bandwidth = 0;
  /// Named real parameters: "scale" (lap-pos), "grid" (diagonal scale length;
  /// defaults to the instantiation dimension when absent).
  std::map<std::string, double> parameters;
};

/// Spec for one of the built-in models with its natural bandwidth filled in.
/// Known names: "diagonal-grid", "lap-pos", "shift-parts".
OperatorModelSpec builtin_model(const std::string& name, int n = 0, std::map<std::string, double> parameters = {});

template <typename Scalar>
struct BasicHermitianTuple {
  std::vector<DenseMatrix<Scalar>> ops;
  int bandwidth = 0;
  OperatorModelSpec source;

  Eigen::Index dim() const { return ops.empty() ? 0 : ops.front().rows(); }
  std::size_t size() const { return ops.size(); }
  const DenseMatrix<Scalar>& operator[](std::size_t j) const { return ops[j]; }

  /// Leading k x k corners of every operator.
  BasicHermitianTuple corner(Eigen::Index k) const
  {
    require(k >= 0 && k <= dim(), "HermitianTuple::corner: size out of range");
    BasicHermitianTuple out{{}, bandwidth, source};
    out.ops.reserve(ops.size());
    for (const auto& t : ops) {
      out.ops.push_back(t.topLeftCorner(k, k));
    }
    return out;
  }
};

using HermitianTuple = BasicHermitianTuple<Complex>;
using RealHermitianTuple = BasicHermitianTuple<double>;

HermitianTuple instantiate_model(const OperatorModelSpec& spec, Eigen::Index n);

/// Wrap explicit hermitian matrices; the bandwidth is read off the nonzero pattern.
HermitianTuple make_tuple(std::vector<Matrix> ops, std::string name = "explicit");

/// True when every operator has zero imaginary part.
bool is_real(const HermitianTuple& tau);
RealHermitianTuple real_part(const HermitianTuple& tau);

template <typename DT, typename DS>
auto commutator(const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DS>& s)
{
  using Scalar = typename Eigen::ScalarBinaryOpTraits<typename DT::Scalar, typename DS::Scalar>::ReturnType;
  DenseMatrix<Scalar> out = t.template cast<Scalar>() * s.template cast<Scalar>();
  out.noalias() -= s.template cast<Scalar>() * t.template cast<Scalar>();
  return out;
}

/// [T, S] for T with bandwidth b. Each entry is summed over the band in a fixed
/// order, so leading corners agree bit for bit across instantiation sizes.
template <typename DT, typename DS>
auto banded_commutator(const Eigen::MatrixBase<DT>& t, Eigen::Index band, const Eigen::MatrixBase<DS>& s)
{
  using Scalar = typename Eigen::ScalarBinaryOpTraits<typename DT::Scalar, typename DS::Scalar>::ReturnType;
  const Eigen::Index n = s.rows();
  DenseMatrix<Scalar> out(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, k - band);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, k + band);
    for (Eigen::Index i = 0; i < n; ++i) {
      Scalar left(0);
      const Eigen::Index li = std::max<Eigen::Index>(0, i - band);
      const Eigen::Index hi_i = std::min<Eigen::Index>(n - 1, i + band);
      for (Eigen::Index l = li; l <= hi_i; ++l) {
        left += Scalar(t(i, l)) * Scalar(s(l, k));
      }
      Scalar right(0);
      for (Eigen::Index l = lo; l <= hi; ++l) {
        right += Scalar(s(i, l)) * Scalar(t(l, k));
      }
      out(i, k) = left - right;
    }
  }
  return out;
}

/// ([T_1, S], ..., [T_n, S]).
template <typename TS, typename DS>
auto commutator_tuple(const BasicHermitianTuple<TS>& tau, const Eigen::MatrixBase<DS>& s)
{
  require_square(s, "commutator_tuple");
  require(s.rows() == tau.dim(), "commutator_tuple: operator dimension " + std::to_string(s.rows()) +
                                     " does not match tuple dimension " + std::to_string(tau.dim()));
  using Scalar = typename Eigen::ScalarBinaryOpTraits<TS, typename DS::Scalar>::ReturnType;
  std::vector<DenseMatrix<Scalar>> out;
  out.reserve(tau.size());
  for (const auto& t : tau.ops) {
    out.push_back(banded_commutator(t, tau.bandwidth, s));
  }
  return out;
}

/// max_j |K_j|_g.
template <typename Scalar>
double tuple_gauge_norm(std::span<const DenseMatrix<Scalar>> kappa, const GaugeSpec& g)
{
  require(!kappa.empty(), "tuple_gauge_norm: empty tuple");
  double best = 0.0;
  for (const auto& k : kappa) {
    require(k.rows() == kappa.front().rows() && k.cols() == kappa.front().cols(),
            "tuple_gauge_norm: matrices of different dimensions");
    best = std::max(best, gauge_norm(g, k));
  }
  return best;
}

template <typename Scalar>
double tuple_gauge_norm(const std::vector<DenseMatrix<Scalar>>& kappa, const GaugeSpec& g)
{
  return tuple_gauge_norm(std::span<const DenseMatrix<Scalar>>(kappa), g);
}

/// ||S|| + |[tau, S]|_g, the Banach-algebra norm on the commutant modulo the ideal.
template <typename TS, typename DS>
double e_norm_sum(const BasicHermitianTuple<TS>& tau, const GaugeSpec& g, const Eigen::MatrixBase<DS>& s)
{
  return operator_norm(s) + tuple_gauge_norm(commutator_tuple(tau, s), g);
}

/// max(||S||, |[tau, S]|_g), the equivalent max-norm.
template <typename TS, typename DS>
double e_norm_max(const BasicHermitianTuple<TS>& tau, const GaugeSpec& g, const Eigen::MatrixBase<DS>& s)
{
  return std::max(operator_norm(s), tuple_gauge_norm(commutator_tuple(tau, s), g));
}

} // namespace qclab
