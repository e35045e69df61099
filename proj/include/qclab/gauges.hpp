#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include <qclab/types.hpp>

namespace qclab {

//
// Symmetric gauge functions on nonincreasing nonnegative sequences, and the
// unitarily invariant norms |M|_g = g(s_1(M), s_2(M), ...) they induce.
//

enum class GaugeFamily {
  SchattenP, ///< (sum t_i^p)^(1/p), p >= 1
  KyFan,     ///< t_1 + ... + t_k
  KyFanDual, ///< max(t_1, (sum t_i) / k), the conjugate of KyFan(k)
  Sup,       ///< t_1
};

struct GaugeSpec {
  GaugeFamily family = GaugeFamily::Sup;
  double p = 1.0; // SchattenP only
  int k = 1;      // KyFan / KyFanDual only
  std::string label;

  static GaugeSpec schatten(double p);
  static GaugeSpec ky_fan(int k);
  static GaugeSpec ky_fan_dual(int k);
  static GaugeSpec sup();

  friend bool operator==(const GaugeSpec& a, const GaugeSpec& b)
  {
    return a.family == b.family && a.p == b.p && a.k == b.k;
  }
};

/// Throws InvalidInput when the parameters do not describe a norming function.
void validate(const GaugeSpec& g);

std::string describe(const GaugeSpec& g);

/// g evaluated on a nonincreasing nonnegative sequence; missing tail entries are zero.
double evaluate(const GaugeSpec& g, std::span<const double> t);

/// A subgradient d of g at the nonincreasing sequence s, so that
/// g(s') >= g(s) + <d, s' - s> for all nonincreasing s'.
Vector gauge_weights(const GaugeSpec& g, std::span<const double> s);

GaugeSpec conjugate_gauge(const GaugeSpec& g);

/// True for the SchattenP(1) / Sup pairing. Trace duality still holds there,
/// but the dual of the trace class is all of B(H) rather than an ideal.
bool is_excluded_duality(const GaugeSpec& g);

/// Whether finite-rank operators are dense in the ideal of g. True for every
/// family here; at finite N the ideal and that closure cannot be told apart, so
/// this is a documentation tag only.
bool is_mononorming(const GaugeSpec& g);

/// Nonincreasing singular values of a finite square matrix.
template <typename Derived>
Vector singular_values(const Eigen::MatrixBase<Derived>& m)
{
  require_square(m, "singular_values");
  if (!m.allFinite()) {
    throw InvalidInput("singular_values: matrix has non-finite entries");
  }
  using Plain = typename Derived::PlainObject;
  if (m.rows() == 0) {
    return Vector();
  }
  // zero rows and columns only contribute zero singular values
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> cols;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).isZero(0.0)) {
      rows.push_back(i);
    }
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (!m.col(j).isZero(0.0)) {
      cols.push_back(j);
    }
  }
  Vector s = Vector::Zero(m.rows());
  const auto rank_cap = static_cast<Eigen::Index>(std::min(rows.size(), cols.size()));
  if (rank_cap == 0) {
    return s;
  }
  const Plain core = m(rows, cols);
  if (std::max(rows.size(), cols.size()) <= 16) {
    s.head(rank_cap) = Eigen::JacobiSVD<Plain>(core).singularValues();
  } else {
    s.head(rank_cap) = Eigen::BDCSVD<Plain>(core).singularValues();
  }
  return s;
}

template <typename Derived>
double gauge_norm(const GaugeSpec& g, const Eigen::MatrixBase<Derived>& m)
{
  validate(g);
  if (g.family == GaugeFamily::SchattenP && g.p == 2.0) {
    require_square(m, "gauge_norm");
    require(m.allFinite(), "gauge_norm: matrix has non-finite entries");
    return m.norm();
  }
  const Vector s = singular_values(m);
  return evaluate(g, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

/// Operator norm, i.e. the largest singular value.
template <typename Derived>
double operator_norm(const Eigen::MatrixBase<Derived>& m)
{
  const Vector s = singular_values(m);
  return s.size() == 0 ? 0.0 : s(0);
}

/// A subgradient of M -> |M|_g with respect to the real inner product
/// Re Tr(X^* Y): U diag(d) V^* where M = U diag(s) V^* and d = gauge_weights(g, s).
template <typename Derived>
DenseMatrix<typename Derived::Scalar> gauge_subgradient(const GaugeSpec& g, const Eigen::MatrixBase<Derived>& m)
{
  using Plain = typename Derived::PlainObject;
  validate(g);
  require_square(m, "gauge_subgradient");
  if (m.rows() == 0) {
    return Plain();
  }
  Eigen::BDCSVD<Plain> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const Vector d = gauge_weights(g, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
  return svd.matrixU() * d.cast<typename Derived::Scalar>().asDiagonal() * svd.matrixV().adjoint();
}

struct HolderReport {
  double lhs = 0.0; // |Tr(XY)|
  double rhs = 0.0; // |X|_g |Y|_{g*}
  bool ok = false;
  bool excluded_case = false;
};

template <typename DX, typename DY>
HolderReport holder_check(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y, const GaugeSpec& g)
{
  require_square(x, "holder_check");
  require(x.rows() == y.rows() && x.cols() == y.cols(), "holder_check: dimension mismatch");
  HolderReport report;
  report.lhs = std::abs(trace_of_product(x, y));
  report.rhs = gauge_norm(g, x) * gauge_norm(conjugate_gauge(g), y);
  report.ok = report.lhs <= report.rhs + 1e-9 * (1.0 + report.rhs);
  report.excluded_case = is_excluded_duality(g);
  return report;
}

} // namespace qclab
