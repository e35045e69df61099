#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <qclab/functionals.hpp>
#include <qclab/qau.hpp>

namespace qclab {

//
// Splitting a functional into its ultraweak part and its singular part along
// a quasicentral approximate unit: phi_a(S) = lim_k phi(A_k S).
//

struct Recovery {
  std::vector<Complex> sequence; ///< phi(A_k S) for each schedule step
  std::optional<Complex> limit;  ///< plain-rule limit of the sequence
  std::string status;            ///< "converged", "not-converged", or the failing step

  /// The limit, or NotConverged carrying the sequence.
  Complex value() const;
};

/// phi(A S) for a unit A, reading only the corners and windows the functional uses.
Complex eval_on_unit_product(const FunctionalSpec& phi, const HermitianTuple& tau, const UnitElement& a,
                             const Matrix& s, int depth = -1);

Recovery recover_ac_part(const FunctionalSpec& phi, const UnitSchedule& schedule, const HermitianTuple& tau,
                         const Matrix& s, int depth = -1);

/// The three terms of the recovery estimate for a trace part at one unit A.
struct RecoveryBoundTerms {
  double support = 0.0;    ///< |X - X A|_1 ||S||
  double tail = 0.0;       ///< sum_j |(I - A)[S, T_j]|_g |Y_j|_g*
  double commutator = 0.0; ///< sum_j |[A, T_j]|_g |Y_j|_g* ||S||

  double total() const { return support + tail + commutator; }
};

/// Per-operator state of the estimate, reused across schedule steps.
class RecoveryBound {
public:
  RecoveryBound(const TracePart& tp, const HermitianTuple& tau, const GaugeSpec& g, const Matrix& s);

  RecoveryBoundTerms terms(const UnitElement& a) const;
  double operator()(const UnitElement& a) const { return terms(a).total(); }

private:
  const TracePart& tp_;
  const HermitianTuple& tau_;
  GaugeSpec gauge_;
  double s_norm_ = 0.0;
  std::vector<double> y_dual_;
  std::vector<Matrix> s_commutators_; ///< [S, T_j], empty when Y_j = 0
};

/// Bound on |phi_a(S) - phi_a(A S)| for the trace part phi_a.
double recovery_error_bound(const TracePart& tp, const HermitianTuple& tau, const GaugeSpec& g, const UnitElement& a,
                            const Matrix& s);

struct RecoveryRecord {
  std::string s_id;
  Recovery recovery;
  std::optional<Complex> trace_value; ///< constructed trace part at S
  std::optional<Complex> residual;    ///< phi(S) - limit, on finitely supported S
  std::vector<double> bounds;         ///< recovery estimate per step
  std::vector<double> gaps;           ///< measured |phi_a(S) - phi_a(A_k S)| per step
};

struct Additivity {
  double lower = 0.0;         ///< sampled lower bound on the norm of phi
  double upper_ac = 0.0;      ///< upper bound on the norm of the trace part
  double upper_singular = 0.0; ///< sum of singular weights

  double gap() const { return lower - (upper_ac + upper_singular); }
};

struct DecompositionReport {
  std::vector<RecoveryRecord> per_s;
  double max_residual = 0.0;
  double max_limit_error = 0.0;      ///< |limit - trace value| over S
  double max_bound_violation = 0.0;  ///< max over S, k of gap - bound, floored at 0
  double idempotence_gap = 0.0;
  Additivity additivity;
  std::vector<std::string> diagnostics;
  bool ok = true;
};

/// Tolerances used to mark a report failed.
struct DecompositionTolerances {
  double residual = 1e-8;
  double limit = 1e-8;
  double bound = 1e-9;
  double idempotence = 1e-9;
  double additivity = 1e-6;
};

DecompositionReport decompose(const FunctionalSpec& phi, const UnitSchedule& schedule, const HermitianTuple& tau,
                              const GaugeSpec& g, std::span<const TestOperator> test_set, int depth = -1,
                              const DecompositionTolerances& tol = {});

struct ProjectionCheck {
  std::vector<double> idempotence_gaps; ///< one per functional
  std::vector<double> linearity_gaps;   ///< one per consecutive pair
  std::vector<double> additivity_gaps;  ///< one per functional

  bool ok(double idempotence = 1e-9, double linearity = 1e-8, double additivity = 1e-6) const;
};

/// Idempotence, linearity of phi -> phi_a under (alpha, beta), and the norm sandwich.
ProjectionCheck projection_check(std::span<const FunctionalSpec> phis, const UnitSchedule& schedule,
                                 const HermitianTuple& tau, const GaugeSpec& g, std::span<const TestOperator> test_set,
                                 int depth = -1, Complex alpha = 2.0, Complex beta = -1.0);

} // namespace qclab
