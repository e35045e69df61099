#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <qclab/idealops.hpp>

namespace qclab {

//
// Quasicentral approximate units: finite-rank 0 <= A <= I with small
// commutators |[tau, A]|_g, their optimization over order-interval windows,
// and monotone schedules A_1 <= A_2 <= ... marching to the identity.
//

struct UnitCertificate {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double floor_residual = 0.0; ///< max(0, -lambda_min(A - P_m))
  double support_leak = 0.0;   ///< always 0: storage holds only the leading cap_r block

  bool ok(double tol = 1e-10) const
  {
    return min_eigenvalue >= -tol && max_eigenvalue <= 1.0 + tol && floor_residual <= tol && support_leak == 0.0;
  }
};

/// A = P_m + C with 0 <= C <= I supported on coordinates [m, r).
struct UnitElement {
  Matrix block; ///< leading cap_r x cap_r corner of A
  int floor_m = 0;
  int cap_r = 0;
  UnitCertificate certificate;

  Matrix dense(Eigen::Index n) const { return pad_to(block, n); }
};

/// Certify block as a unit with the given floor; the cap is the block size.
UnitElement make_unit(Matrix block, int floor_m);
UnitCertificate certify(const Matrix& block, int floor_m);

/// Exact Frobenius projection onto { P_m <= A <= I, A supported in [0, r) } for a hermitian r x r block.
template <typename Scalar>
DenseMatrix<Scalar> project_window(const DenseMatrix<Scalar>& a, int floor_m);

/// Diagonal ramp: 1 up to m, linear (r - j)/(r - m) on (m, r], 0 beyond (1-based j).
UnitElement ramp_unit(const HermitianTuple& tau, int m, int r);

/// |[tau, A]|_g computed exactly on the leading (cap_r + bandwidth) corner.
double unit_commutator_norm(const HermitianTuple& tau, const GaugeSpec& g, const UnitElement& a);

enum class StepRule {
  Diminishing, ///< c / sqrt(k), c scaled from the warm start
  Polyak,      ///< f(A_k) / |subgradient|, target value 0
};

struct SolverParams {
  int max_iterations = 2000;
  StepRule step_rule = StepRule::Diminishing;
  double step_scale = 0.0; ///< c; 0 selects f(A_0) / |g_0| capped at the window diameter
  double stop_tolerance = 1e-8;
  int patience = 50;
  std::uint64_t seed = 0; ///< recorded with results; the iteration itself is deterministic
};

struct IterationRecord {
  int iteration = 0;
  double value = 0.0;
  double best = 0.0;
  double step = 0.0;
  int active = 0;
};

struct OptimizeResult {
  UnitElement unit;
  double value = 0.0;
  double warm_value = 0.0;
  int iterations = 0;
  std::string status; ///< "degenerate", "optimal", "stalled", "max-iterations"
  std::vector<IterationRecord> trace;
};

/// Projected subgradient minimization of |[tau, A]|_g over the window (m, r).
/// The ramp and every feasible element of `warm_starts` are candidate starts;
/// the best visited point is returned.
OptimizeResult optimize_unit(const HermitianTuple& tau, const GaugeSpec& g, int m, int r, const SolverParams& params,
                             std::span<const UnitElement> warm_starts = {});

struct KCell {
  int m = 0;
  int r = 0;
  double beta = 0.0;
  double ramp_value = 0.0;
  int iterations = 0;
  std::string status;
};

struct KEstimateTable {
  GaugeSpec gauge;
  std::vector<int> floors;
  std::vector<int> caps;
  std::vector<KCell> cells; ///< lexicographic in (m, r)
  double estimate = 0.0;    ///< max over m of min over r of beta(m, r)
  std::vector<std::string> violations;

  const KCell& at(int m, int r) const;
};

KEstimateTable k_estimate(const HermitianTuple& tau, const GaugeSpec& g, std::vector<int> floors,
                          std::vector<int> caps, const SolverParams& params);

enum class ScheduleMode { Ramp, OptimizedMonotonized };

struct UnitSchedule {
  GaugeSpec gauge;
  std::vector<std::pair<int, int>> windows;
  std::vector<UnitElement> steps;
  std::vector<double> commutator_norms;
};

UnitSchedule build_schedule(const HermitianTuple& tau, const GaugeSpec& g, const std::vector<std::pair<int, int>>& windows,
                            ScheduleMode mode = ScheduleMode::Ramp, const SolverParams& params = {});

struct ScheduleCheck {
  double monotonicity_gap = 0.0;   ///< max_k max(0, -lambda_min(A_{k+1} - A_k))
  double norm_mismatch = 0.0;      ///< max_k |recomputed - stored| commutator norm
  bool windows_march = true;       ///< m_{k+1} >= r_{k-1}
  bool caps_increasing = true;
  bool units_certified = true;

  bool ok() const
  {
    return monotonicity_gap <= 1e-10 && norm_mismatch <= 1e-10 && windows_march && caps_increasing && units_certified;
  }
};

ScheduleCheck verify_schedule(const HermitianTuple& tau, const UnitSchedule& schedule);

/// Windows (k^2, k^2 + 2k) for k = first..last: nested, marching, with growing widths.
std::vector<std::pair<int, int>> quadratic_windows(int first, int last);

} // namespace qclab
