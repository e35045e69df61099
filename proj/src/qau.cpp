#include <qclab/qau.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace qclab {

namespace {

template <typename Scalar>
DenseMatrix<Scalar> hermitian_part(const DenseMatrix<Scalar>& m)
{
  return (m + m.adjoint()) / 2.0;
}

// Clamp the spectrum of a hermitian matrix to [lo, hi].
template <typename Scalar>
DenseMatrix<Scalar> clamp_spectrum(const DenseMatrix<Scalar>& h, double lo, double hi)
{
  if (h.rows() == 0) {
    return h;
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> eig(h);
  if (eig.info() != Eigen::Success) {
    throw NumericalFailure("eigendecomposition failed during window projection");
  }
  const Vector lambda = eig.eigenvalues().cwiseMax(lo).cwiseMin(hi);
  DenseMatrix<Scalar> out = eig.eigenvectors() * lambda.cast<Scalar>().asDiagonal() * eig.eigenvectors().adjoint();
  return hermitian_part(out);
}

template <typename Scalar>
double min_eigenvalue(const DenseMatrix<Scalar>& h)
{
  if (h.rows() == 0) {
    return 0.0;
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> eig(h, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

void check_window(const HermitianTuple& tau, int m, int r, bool allow_degenerate)
{
  std::ostringstream os;
  os << "window (m=" << m << ", r=" << r << ") ";
  if (m < 0 || r < 1 || m > r || (!allow_degenerate && m == r)) {
    os << "is not a valid floor/cap pair";
    throw InvalidInput(os.str());
  }
  if (static_cast<Eigen::Index>(r) + tau.bandwidth > tau.dim()) {
    os << "needs r + bandwidth <= N = " << tau.dim();
    throw InvalidInput(os.str());
  }
}

// Commutators with A supported in [0, r), computed on the (r + b) corner where
// they are exact.
template <typename Scalar>
class WindowObjective {
public:
  WindowObjective(const HermitianTuple& tau, GaugeSpec g, int m, int r)
      : gauge_(std::move(g)), m_(m), r_(r), work_(std::min<Eigen::Index>(tau.dim(), r + tau.bandwidth))
  {
    for (const auto& t : tau.ops) {
      if constexpr (is_complex_v<Scalar>) {
        ops_.push_back(t.topLeftCorner(work_, work_));
      } else {
        ops_.push_back(t.topLeftCorner(work_, work_).real());
      }
    }
    frobenius_ = gauge_.family == GaugeFamily::SchattenP && gauge_.p == 2.0;
  }

  DenseMatrix<Scalar> commutator_with(std::size_t j, const DenseMatrix<Scalar>& a) const
  {
    const auto& t = ops_[j];
    DenseMatrix<Scalar> k = DenseMatrix<Scalar>::Zero(work_, work_);
    k.leftCols(r_).noalias() += t.leftCols(r_) * a;
    k.topRows(r_).noalias() -= a * t.topRows(r_);
    return k;
  }

  double norm_of(const DenseMatrix<Scalar>& k) const
  {
    return frobenius_ ? k.norm() : gauge_norm(gauge_, k);
  }

  /// Value and the active (lowest-index maximizing) commutator.
  double evaluate(const DenseMatrix<Scalar>& a, int* active = nullptr, DenseMatrix<Scalar>* active_k = nullptr) const
  {
    double best = -1.0;
    for (std::size_t j = 0; j < ops_.size(); ++j) {
      DenseMatrix<Scalar> k = commutator_with(j, a);
      const double v = norm_of(k);
      if (v > best) {
        best = v;
        if (active) {
          *active = static_cast<int>(j);
        }
        if (active_k) {
          *active_k = std::move(k);
        }
      }
    }
    return best;
  }

  /// Hermitian gradient direction restricted to the free block [m, r).
  DenseMatrix<Scalar> free_block_subgradient(int active, const DenseMatrix<Scalar>& k) const
  {
    DenseMatrix<Scalar> gk;
    if (frobenius_) {
      const double nk = k.norm();
      gk = nk > 0.0 ? DenseMatrix<Scalar>(k / nk) : DenseMatrix<Scalar>::Zero(work_, work_);
    } else {
      gk = gauge_subgradient(gauge_, k);
    }
    const auto& t = ops_[static_cast<std::size_t>(active)];
    DenseMatrix<Scalar> grad = t.topRows(r_) * gk.leftCols(r_);
    grad.noalias() -= gk.topRows(r_) * t.leftCols(r_);
    const Eigen::Index w = r_ - m_;
    return hermitian_part(DenseMatrix<Scalar>(grad.bottomRightCorner(w, w)));
  }

  DenseMatrix<Scalar> assemble(const DenseMatrix<Scalar>& free) const
  {
    DenseMatrix<Scalar> a = DenseMatrix<Scalar>::Zero(r_, r_);
    a.topLeftCorner(m_, m_).setIdentity();
    a.bottomRightCorner(r_ - m_, r_ - m_) = free;
    return a;
  }

private:
  GaugeSpec gauge_;
  int m_;
  int r_;
  Eigen::Index work_;
  bool frobenius_ = false;
  std::vector<DenseMatrix<Scalar>> ops_;
};

template <typename Scalar>
DenseMatrix<Scalar> to_scalar(const Matrix& m)
{
  if constexpr (is_complex_v<Scalar>) {
    return m;
  } else {
    return m.real();
  }
}

template <typename Scalar>
OptimizeResult run_subgradient(const HermitianTuple& tau, const GaugeSpec& g, int m, int r, const SolverParams& params,
                               const Matrix& start_block, double start_value)
{
  const WindowObjective<Scalar> objective(tau, g, m, r);
  const Eigen::Index w = r - m;
  DenseMatrix<Scalar> free = project_window<Scalar>(
      DenseMatrix<Scalar>(to_scalar<Scalar>(start_block).bottomRightCorner(w, w)), 0);
  DenseMatrix<Scalar> best_free = free;

  OptimizeResult result;
  result.warm_value = start_value;
  double best = objective.evaluate(objective.assemble(free));
  std::vector<double> best_history;
  best_history.reserve(static_cast<std::size_t>(params.max_iterations) + 1);
  best_history.push_back(best);
  double scale = params.step_scale;
  const double diameter = std::sqrt(static_cast<double>(w));
  result.status = "max-iterations";

  int iteration = 0;
  for (iteration = 1; iteration <= params.max_iterations; ++iteration) {
    int active = 0;
    DenseMatrix<Scalar> k;
    const double value = objective.evaluate(objective.assemble(free), &active, &k);
    if (value < best) {
      best = value;
      best_free = free;
    }
    if (value == 0.0) {
      result.status = "optimal";
      best_history.push_back(best);
      break;
    }
    const DenseMatrix<Scalar> h = objective.free_block_subgradient(active, k);
    const double hn = h.norm();
    if (hn == 0.0) {
      result.status = "optimal";
      best_history.push_back(best);
      break;
    }
    if (scale <= 0.0) {
      scale = std::min(value / hn, diameter);
    }
    const double step = params.step_rule == StepRule::Polyak ? value / hn
                                                             : scale / std::sqrt(static_cast<double>(iteration));
    result.trace.push_back({iteration, value, best, step, active});
    free = project_window<Scalar>(DenseMatrix<Scalar>(free - (step / hn) * h), 0);
    best_history.push_back(best);
    const auto n = best_history.size();
    if (n > static_cast<std::size_t>(params.patience) &&
        best_history[n - 1 - static_cast<std::size_t>(params.patience)] - best < params.stop_tolerance) {
      result.status = "stalled";
      break;
    }
  }
  // the final projected iterate has not been scored yet
  const double last = objective.evaluate(objective.assemble(free));
  if (last < best) {
    best = last;
    best_free = free;
  }

  Matrix block;
  if constexpr (is_complex_v<Scalar>) {
    block = objective.assemble(best_free);
  } else {
    block = objective.assemble(best_free).template cast<Complex>();
  }
  result.iterations = std::min(iteration, params.max_iterations);
  result.unit = make_unit(std::move(block), m);
  result.value = unit_commutator_norm(tau, g, result.unit);
  return result;
}

bool feasible_for(const UnitElement& u, int m, int r)
{
  return u.floor_m >= m && u.cap_r <= r && u.certificate.ok();
}

Matrix widen(const UnitElement& u, int r)
{
  return pad_to(u.block, r);
}

} // namespace

template <typename Scalar>
DenseMatrix<Scalar> project_window(const DenseMatrix<Scalar>& a, int floor_m)
{
  require_square(a, "project_window");
  const Eigen::Index r = a.rows();
  require(floor_m >= 0 && floor_m <= r, "project_window: floor outside the block");
  DenseMatrix<Scalar> out = DenseMatrix<Scalar>::Zero(r, r);
  out.topLeftCorner(floor_m, floor_m).setIdentity();
  const Eigen::Index w = r - floor_m;
  out.bottomRightCorner(w, w) =
      clamp_spectrum<Scalar>(hermitian_part(DenseMatrix<Scalar>(a.bottomRightCorner(w, w))), 0.0, 1.0);
  return out;
}

template DenseMatrix<double> project_window<double>(const DenseMatrix<double>&, int);
template DenseMatrix<Complex> project_window<Complex>(const DenseMatrix<Complex>&, int);

UnitCertificate certify(const Matrix& block, int floor_m)
{
  require_square(block, "certify");
  require(floor_m >= 0 && floor_m <= block.rows(), "certify: floor exceeds the cap");
  UnitCertificate c;
  if (block.rows() == 0) {
    return c;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hermitian_part(block), Eigen::EigenvaluesOnly);
  c.min_eigenvalue = eig.eigenvalues()(0);
  c.max_eigenvalue = eig.eigenvalues()(block.rows() - 1);
  Matrix shifted = block;
  shifted.topLeftCorner(floor_m, floor_m) -= Matrix::Identity(floor_m, floor_m);
  c.floor_residual = std::max(0.0, -min_eigenvalue<Complex>(hermitian_part(shifted)));
  // a non-hermitian block is not a unit
  const double asym = (block - block.adjoint()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    c.min_eigenvalue = std::min(c.min_eigenvalue, -asym);
  }
  return c;
}

UnitElement make_unit(Matrix block, int floor_m)
{
  UnitElement u;
  u.certificate = certify(block, floor_m);
  u.floor_m = floor_m;
  u.cap_r = static_cast<int>(block.rows());
  u.block = std::move(block);
  return u;
}

UnitElement ramp_unit(const HermitianTuple& tau, int m, int r)
{
  require(m > 0 && m < r, "ramp_unit: needs 0 < m < r, got m=" + std::to_string(m) + ", r=" + std::to_string(r));
  check_window(tau, m, r, false);
  Matrix block = Matrix::Zero(r, r);
  for (int j = 1; j <= r; ++j) {
    const double a = std::clamp(static_cast<double>(r - j) / static_cast<double>(r - m), 0.0, 1.0);
    block(j - 1, j - 1) = a;
  }
  return make_unit(std::move(block), m);
}

double unit_commutator_norm(const HermitianTuple& tau, const GaugeSpec& g, const UnitElement& a)
{
  require(static_cast<Eigen::Index>(a.cap_r) + tau.bandwidth <= tau.dim(),
          "unit_commutator_norm: unit support plus bandwidth exceeds the instantiation");
  const Eigen::Index work = a.cap_r + tau.bandwidth;
  const auto corner = tau.corner(work);
  return tuple_gauge_norm(commutator_tuple(corner, a.dense(work)), g);
}

OptimizeResult optimize_unit(const HermitianTuple& tau, const GaugeSpec& g, int m, int r, const SolverParams& params,
                             std::span<const UnitElement> warm_starts)
{
  validate(g);
  check_window(tau, m, r, true);
  require(params.max_iterations >= 0 && params.patience >= 1, "optimize_unit: bad solver parameters");

  if (m == r) {
    OptimizeResult result;
    result.unit = make_unit(Matrix::Identity(r, r), m);
    result.value = unit_commutator_norm(tau, g, result.unit);
    result.warm_value = result.value;
    result.status = "degenerate";
    return result;
  }

  Matrix start;
  double start_value = std::numeric_limits<double>::infinity();
  bool start_real = true;
  const auto consider = [&](const UnitElement& u) {
    const double v = unit_commutator_norm(tau, g, u);
    if (v < start_value) {
      start_value = v;
      start = widen(u, r);
      start_real = u.block.imag().isZero(0.0);
    }
  };
  if (m > 0) {
    consider(ramp_unit(tau, m, r));
  } else {
    consider(make_unit(Matrix::Identity(r, r), 0));
  }
  for (const auto& u : warm_starts) {
    if (feasible_for(u, m, r)) {
      consider(u);
    }
  }

  OptimizeResult result = (is_real(tau) && start_real)
                              ? run_subgradient<double>(tau, g, m, r, params, start, start_value)
                              : run_subgradient<Complex>(tau, g, m, r, params, start, start_value);
  if (!result.unit.certificate.ok()) {
    throw NumericalFailure("optimize_unit: projected iterate failed certification for window (" + std::to_string(m) +
                           ", " + std::to_string(r) + ")");
  }
  // never hand back something worse than the start
  if (result.value > start_value) {
    result.unit = make_unit(start, m);
    result.value = unit_commutator_norm(tau, g, result.unit);
  }
  return result;
}

const KCell& KEstimateTable::at(int m, int r) const
{
  for (const auto& c : cells) {
    if (c.m == m && c.r == r) {
      return c;
    }
  }
  throw InvalidInput("KEstimateTable: no cell (" + std::to_string(m) + ", " + std::to_string(r) + ")");
}

KEstimateTable k_estimate(const HermitianTuple& tau, const GaugeSpec& g, std::vector<int> floors,
                          std::vector<int> caps, const SolverParams& params)
{
  validate(g);
  require(!floors.empty() && !caps.empty(), "k_estimate: empty floor or cap list");
  std::sort(floors.begin(), floors.end());
  floors.erase(std::unique(floors.begin(), floors.end()), floors.end());
  std::sort(caps.begin(), caps.end());
  caps.erase(std::unique(caps.begin(), caps.end()), caps.end());
  for (int m : floors) {
    for (int r : caps) {
      check_window(tau, m, r, false);
      require(m > 0, "k_estimate: floors must be positive");
    }
  }

  KEstimateTable table;
  table.gauge = g;
  table.floors = floors;
  table.caps = caps;

  // Larger floors first, smaller caps first: every finished neighbour with a
  // larger floor or smaller cap is feasible here and seeds the start.
  std::map<std::pair<int, int>, UnitElement> units;
  std::map<std::pair<int, int>, KCell> cells;
  for (auto mi = floors.rbegin(); mi != floors.rend(); ++mi) {
    for (int r : caps) {
      const int m = *mi;
      std::vector<UnitElement> seeds;
      for (const auto& [key, unit] : units) {
        if (key.first >= m && key.second <= r) {
          seeds.push_back(unit);
        }
      }
      const auto res = optimize_unit(tau, g, m, r, params, seeds);
      KCell cell;
      cell.m = m;
      cell.r = r;
      cell.beta = res.value;
      cell.ramp_value = unit_commutator_norm(tau, g, ramp_unit(tau, m, r));
      cell.iterations = res.iterations;
      cell.status = res.status;
      units.emplace(std::make_pair(m, r), res.unit);
      cells.emplace(std::make_pair(m, r), cell);
    }
  }
  for (const auto& [key, cell] : cells) {
    table.cells.push_back(cell);
  }

  constexpr double tol = 1e-6;
  for (int m : floors) {
    for (std::size_t i = 1; i < caps.size(); ++i) {
      const double prev = cells.at({m, caps[i - 1]}).beta;
      const double cur = cells.at({m, caps[i]}).beta;
      if (cur > prev + tol) {
        std::ostringstream os;
        os << "beta(" << m << ", " << caps[i] << ") = " << cur << " exceeds beta(" << m << ", " << caps[i - 1]
           << ") = " << prev;
        table.violations.push_back(os.str());
      }
    }
  }
  for (int r : caps) {
    for (std::size_t i = 1; i < floors.size(); ++i) {
      const double lower = cells.at({floors[i - 1], r}).beta;
      const double upper = cells.at({floors[i], r}).beta;
      if (upper + tol < lower) {
        std::ostringstream os;
        os << "beta(" << floors[i] << ", " << r << ") = " << upper << " is below beta(" << floors[i - 1] << ", " << r
           << ") = " << lower;
        table.violations.push_back(os.str());
      }
    }
  }
  for (auto& cell : table.cells) {
    for (const auto& v : table.violations) {
      const auto tag = "beta(" + std::to_string(cell.m) + ", " + std::to_string(cell.r) + ")";
      if (v.rfind(tag, 0) == 0) {
        cell.status = "monotonicity-violation";
      }
    }
  }

  table.estimate = 0.0;
  for (int m : floors) {
    double inner = std::numeric_limits<double>::infinity();
    for (int r : caps) {
      inner = std::min(inner, cells.at({m, r}).beta);
    }
    table.estimate = std::max(table.estimate, inner);
  }
  return table;
}

namespace {

void check_windows(const std::vector<std::pair<int, int>>& windows)
{
  require(!windows.empty(), "build_schedule: no windows");
  for (std::size_t k = 1; k < windows.size(); ++k) {
    const auto [m0, r0] = windows[k - 1];
    const auto [m1, r1] = windows[k];
    std::ostringstream os;
    os << "build_schedule: window " << k << " (" << m1 << ", " << r1 << ") after (" << m0 << ", " << r0 << ") ";
    if (m1 < m0) {
      throw InvalidInput(os.str() + "decreases the floor");
    }
    if (r1 <= r0) {
      throw InvalidInput(os.str() + "does not increase the cap");
    }
    if (k >= 2 && m1 < windows[k - 2].second) {
      throw InvalidInput(os.str() + "has floor below the cap two steps back");
    }
  }
}

// Dykstra alternation between { A >= lower } and the window set.
Matrix monotonize(const Matrix& a, const Matrix& lower_block, int floor_m)
{
  const Eigen::Index r = a.rows();
  const Matrix lower = pad_to(lower_block, r);
  Matrix x = a;
  Matrix p = Matrix::Zero(r, r);
  Matrix q = Matrix::Zero(r, r);
  for (int round = 0; round < 50; ++round) {
    const Matrix y = project_window<Complex>(Matrix(x + p), floor_m);
    p = x + p - y;
    const Matrix z = y + q;
    x = lower + clamp_spectrum<Complex>(hermitian_part(Matrix(z - lower)), 0.0, std::numeric_limits<double>::infinity());
    q = z - x;
    const Matrix candidate = project_window<Complex>(x, floor_m);
    if (min_eigenvalue<Complex>(hermitian_part(Matrix(candidate - lower))) >= -1e-10) {
      return candidate;
    }
  }
  throw NumericalFailure("build_schedule: monotonization did not reach A_k >= A_{k-1} within 50 rounds");
}

} // namespace

UnitSchedule build_schedule(const HermitianTuple& tau, const GaugeSpec& g, const std::vector<std::pair<int, int>>& windows,
                            ScheduleMode mode, const SolverParams& params)
{
  validate(g);
  check_windows(windows);
  UnitSchedule schedule;
  schedule.gauge = g;
  schedule.windows = windows;
  for (const auto& [m, r] : windows) {
    UnitElement unit = ramp_unit(tau, m, r);
    if (mode == ScheduleMode::OptimizedMonotonized) {
      unit = optimize_unit(tau, g, m, r, params).unit;
      if (!schedule.steps.empty()) {
        unit = make_unit(monotonize(unit.block, schedule.steps.back().block, m), m);
      }
      if (!unit.certificate.ok()) {
        throw NumericalFailure("build_schedule: monotonized unit failed certification");
      }
    }
    schedule.commutator_norms.push_back(unit_commutator_norm(tau, g, unit));
    schedule.steps.push_back(std::move(unit));
  }
  const auto check = verify_schedule(tau, schedule);
  if (!check.ok()) {
    throw NumericalFailure("build_schedule: schedule failed verification");
  }
  return schedule;
}

ScheduleCheck verify_schedule(const HermitianTuple& tau, const UnitSchedule& schedule)
{
  ScheduleCheck check;
  const auto& steps = schedule.steps;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    check.units_certified = check.units_certified && steps[k].certificate.ok() &&
                            certify(steps[k].block, steps[k].floor_m).ok();
    const double recomputed = unit_commutator_norm(tau, schedule.gauge, steps[k]);
    if (k < schedule.commutator_norms.size()) {
      check.norm_mismatch = std::max(check.norm_mismatch, std::abs(recomputed - schedule.commutator_norms[k]));
    } else {
      check.norm_mismatch = std::numeric_limits<double>::infinity();
    }
    if (k == 0) {
      continue;
    }
    check.caps_increasing = check.caps_increasing && steps[k].cap_r > steps[k - 1].cap_r;
    if (k >= 2) {
      check.windows_march = check.windows_march && steps[k].floor_m >= steps[k - 2].cap_r;
    }
    const Eigen::Index r = std::max(steps[k].cap_r, steps[k - 1].cap_r);
    const Matrix diff = steps[k].dense(r) - steps[k - 1].dense(r);
    check.monotonicity_gap = std::max(check.monotonicity_gap, std::max(0.0, -min_eigenvalue<Complex>(hermitian_part(diff))));
  }
  return check;
}

std::vector<std::pair<int, int>> quadratic_windows(int first, int last)
{
  require(first >= 1 && last >= first, "quadratic_windows: need 1 <= first <= last");
  std::vector<std::pair<int, int>> out;
  for (int k = first; k <= last; ++k) {
    out.emplace_back(k * k, k * k + 2 * k);
  }
  return out;
}

} // namespace qclab
