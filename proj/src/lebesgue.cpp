#include <qclab/lebesgue.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace qclab {

namespace {

const GaugeSpec kTraceClass = GaugeSpec::schatten(1.0);

void require_unit_fits(const UnitElement& a, const HermitianTuple& tau, const char* what)
{
  require(a.cap_r >= 0 && a.cap_r <= tau.dim(), std::string(what) + ": unit cap " + std::to_string(a.cap_r) +
                                                    " exceeds N = " + std::to_string(tau.dim()));
}

// tr(rho_k (A S)_{W_k}) without forming A S.
std::vector<Complex> tail_sequence_of_product(const TailStateSpec& ts, const UnitElement& a, const Matrix& s, int depth)
{
  const int fits = available_depth(ts, s.rows());
  if (depth < 0) {
    depth = fits;
  }
  require(depth <= fits, "tail sequence: depth " + std::to_string(depth) + " exceeds the " + std::to_string(fits) +
                             " windows inside N = " + std::to_string(s.rows()));
  const Eigen::Index r = a.cap_r;
  std::vector<Complex> v;
  for (int k = 0; k < depth; ++k) {
    const auto& st = ts.states[static_cast<std::size_t>(k)];
    const Eigen::Index w = st.rho.rows();
    const Eigen::Index rows = std::clamp<Eigen::Index>(r - st.start, 0, w);
    Matrix block = Matrix::Zero(w, w);
    if (rows > 0) {
      block.topRows(rows) = a.block.block(st.start, 0, rows, r) * s.block(0, st.start, r, w);
    }
    v.push_back(trace_of_product(st.rho, block));
  }
  return v;
}

double recovery_gap(const std::optional<Complex>& p, const std::optional<Complex>& q)
{
  if (!p || !q) {
    return std::numeric_limits<double>::infinity();
  }
  return std::abs(*p - *q);
}

} // namespace

Complex Recovery::value() const
{
  if (!limit) {
    throw NotConverged("recovery: " + status, sequence);
  }
  return *limit;
}

Complex eval_on_unit_product(const FunctionalSpec& phi, const HermitianTuple& tau, const UnitElement& a,
                             const Matrix& s, int depth)
{
  validate(phi);
  require_square(s, "eval_on_unit_product");
  require(s.rows() == tau.dim(), "eval_on_unit_product: operator dimension does not match the tuple");
  require_unit_fits(a, tau, "eval_on_unit_product");
  const Eigen::Index r = a.cap_r;
  Complex value(0.0);
  if (phi.trace_part) {
    const auto& tp = *phi.trace_part;
    const Eigen::Index d = tp.required_dim(tau.bandwidth);
    require(d <= tau.dim(), "eval_on_unit_product: trace part supports exceed N = " + std::to_string(tau.dim()));
    const Eigen::Index rows = std::min(d, r);
    Matrix corner = Matrix::Zero(d, d);
    if (rows > 0) {
      corner.topRows(rows) = a.block.topRows(rows) * s.block(0, 0, r, d);
    }
    value += eval_trace_part(tp, tau.corner(d), corner);
  }
  for (const auto& term : phi.singular_part) {
    auto v = tail_sequence_of_product(term.states, a, s, depth);
    // a window starting at or past the cap sees only zeros, and so does every later one
    const auto& states = term.states.states;
    const bool past_cap = !v.empty() && states[v.size() - 1].start >= r;
    const auto limit = past_cap ? std::optional<Complex>(0.0) : detect_limit(v, term.states.rule);
    if (!limit) {
      throw NotConverged("singular part: no limit detected within " + std::to_string(v.size()) + " states",
                         std::move(v));
    }
    value += term.weight * *limit;
  }
  return value;
}

Recovery recover_ac_part(const FunctionalSpec& phi, const UnitSchedule& schedule, const HermitianTuple& tau,
                         const Matrix& s, int depth)
{
  validate(phi);
  require(!schedule.steps.empty(), "recover_ac_part: empty schedule");
  Recovery out;
  for (std::size_t k = 0; k < schedule.steps.size(); ++k) {
    const auto& a = schedule.steps[k];
    require(a.certificate.ok(), "recover_ac_part: schedule step " + std::to_string(k) + " is not certified");
    try {
      out.sequence.push_back(eval_on_unit_product(phi, tau, a, s, depth));
    } catch (const NotConverged&) {
      out.status = "not-converged: singular part at step " + std::to_string(k);
      return out;
    }
  }
  out.limit = detect_limit(out.sequence, LimitRule::Plain);
  out.status = out.limit ? "converged" : "not-converged";
  return out;
}

RecoveryBound::RecoveryBound(const TracePart& tp, const HermitianTuple& tau, const GaugeSpec& g, const Matrix& s)
    : tp_(tp), tau_(tau), gauge_(g)
{
  validate(tp, tau);
  require(tp.gauge == g, "recovery_error_bound: trace part gauge differs from " + describe(g));
  require_square(s, "recovery_error_bound");
  require(s.rows() == tau.dim(), "recovery_error_bound: operator dimension does not match the tuple");
  s_norm_ = operator_norm(s);
  const GaugeSpec dual = conjugate_gauge(g);
  for (std::size_t j = 0; j < tp.ys.size(); ++j) {
    y_dual_.push_back(gauge_norm(dual, tp.ys[j]));
    s_commutators_.push_back(y_dual_.back() > 0.0 ? Matrix(-banded_commutator(tau[j], tau.bandwidth, s)) : Matrix());
  }
}

RecoveryBoundTerms RecoveryBound::terms(const UnitElement& a) const
{
  require_unit_fits(a, tau_, "recovery_error_bound");
  const Eigen::Index r = a.cap_r;
  const Eigen::Index b = tau_.bandwidth;
  RecoveryBoundTerms out;

  const Eigen::Index sx = tp_.x.rows();
  if (sx > 0) {
    const Eigen::Index q = std::min(sx, r);
    Matrix diff = pad_to(tp_.x, std::max(sx, r));
    if (q > 0) {
      diff.topLeftCorner(sx, r) -= tp_.x.leftCols(q) * a.block.topRows(q);
    }
    out.support = gauge_norm(kTraceClass, diff) * s_norm_;
  }

  for (std::size_t j = 0; j < y_dual_.size(); ++j) {
    if (y_dual_[j] == 0.0) {
      continue;
    }
    Matrix m = s_commutators_[j];
    if (r > 0) {
      m.topRows(r) -= a.block * s_commutators_[j].topRows(r);
    }
    out.tail += gauge_norm(gauge_, m) * y_dual_[j];

    const Eigen::Index d = std::min<Eigen::Index>(r + b, tau_.dim());
    const Matrix c = banded_commutator(tau_[j].topLeftCorner(d, d), b, pad_to(a.block, d));
    out.commutator += gauge_norm(gauge_, c) * y_dual_[j] * s_norm_;
  }
  return out;
}

double recovery_error_bound(const TracePart& tp, const HermitianTuple& tau, const GaugeSpec& g, const UnitElement& a,
                            const Matrix& s)
{
  return RecoveryBound(tp, tau, g, s)(a);
}

DecompositionReport decompose(const FunctionalSpec& phi, const UnitSchedule& schedule, const HermitianTuple& tau,
                              const GaugeSpec& g, std::span<const TestOperator> test_set, int depth,
                              const DecompositionTolerances& tol)
{
  validate(phi);
  DecompositionReport report;
  std::optional<FunctionalSpec> ac;
  if (phi.trace_part) {
    ac = FunctionalSpec{phi.trace_part, {}};
  }

  for (const auto& op : test_set) {
    RecoveryRecord rec;
    rec.s_id = op.id;
    rec.recovery = recover_ac_part(phi, schedule, tau, op.s, depth);
    if (!rec.recovery.limit) {
      report.diagnostics.push_back(op.id + ": " + rec.recovery.status);
    }

    if (ac) {
      const auto& tp = *phi.trace_part;
      rec.trace_value = eval_trace_part(tp, tau, op.s);
      const RecoveryBound bound(tp, tau, g, op.s);
      for (const auto& a : schedule.steps) {
        rec.bounds.push_back(bound(a));
        rec.gaps.push_back(std::abs(*rec.trace_value - eval_on_unit_product(*ac, tau, a, op.s, depth)));
        report.max_bound_violation = std::max(report.max_bound_violation, rec.gaps.back() - rec.bounds.back());
      }
    } else {
      rec.trace_value = Complex(0.0);
    }
    report.max_limit_error = std::max(report.max_limit_error, recovery_gap(rec.recovery.limit, rec.trace_value));

    if (op.support > 0) {
      try {
        const Complex direct = eval_functional(phi, tau, op.s, depth);
        if (rec.recovery.limit) {
          rec.residual = direct - *rec.recovery.limit;
          report.max_residual = std::max(report.max_residual, std::abs(*rec.residual));
        }
      } catch (const NotConverged& e) {
        report.diagnostics.push_back(op.id + ": " + e.what());
        report.max_residual = std::numeric_limits<double>::infinity();
      }
    }

    // second pass: recovering from the recovered part must not move it
    const std::optional<Complex> again =
        ac ? recover_ac_part(*ac, schedule, tau, op.s, depth).limit : std::optional<Complex>(0.0);
    report.idempotence_gap = std::max(report.idempotence_gap, recovery_gap(again, rec.recovery.limit));

    report.per_s.push_back(std::move(rec));
  }

  report.additivity.lower = functional_norm_bounds(phi, tau, g, test_set, depth).lower;
  report.additivity.upper_ac = ac ? functional_norm_upper(*ac, g) : 0.0;
  for (const auto& term : phi.singular_part) {
    report.additivity.upper_singular += std::abs(term.weight);
  }

  auto check = [&](bool pass, const std::string& what) {
    if (!pass) {
      report.ok = false;
      report.diagnostics.push_back(what);
    }
  };
  check(report.diagnostics.empty(), "recovery did not converge on every operator");
  check(report.max_residual <= tol.residual, "residual on finitely supported operators exceeds tolerance");
  check(report.max_limit_error <= tol.limit, "recovered limit differs from the trace part");
  check(report.max_bound_violation <= tol.bound, "measured gap exceeds the recovery estimate");
  check(report.idempotence_gap <= tol.idempotence, "second recovery pass moved the values");
  check(report.additivity.gap() <= tol.additivity, "norm lower bound exceeds the sum of part upper bounds");
  return report;
}

bool ProjectionCheck::ok(double idempotence, double linearity, double additivity) const
{
  auto within = [](const std::vector<double>& v, double tol) {
    return std::all_of(v.begin(), v.end(), [tol](double x) { return x <= tol; });
  };
  return within(idempotence_gaps, idempotence) && within(linearity_gaps, linearity) &&
         within(additivity_gaps, additivity);
}

ProjectionCheck projection_check(std::span<const FunctionalSpec> phis, const UnitSchedule& schedule,
                                 const HermitianTuple& tau, const GaugeSpec& g, std::span<const TestOperator> test_set,
                                 int depth, Complex alpha, Complex beta)
{
  ProjectionCheck out;
  std::vector<std::vector<std::optional<Complex>>> limits;
  for (const auto& phi : phis) {
    const auto report = decompose(phi, schedule, tau, g, test_set, depth);
    out.idempotence_gaps.push_back(report.idempotence_gap);
    out.additivity_gaps.push_back(report.additivity.gap());
    std::vector<std::optional<Complex>> row;
    for (const auto& rec : report.per_s) {
      row.push_back(rec.recovery.limit);
    }
    limits.push_back(std::move(row));
  }
  for (std::size_t i = 0; i + 1 < phis.size(); ++i) {
    const auto combo = linear_combination(alpha, phis[i], beta, phis[i + 1]);
    double gap = 0.0;
    for (std::size_t k = 0; k < test_set.size(); ++k) {
      const auto rec = recover_ac_part(combo, schedule, tau, test_set[k].s, depth);
      std::optional<Complex> expected;
      if (limits[i][k] && limits[i + 1][k]) {
        expected = alpha * *limits[i][k] + beta * *limits[i + 1][k];
      }
      gap = std::max(gap, recovery_gap(rec.limit, expected));
    }
    out.linearity_gaps.push_back(gap);
  }
  return out;
}

} // namespace qclab
