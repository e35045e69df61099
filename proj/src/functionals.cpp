#include <qclab/functionals.hpp>

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace qclab {

namespace {

const GaugeSpec kTraceClass = GaugeSpec::schatten(1.0);

Eigen::Index max_rows(const std::vector<Matrix>& ms)
{
  Eigen::Index out = 0;
  for (const auto& m : ms) {
    out = std::max(out, m.rows());
  }
  return out;
}

void require_square_blocks(const Matrix& x, const std::vector<Matrix>& ys, const HermitianTuple& tau, const char* what)
{
  require(x.rows() == x.cols(), std::string(what) + ": x block is not square");
  require(ys.empty() || ys.size() == tau.size(), std::string(what) + ": expected " + std::to_string(tau.size()) +
                                                     " y blocks, got " + std::to_string(ys.size()));
  for (const auto& y : ys) {
    require(y.rows() == y.cols(), std::string(what) + ": y block is not square");
  }
}

// Tr(S X) + sum_j Tr(Y_j [T_j, S]) computed on the smallest exact corners.
Complex trace_functional(const Matrix& x, const std::vector<Matrix>& ys, const HermitianTuple& tau, const Matrix& s)
{
  require_square(s, "eval_trace_part");
  require(s.rows() == tau.dim(), "eval_trace_part: operator dimension " + std::to_string(s.rows()) +
                                     " does not match tuple dimension " + std::to_string(tau.dim()));
  const Eigen::Index n = s.rows();
  const Eigen::Index b = tau.bandwidth;
  require(x.rows() <= n, "eval_trace_part: support of X (" + std::to_string(x.rows()) + ") exceeds N = " +
                             std::to_string(n));
  Complex value = trace_of_product(s.topLeftCorner(x.rows(), x.rows()), x);
  for (std::size_t j = 0; j < ys.size(); ++j) {
    const Eigen::Index sy = ys[j].rows();
    if (sy == 0) {
      continue;
    }
    require(sy + b <= n, "eval_trace_part: support of Y plus bandwidth (" + std::to_string(sy + b) +
                             ") exceeds N = " + std::to_string(n));
    const Matrix k = banded_commutator(tau[j].topLeftCorner(sy + b, sy + b), b, s.topLeftCorner(sy + b, sy + b));
    value += trace_of_product(ys[j], k.topLeftCorner(sy, sy));
  }
  return value;
}

Matrix scaled_sum(Complex a, const Matrix& p, Complex b, const Matrix& q)
{
  const Eigen::Index d = std::max(p.rows(), q.rows());
  return a * pad_to(p, d) + b * pad_to(q, d);
}

} // namespace

Eigen::Index TracePart::y_support() const
{
  return max_rows(ys);
}

Eigen::Index TracePart::required_dim(int bandwidth) const
{
  const Eigen::Index sy = y_support();
  return std::max(x_support(), sy > 0 ? sy + bandwidth : 0);
}

void validate(const TracePart& tp, const HermitianTuple& tau)
{
  validate(tp.gauge);
  require_square_blocks(tp.x, tp.ys, tau, "TracePart");
  require(tp.required_dim(tau.bandwidth) <= tau.dim(),
          "TracePart: supports need N >= " + std::to_string(tp.required_dim(tau.bandwidth)) + ", tuple has N = " +
              std::to_string(tau.dim()));
}

void validate(const TailStateSpec& ts)
{
  require(!ts.states.empty(), "TailStateSpec: no states");
  int previous = -1;
  for (std::size_t k = 0; k < ts.states.size(); ++k) {
    const auto& st = ts.states[k];
    const std::string where = "TailStateSpec: state " + std::to_string(k);
    require(st.start > previous, where + ": window starts must increase strictly");
    previous = st.start;
    require(st.rho.rows() > 0 && st.rho.rows() == st.rho.cols(), where + ": density matrix must be square");
    require(std::abs(st.rho.trace() - 1.0) <= 1e-12, where + ": trace is not 1");
    require((st.rho - st.rho.adjoint()).cwiseAbs().maxCoeff() <= 1e-12, where + ": not hermitian");
    const Matrix h = (st.rho + st.rho.adjoint()) / 2.0;
    const double low = Eigen::SelfAdjointEigenSolver<Matrix>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    require(low >= -1e-12, where + ": not positive semidefinite");
  }
}

TailStateSpec coordinate_states(int first, int count, LimitRule rule)
{
  require(first >= 0 && count > 0, "coordinate_states: need first >= 0 and count > 0");
  TailStateSpec ts;
  ts.rule = rule;
  for (int k = 0; k < count; ++k) {
    ts.states.push_back({first + k, Matrix::Identity(1, 1)});
  }
  return ts;
}

TailStateSpec random_tail_states(Rng& rng, int first, int width, int count, LimitRule rule)
{
  require(first >= 0 && width > 0 && count > 0, "random_tail_states: need first >= 0, width > 0, count > 0");
  TailStateSpec ts;
  ts.rule = rule;
  for (int k = 0; k < count; ++k) {
    ts.states.push_back({first + k * width, random_density(rng, width)});
  }
  return ts;
}

void validate(const FunctionalSpec& phi)
{
  require(phi.trace_part.has_value() || phi.has_singular(), "FunctionalSpec: needs a trace part or a singular part");
  for (const auto& term : phi.singular_part) {
    validate(term.states);
  }
  if (phi.trace_part) {
    validate(phi.trace_part->gauge);
  }
}

FunctionalSpec linear_combination(Complex a, const FunctionalSpec& f, Complex b, const FunctionalSpec& g)
{
  validate(f);
  validate(g);
  FunctionalSpec out;
  if (f.trace_part || g.trace_part) {
    TracePart tp;
    const TracePart zero{Matrix(), {}, f.trace_part ? f.trace_part->gauge : g.trace_part->gauge};
    const TracePart& p = f.trace_part ? *f.trace_part : zero;
    const TracePart& q = g.trace_part ? *g.trace_part : zero;
    require(p.gauge == q.gauge, "linear_combination: trace parts use different gauges");
    tp.gauge = p.gauge;
    tp.x = scaled_sum(a, p.x, b, q.x);
    const std::size_t n = std::max(p.ys.size(), q.ys.size());
    for (std::size_t j = 0; j < n; ++j) {
      tp.ys.push_back(scaled_sum(a, j < p.ys.size() ? p.ys[j] : Matrix(), b, j < q.ys.size() ? q.ys[j] : Matrix()));
    }
    out.trace_part = std::move(tp);
  }
  for (const auto& term : f.singular_part) {
    out.singular_part.push_back({a * term.weight, term.states});
  }
  for (const auto& term : g.singular_part) {
    out.singular_part.push_back({b * term.weight, term.states});
  }
  return out;
}

std::optional<Complex> detect_limit(std::span<const Complex> v, LimitRule rule)
{
  std::vector<Complex> means;
  if (rule == LimitRule::Cesaro) {
    // trailing-block (de la Vallee Poussin) means over the last 2 * max(1, k / 4) terms
    means.reserve(v.size());
    for (std::size_t k = 1; k <= v.size(); ++k) {
      const std::size_t len = std::min(k, 2 * std::max<std::size_t>(1, k / 4));
      Complex acc(0.0);
      for (std::size_t i = k - len; i < k; ++i) {
        acc += v[i];
      }
      means.push_back(acc / static_cast<double>(len));
    }
    v = means;
  }
  if (v.size() < static_cast<std::size_t>(kLimitRun) + 1) {
    return std::nullopt;
  }
  for (std::size_t i = v.size() - kLimitRun; i < v.size(); ++i) {
    if (!(std::abs(v[i] - v[i - 1]) < kLimitTolerance)) {
      return std::nullopt;
    }
  }
  return v.back();
}

Complex eval_trace_part(const TracePart& tp, const HermitianTuple& tau, const Matrix& s)
{
  require_square_blocks(tp.x, tp.ys, tau, "eval_trace_part");
  return trace_functional(tp.x, tp.ys, tau, s);
}

Matrix reduce_to_trace(const TracePart& tp, const HermitianTuple& tau)
{
  validate(tp, tau);
  const Eigen::Index d = tp.required_dim(tau.bandwidth);
  Matrix out = pad_to(tp.x, d);
  for (std::size_t j = 0; j < tp.ys.size(); ++j) {
    if (tp.ys[j].rows() == 0) {
      continue;
    }
    out -= banded_commutator(tau[j].topLeftCorner(d, d), tau.bandwidth, pad_to(tp.ys[j], d));
  }
  return out;
}

int available_depth(const TailStateSpec& ts, Eigen::Index n)
{
  int depth = 0;
  for (const auto& st : ts.states) {
    if (st.start + st.rho.rows() > n) {
      break;
    }
    ++depth;
  }
  return depth;
}

std::vector<Complex> tail_sequence(const TailStateSpec& ts, const Matrix& s, int depth)
{
  require_square(s, "tail_sequence");
  const int fits = available_depth(ts, s.rows());
  if (depth < 0) {
    depth = fits;
  }
  require(depth <= fits, "tail_sequence: depth " + std::to_string(depth) + " exceeds the " + std::to_string(fits) +
                             " windows inside N = " + std::to_string(s.rows()));
  std::vector<Complex> v;
  v.reserve(static_cast<std::size_t>(depth));
  for (int k = 0; k < depth; ++k) {
    const auto& st = ts.states[static_cast<std::size_t>(k)];
    const Eigen::Index w = st.rho.rows();
    v.push_back(trace_of_product(st.rho, s.block(st.start, st.start, w, w)));
  }
  return v;
}

Complex eval_singular_part(const TailStateSpec& ts, const Matrix& s, int depth)
{
  auto v = tail_sequence(ts, s, depth);
  const auto limit = detect_limit(v, ts.rule);
  if (!limit) {
    throw NotConverged("singular part: no limit detected within " + std::to_string(v.size()) + " states",
                       std::move(v));
  }
  return *limit;
}

Complex eval_functional(const FunctionalSpec& phi, const HermitianTuple& tau, const Matrix& s, int depth)
{
  validate(phi);
  Complex value(0.0);
  if (phi.trace_part) {
    value += eval_trace_part(*phi.trace_part, tau, s);
  }
  for (const auto& term : phi.singular_part) {
    value += term.weight * eval_singular_part(term.states, s, depth);
  }
  return value;
}

std::string to_string(TestKind kind)
{
  switch (kind) {
  case TestKind::RandomHermitian:
    return "random-hermitian";
  case TestKind::Banded:
    return "banded";
  case TestKind::FinitelySupported:
    return "finitely-supported";
  }
  return "unknown";
}

TestKind test_kind_from_string(const std::string& name)
{
  for (auto kind : {TestKind::RandomHermitian, TestKind::Banded, TestKind::FinitelySupported}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw InvalidInput("unknown test-set kind '" + name + "'");
}

std::vector<TestOperator> make_test_set(const TestSetSpec& spec, Eigen::Index n)
{
  require(spec.count >= 0, "make_test_set: negative count");
  Rng rng(spec.seed);
  std::vector<TestOperator> out;
  for (int i = 0; i < spec.count; ++i) {
    TestOperator op;
    op.id = to_string(spec.kind) + "-" + std::to_string(i);
    switch (spec.kind) {
    case TestKind::RandomHermitian:
      op.s = random_hermitian(rng, n) / std::sqrt(static_cast<double>(n));
      break;
    case TestKind::Banded:
      require(spec.support >= 0 && spec.support < n, "make_test_set: bandwidth out of range");
      op.s = random_banded_toeplitz(rng, n, spec.support);
      break;
    case TestKind::FinitelySupported:
      require(spec.support > 0 && spec.support <= n, "make_test_set: support out of range");
      op.s = pad_to(random_hermitian(rng, spec.support), n);
      op.support = spec.support;
      break;
    }
    out.push_back(std::move(op));
  }
  return out;
}

double functional_norm_upper(const FunctionalSpec& phi, const GaugeSpec& g)
{
  validate(phi);
  double upper = 0.0;
  if (phi.trace_part) {
    require(phi.trace_part->gauge == g, "functional_norm_upper: trace part gauge differs from " + describe(g));
    upper += gauge_norm(kTraceClass, phi.trace_part->x);
    const GaugeSpec dual = conjugate_gauge(g);
    for (const auto& y : phi.trace_part->ys) {
      upper += gauge_norm(dual, y);
    }
  }
  for (const auto& term : phi.singular_part) {
    upper += std::abs(term.weight);
  }
  return upper;
}

NormBounds functional_norm_bounds(const FunctionalSpec& phi, const HermitianTuple& tau, const GaugeSpec& g,
                                  std::span<const TestOperator> samples, int depth)
{
  NormBounds out;
  out.upper = functional_norm_upper(phi, g);
  auto visit = [&](const Matrix& s) {
    Complex value;
    try {
      value = eval_functional(phi, tau, s, depth);
    } catch (const NotConverged&) {
      ++out.skipped;
      return;
    }
    const double norm = e_norm_max(tau, g, s);
    if (norm > 0.0) {
      out.lower = std::max(out.lower, std::abs(value) / norm);
    }
  };
  visit(Matrix::Identity(tau.dim(), tau.dim()));
  for (const auto& op : samples) {
    visit(op.s);
  }
  return out;
}

NormBounds functional_norm_bounds(const FunctionalSpec& phi, const HermitianTuple& tau, const GaugeSpec& g,
                                  const TestSetSpec& sample_spec, int depth)
{
  const auto samples = make_test_set(sample_spec, tau.dim());
  return functional_norm_bounds(phi, tau, g, samples, depth);
}

PredualElement null_element(const HermitianTuple& tau, std::vector<Matrix> ys, const GaugeSpec& g)
{
  require(ys.size() == tau.size(), "null_element: need one y per tuple operator");
  const Eigen::Index d = max_rows(ys) + tau.bandwidth;
  require(d <= tau.dim(), "null_element: supports plus bandwidth exceed N");
  Matrix x = Matrix::Zero(d, d);
  for (std::size_t j = 0; j < ys.size(); ++j) {
    x += banded_commutator(tau[j].topLeftCorner(d, d), tau.bandwidth, pad_to(ys[j], d));
  }
  return {std::move(x), std::move(ys), g};
}

Complex pairing(const PredualElement& pe, const HermitianTuple& tau, const Matrix& s)
{
  require_square_blocks(pe.x, pe.ys, tau, "pairing");
  return trace_functional(pe.x, pe.ys, tau, s);
}

double predual_norm(const PredualElement& pe)
{
  double out = gauge_norm(kTraceClass, pe.x);
  const GaugeSpec dual = conjugate_gauge(pe.gauge);
  for (const auto& y : pe.ys) {
    out += gauge_norm(dual, y);
  }
  return out;
}

namespace {

// Perturbations (w_j) supported in the leading window, acting on a d x d corner.
class QuotientProblem {
public:
  QuotientProblem(const PredualElement& pe, const HermitianTuple& tau, Eigen::Index window, Eigen::Index d)
      : window_(window), d_(d), band_(tau.bandwidth), dual_(conjugate_gauge(pe.gauge))
  {
    x_ = pad_to(pe.x, d);
    for (std::size_t j = 0; j < tau.size(); ++j) {
      t_.push_back(tau[j].topLeftCorner(d, d));
      y_.push_back(j < pe.ys.size() ? pad_to(pe.ys[j], window) : Matrix::Zero(window, window));
    }
  }

  std::vector<Matrix> zero() const { return std::vector<Matrix>(t_.size(), Matrix::Zero(window_, window_)); }

  Matrix shift(const std::vector<Matrix>& w) const
  {
    Matrix z = Matrix::Zero(d_, d_);
    for (std::size_t j = 0; j < t_.size(); ++j) {
      z += banded_commutator(t_[j], band_, pad_to(w[j], d_));
    }
    return z;
  }

  // adjoint of w -> sum_j [T_j, w_j] under Re Tr(A^* B), restricted to the window
  std::vector<Matrix> shift_adjoint(const Matrix& u) const
  {
    std::vector<Matrix> out;
    for (const auto& t : t_) {
      out.push_back(banded_commutator(t, band_, u).topLeftCorner(window_, window_));
    }
    return out;
  }

  double value(const std::vector<Matrix>& w) const
  {
    double f = gauge_norm(kTraceClass, Matrix(x_ + shift(w)));
    for (std::size_t j = 0; j < t_.size(); ++j) {
      f += gauge_norm(dual_, Matrix(y_[j] + w[j]));
    }
    return f;
  }

  std::vector<Matrix> subgradient(const std::vector<Matrix>& w) const
  {
    auto grad = shift_adjoint(gauge_subgradient(kTraceClass, Matrix(x_ + shift(w))));
    for (std::size_t j = 0; j < t_.size(); ++j) {
      grad[j] += gauge_subgradient(dual_, Matrix(y_[j] + w[j]));
    }
    return grad;
  }

  // CG on the normal equations of min |x + sum [T_j, w_j]|_F^2 + sum |y_j + w_j|_F^2
  std::vector<Matrix> least_squares(int iterations) const
  {
    auto w = zero();
    Matrix rz = -x_;
    std::vector<Matrix> rv;
    for (const auto& y : y_) {
      rv.push_back(-y);
    }
    auto normal = [&](const Matrix& z, const std::vector<Matrix>& v) {
      auto out = shift_adjoint(z);
      for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] += v[j];
      }
      return out;
    };
    auto s = normal(rz, rv);
    auto p = s;
    double gamma = sq(s);
    const double stop = 1e-30 * std::max(1.0, gamma);
    for (int it = 0; it < iterations && gamma > stop; ++it) {
      const Matrix qz = shift(p);
      const double qq = qz.squaredNorm() + sq(p);
      if (qq == 0.0) {
        break;
      }
      const double alpha = gamma / qq;
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] += alpha * p[j];
        rv[j] -= alpha * p[j];
      }
      rz -= alpha * qz;
      s = normal(rz, rv);
      const double next = sq(s);
      for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] = s[j] + (next / gamma) * p[j];
      }
      gamma = next;
    }
    return w;
  }

  static double sq(const std::vector<Matrix>& v)
  {
    double out = 0.0;
    for (const auto& m : v) {
      out += m.squaredNorm();
    }
    return out;
  }

private:
  Eigen::Index window_;
  Eigen::Index d_;
  int band_;
  GaugeSpec dual_;
  Matrix x_;
  std::vector<Matrix> t_;
  std::vector<Matrix> y_;
};

} // namespace

QuotientBounds quotient_norm_bounds(const PredualElement& pe, const HermitianTuple& tau, const GaugeSpec& g, int window,
                                    std::span<const TestOperator> samples, const QuotientParams& params)
{
  validate(g);
  require(pe.gauge == g, "quotient_norm_bounds: element gauge differs from " + describe(g));
  require_square_blocks(pe.x, pe.ys, tau, "quotient_norm_bounds");
  require(window >= 1 && window >= max_rows(pe.ys),
          "quotient_norm_bounds: window " + std::to_string(window) + " does not contain the y supports");
  const Eigen::Index d = std::max<Eigen::Index>(pe.x.rows(), window + tau.bandwidth);
  require(d <= tau.dim(), "quotient_norm_bounds: window plus bandwidth exceeds N = " + std::to_string(tau.dim()));

  QuotientBounds out;
  out.representative_norm = predual_norm(pe);

  std::vector<std::pair<double, double>> probes; // (|pairing|, |||S|||)
  auto probe = [&](const Matrix& s) {
    const double norm = e_norm_max(tau, g, s);
    const double value = std::abs(pairing(pe, tau, s));
    probes.emplace_back(value, norm);
    if (norm > 0.0) {
      out.lower = std::max(out.lower, value / norm);
    }
  };
  probe(Matrix::Identity(tau.dim(), tau.dim()));
  for (const auto& op : samples) {
    probe(op.s);
  }

  const QuotientProblem problem(pe, tau, window, d);
  auto best_w = problem.zero();
  double best = problem.value(best_w);
  {
    auto w = problem.least_squares(params.least_squares_iterations);
    const double f = problem.value(w);
    if (f < best) {
      best = f;
      best_w = std::move(w);
    }
  }

  // Polyak steps aimed at the sampled lower bound, damped when progress stalls
  auto w = best_w;
  double theta = 1.0;
  int since_improvement = 0;
  int it = 0;
  for (; it < params.max_iterations && best - out.lower > params.target_gap && theta > 1e-6; ++it) {
    const double f = problem.value(w);
    if (f < best) {
      best = f;
      best_w = w;
      since_improvement = 0;
    } else if (++since_improvement >= 50) {
      theta /= 2.0;
      since_improvement = 0;
      w = best_w;
      continue;
    }
    const auto grad = problem.subgradient(w);
    const double gg = QuotientProblem::sq(grad);
    if (gg == 0.0) {
      break;
    }
    const double step = theta * (f - out.lower) / gg;
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= step * grad[j];
    }
  }
  out.iterations = it;
  out.upper = best;
  out.perturbation = std::move(best_w);
  for (const auto& [value, norm] : probes) {
    out.duality_violation = std::max(out.duality_violation, value - out.upper * norm);
  }
  return out;
}

} // namespace qclab
