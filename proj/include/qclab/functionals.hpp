#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <qclab/idealops.hpp>
#include <qclab/random.hpp>

namespace qclab {

//
// Functionals on the commutant modulo an ideal. A trace part acts by
// S -> Tr(S X) + sum_j Tr(Y_j [T_j, S]) with finitely supported X, Y_j; a
// singular part is a weighted sum of limits of states on windows marching to
// infinity, so it vanishes on finitely supported S.
//

/// X and Y_j are stored as leading blocks; the block size is the declared support.
struct TracePart {
  Matrix x;
  std::vector<Matrix> ys; ///< one per tuple operator; empty means all Y_j = 0
  GaugeSpec gauge;        ///< ideal of the commutators; Y_j is measured in the conjugate gauge

  Eigen::Index x_support() const { return x.rows(); }
  Eigen::Index y_support() const;
  /// Smallest instantiation at which the trace is an exact finite sum.
  Eigen::Index required_dim(int bandwidth) const;
};

void validate(const TracePart& tp, const HermitianTuple& tau);

enum class LimitRule {
  Plain,  ///< last value once 5 consecutive increments are below 1e-9
  Cesaro, ///< same detection on trailing-block means
};

/// A state rho supported on coordinates [start, start + rho.rows()).
struct TailState {
  int start = 0;
  Matrix rho;
};

struct TailStateSpec {
  std::vector<TailState> states;
  LimitRule rule = LimitRule::Plain;
};

void validate(const TailStateSpec& ts);

/// rho_k = E_kk for k = first, first + 1, ... (0-based).
TailStateSpec coordinate_states(int first, int count, LimitRule rule = LimitRule::Plain);

/// Random density matrices on consecutive windows of the given width starting at `first`.
TailStateSpec random_tail_states(Rng& rng, int first, int width, int count, LimitRule rule = LimitRule::Plain);

struct TailTerm {
  Complex weight{1.0, 0.0};
  TailStateSpec states;
};

struct FunctionalSpec {
  std::optional<TracePart> trace_part;
  std::vector<TailTerm> singular_part;

  bool has_singular() const { return !singular_part.empty(); }
};

void validate(const FunctionalSpec& phi);

/// a * f + b * g, part by part. Trace parts must share a gauge.
FunctionalSpec linear_combination(Complex a, const FunctionalSpec& f, Complex b, const FunctionalSpec& g);

/// Limit detection failed; carries the sequence that was examined.
class NotConverged : public NumericalFailure {
public:
  NotConverged(const std::string& what, std::vector<Complex> sequence)
      : NumericalFailure(what), sequence_(std::move(sequence))
  {
  }
  const std::vector<Complex>& sequence() const { return sequence_; }

private:
  std::vector<Complex> sequence_;
};

inline constexpr double kLimitTolerance = 1e-9;
inline constexpr int kLimitRun = 5;

std::optional<Complex> detect_limit(std::span<const Complex> v, LimitRule rule);

Complex eval_trace_part(const TracePart& tp, const HermitianTuple& tau, const Matrix& s);

/// X' = X - sum_j [T_j, Y_j], so that Tr(S X') equals the trace part at S.
Matrix reduce_to_trace(const TracePart& tp, const HermitianTuple& tau);

/// Number of states whose window fits inside an n x n operator.
int available_depth(const TailStateSpec& ts, Eigen::Index n);

/// tr(rho_k S) for the first `depth` states; depth < 0 takes every state that fits.
std::vector<Complex> tail_sequence(const TailStateSpec& ts, const Matrix& s, int depth = -1);

/// Throws NotConverged when the limit is not detected within `depth` states.
Complex eval_singular_part(const TailStateSpec& ts, const Matrix& s, int depth = -1);

Complex eval_functional(const FunctionalSpec& phi, const HermitianTuple& tau, const Matrix& s, int depth = -1);

enum class TestKind { RandomHermitian, Banded, FinitelySupported };

struct TestSetSpec {
  std::uint64_t seed = 0;
  int count = 8;
  TestKind kind = TestKind::FinitelySupported;
  int support = 16; ///< block size for finitely supported, bandwidth for banded
};

struct TestOperator {
  std::string id;
  Matrix s;
  Eigen::Index support = 0; ///< 0 unless finitely supported
};

std::string to_string(TestKind kind);
TestKind test_kind_from_string(const std::string& name);

std::vector<TestOperator> make_test_set(const TestSetSpec& spec, Eigen::Index n);

struct NormBounds {
  double lower = 0.0;
  double upper = 0.0;
  int skipped = 0; ///< samples on which the singular part did not converge
};

/// Upper bound |X|_1 + sum_j |Y_j|_g* + sum |weights|.
double functional_norm_upper(const FunctionalSpec& phi, const GaugeSpec& g);

/// Sampled lower bound against the max-form commutant norm; the identity is always sampled.
NormBounds functional_norm_bounds(const FunctionalSpec& phi, const HermitianTuple& tau, const GaugeSpec& g,
                                  std::span<const TestOperator> samples, int depth = -1);
NormBounds functional_norm_bounds(const FunctionalSpec& phi, const HermitianTuple& tau, const GaugeSpec& g,
                                  const TestSetSpec& sample_spec, int depth = -1);

/// Representative (x, (y_j)) of a class in the predual.
struct PredualElement {
  Matrix x;
  std::vector<Matrix> ys;
  GaugeSpec gauge;
};

/// The element (sum_j [T_j, y_j], (y_j)), which pairs to zero with every S.
PredualElement null_element(const HermitianTuple& tau, std::vector<Matrix> ys, const GaugeSpec& g);

/// Tr(S x) + sum_j Tr(y_j [T_j, S]).
Complex pairing(const PredualElement& pe, const HermitianTuple& tau, const Matrix& s);

/// |x|_1 + sum_j |y_j|_g*.
double predual_norm(const PredualElement& pe);

struct QuotientBounds {
  double lower = 0.0;
  double upper = 0.0;
  double representative_norm = 0.0; ///< norm of the given representative
  double duality_violation = 0.0;   ///< max over samples of |pairing| - upper * |||S|||, floored at 0
  int iterations = 0;
  std::vector<Matrix> perturbation; ///< w_j of the best representative
};

struct QuotientParams {
  int max_iterations = 3000;
  int least_squares_iterations = 500;
  double target_gap = 1e-10; ///< stop once upper - lower falls below this
};

/// Bounds on the quotient norm: the sampled pairing supremum from below, and
/// the best representative (x + sum_j [T_j, w_j], (y_j + w_j)) with w_j
/// supported in the leading `window` coordinates from above.
QuotientBounds quotient_norm_bounds(const PredualElement& pe, const HermitianTuple& tau, const GaugeSpec& g, int window,
                                    std::span<const TestOperator> samples, const QuotientParams& params = {});

} // namespace qclab
