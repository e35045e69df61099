#include <doctest.h>

#include <qclab/functionals.hpp>

using namespace qclab;

namespace {

// Tr(S X) + sum_j Tr(Y_j (T_j S - S T_j)) with everything padded to N and multiplied densely.
Complex dense_trace_part(const TracePart& tp, const HermitianTuple& tau, const Matrix& s)
{
  const auto n = s.rows();
  Complex v = (s * pad_to(tp.x, n)).trace();
  for (std::size_t j = 0; j < tp.ys.size(); ++j) {
    v += (pad_to(tp.ys[j], n) * (tau[j] * s - s * tau[j])).trace();
  }
  return v;
}

TracePart random_trace_part(Rng& rng, const HermitianTuple& tau, int sx, int sy, const GaugeSpec& g)
{
  TracePart tp{random_matrix(rng, sx, sx), {}, g};
  for (std::size_t j = 0; j < tau.size(); ++j) {
    tp.ys.push_back(random_matrix(rng, sy, sy));
  }
  return tp;
}

Matrix unit_entry(Eigen::Index n, Eigen::Index i, Eigen::Index j)
{
  Matrix e = Matrix::Zero(n, n);
  e(i, j) = 1.0;
  return e;
}

} // namespace

TEST_CASE("trace part examples")
{
  Rng rng(1);
  const auto lp = instantiate_model(builtin_model("lap-pos"), 8);
  const Matrix s = random_matrix(rng, 8, 8);
  const TracePart corner{unit_entry(1, 0, 0), {}, GaugeSpec::schatten(2)};
  CHECK(eval_trace_part(corner, lp, s) == s(0, 0));

  Matrix t = Matrix::Zero(2, 2);
  t(1, 1) = 1.0;
  const auto tau = make_tuple({t});
  const Matrix s2 = random_matrix(rng, 2, 2);
  const TracePart commuted{Matrix::Zero(2, 2), {unit_entry(2, 1, 0)}, GaugeSpec::schatten(2)};
  CHECK(std::abs(eval_trace_part(commuted, tau, s2) + s2(0, 1)) < 1e-15);
}

TEST_CASE("trace part matches dense evaluation")
{
  Rng rng(2);
  for (const auto* name : {"lap-pos", "shift-parts"}) {
    const auto tau = instantiate_model(builtin_model(name, 0, {{"grid", 30.0}}), 20);
    for (int trial = 0; trial < 10; ++trial) {
      const auto tp = random_trace_part(rng, tau, rng.uniform_int(1, 20), rng.uniform_int(1, 19), GaugeSpec::schatten(1));
      const Matrix s = random_matrix(rng, 20, 20);
      const Complex v = eval_trace_part(tp, tau, s);
      CHECK(std::abs(v - dense_trace_part(tp, tau, s)) < 1e-10);
      // linear in S
      const Matrix s2 = random_matrix(rng, 20, 20);
      const Complex w = eval_trace_part(tp, tau, Matrix(2.0 * s - Complex(0.0, 3.0) * s2));
      CHECK(std::abs(w - (2.0 * v - Complex(0.0, 3.0) * eval_trace_part(tp, tau, s2))) < 1e-10);
    }
  }
}

TEST_CASE("trace part refuses supports past the instantiation")
{
  Rng rng(3);
  const auto lp = instantiate_model(builtin_model("lap-pos"), 10);
  const TracePart wide{Matrix::Zero(2, 2), {random_matrix(rng, 10, 10), Matrix()}, GaugeSpec::schatten(2)};
  CHECK_THROWS_AS(eval_trace_part(wide, lp, Matrix::Identity(10, 10)), InvalidInput);
  CHECK_THROWS_AS(reduce_to_trace(wide, lp), InvalidInput);
  const TracePart bigx{Matrix::Zero(11, 11), {}, GaugeSpec::schatten(2)};
  CHECK_THROWS_AS(eval_trace_part(bigx, lp, Matrix::Identity(10, 10)), InvalidInput);
  const TracePart count{Matrix::Zero(2, 2), {Matrix::Zero(2, 2)}, GaugeSpec::schatten(2)};
  CHECK_THROWS_AS(eval_trace_part(count, lp, Matrix::Identity(10, 10)), InvalidInput);
}

TEST_CASE("reduction to a pure trace")
{
  Rng rng(4);
  const auto lp = instantiate_model(builtin_model("lap-pos"), 12);
  const TracePart plain{random_matrix(rng, 5, 5), {}, GaugeSpec::schatten(2)};
  CHECK(reduce_to_trace(plain, lp) == plain.x);

  // diagonal Y commutes with the diagonal-grid tuple
  const auto dg = instantiate_model(builtin_model("diagonal-grid", 2), 12);
  Matrix d = Matrix::Zero(6, 6);
  d.diagonal().setLinSpaced(6, 1.0, 6.0);
  const TracePart commuting{random_matrix(rng, 6, 6), {d, d}, GaugeSpec::schatten(2)};
  CHECK(reduce_to_trace(commuting, dg) == commuting.x);

  const Matrix xr = random_matrix(rng, 7, 7);
  const TracePart padded{xr, {Matrix::Zero(3, 3), Matrix::Zero(3, 3)}, GaugeSpec::schatten(2)};
  CHECK(reduce_to_trace(padded, lp) == xr);

  for (int trial = 0; trial < 5; ++trial) {
    const auto tp = random_trace_part(rng, lp, 4, 4, GaugeSpec::schatten(2));
    const Matrix xp = reduce_to_trace(tp, lp);
    for (int k = 0; k < 20; ++k) {
      const Matrix s = random_matrix(rng, 12, 12);
      const Complex direct = dense_trace_part(tp, lp, s);
      CHECK(std::abs((s * pad_to(xp, 12)).trace() - direct) < 1e-10);
    }
  }
}

TEST_CASE("limit detection")
{
  std::vector<Complex> constant(6, Complex(2.5, -1.0));
  CHECK(detect_limit(constant, LimitRule::Plain) == constant.back());
  CHECK_FALSE(detect_limit(std::vector<Complex>(5, 1.0), LimitRule::Plain).has_value());

  std::vector<Complex> geometric;
  for (int k = 0; k < 60; ++k) {
    geometric.push_back(1.0 + std::pow(0.5, k));
  }
  const auto limit = detect_limit(geometric, LimitRule::Plain);
  REQUIRE(limit.has_value());
  CHECK(std::abs(*limit - 1.0) < 1e-9);
  geometric.resize(20);
  CHECK_FALSE(detect_limit(geometric, LimitRule::Plain).has_value());

  std::vector<Complex> alternating;
  for (int k = 0; k < 40; ++k) {
    alternating.push_back(k % 2 == 0 ? 3.0 : -1.0);
  }
  CHECK_FALSE(detect_limit(alternating, LimitRule::Plain).has_value());
  const auto mean = detect_limit(alternating, LimitRule::Cesaro);
  REQUIRE(mean.has_value());
  CHECK(*mean == Complex(1.0));
}

TEST_CASE("singular part examples")
{
  const double scale = 0.75;
  const auto lp = instantiate_model(builtin_model("lap-pos", 0, {{"scale", scale}}), 60);
  const auto coord = coordinate_states(10, 40);
  // interior diagonal of the Laplacian is constant
  CHECK(eval_singular_part(coord, lp[1]) == Complex(2.0 * scale));
  CHECK(tail_sequence(coord, lp[1]).size() == 40);

  Rng rng(5);
  const Matrix finite = pad_to(random_matrix(rng, 9, 9), 60);
  CHECK(eval_singular_part(coord, finite) == Complex(0.0));
  const auto dense = random_tail_states(rng, 12, 4, 10);
  CHECK(eval_singular_part(dense, finite) == Complex(0.0));
  CHECK(std::abs(eval_singular_part(dense, Matrix(Matrix::Identity(60, 60))) - 1.0) < 1e-12);

  Matrix signs = Matrix::Zero(60, 60);
  for (int j = 0; j < 60; ++j) {
    signs(j, j) = (j % 2 == 0) ? 1.0 : -1.0;
  }
  CHECK_THROWS_AS(eval_singular_part(coord, signs), NotConverged);
  try {
    eval_singular_part(coord, signs);
  } catch (const NotConverged& e) {
    CHECK(e.sequence().size() == 40);
  }
  CHECK(eval_singular_part(coordinate_states(10, 40, LimitRule::Cesaro), signs) == Complex(0.0));

  CHECK_THROWS_AS(tail_sequence(coord, signs, 41), InvalidInput);
  CHECK(available_depth(coord, 30) == 20);
}

TEST_CASE("tail state validation")
{
  TailStateSpec bad;
  CHECK_THROWS_AS(validate(bad), InvalidInput);
  bad.states.push_back({3, Matrix::Identity(1, 1)});
  bad.states.push_back({3, Matrix::Identity(1, 1)});
  CHECK_THROWS_AS(validate(bad), InvalidInput);
  bad.states[1] = {4, 2.0 * Matrix::Identity(1, 1)};
  CHECK_THROWS_AS(validate(bad), InvalidInput);
  Matrix indefinite(2, 2);
  indefinite << 1.5, 0.0, 0.0, -0.5;
  bad.states[1] = {4, indefinite};
  CHECK_THROWS_AS(validate(bad), InvalidInput);
  bad.states[1] = {4, Matrix::Identity(2, 2) / 2.0};
  CHECK_NOTHROW(validate(bad));
}

TEST_CASE("functional evaluation")
{
  Rng rng(6);
  const auto lp = instantiate_model(builtin_model("lap-pos", 0, {{"scale", 0.5}}), 50);
  const auto g = GaugeSpec::schatten(2);
  const auto tp = random_trace_part(rng, lp, 6, 5, g);
  const Matrix s = random_matrix(rng, 50, 50);

  const FunctionalSpec trace_only{tp, {}};
  CHECK(eval_functional(trace_only, lp, s) == eval_trace_part(tp, lp, s));

  const FunctionalSpec singular_only{std::nullopt, {{Complex(1.0), coordinate_states(20, 25)}}};
  CHECK(eval_functional(singular_only, lp, pad_to(random_matrix(rng, 15, 15), 50)) == Complex(0.0));

  const FunctionalSpec mixed{tp, singular_only.singular_part};
  const Complex expected = eval_trace_part(tp, lp, lp[1]) + eval_singular_part(coordinate_states(20, 25), lp[1]);
  CHECK(std::abs(eval_functional(mixed, lp, lp[1]) - expected) < 1e-12);
  CHECK(std::abs(eval_singular_part(coordinate_states(20, 25), lp[1]) - 1.0) < 1e-15);

  CHECK_THROWS_AS(eval_functional(FunctionalSpec{}, lp, s), InvalidInput);
}

TEST_CASE("functional arithmetic is linear")
{
  Rng rng(7);
  const auto tau = instantiate_model(builtin_model("shift-parts"), 40);
  const auto g = GaugeSpec::ky_fan(3);
  for (int trial = 0; trial < 10; ++trial) {
    const FunctionalSpec f{random_trace_part(rng, tau, 4, 6, g), {{Complex(0.5), random_tail_states(rng, 10, 3, 9)}}};
    const FunctionalSpec h{random_trace_part(rng, tau, 7, 3, g), {{Complex(2.0, 1.0), coordinate_states(12, 28)}}};
    const Complex a(rng.normal(), rng.normal());
    const Complex b(rng.normal(), rng.normal());
    const auto combo = linear_combination(a, f, b, h);
    // a singular part that converges: constant diagonal plus a finitely supported block
    Matrix s = 0.3 * Matrix::Identity(40, 40);
    s.topLeftCorner(8, 8) += random_matrix(rng, 8, 8);
    const Complex lhs = eval_functional(combo, tau, s);
    const Complex rhs = a * eval_functional(f, tau, s) + b * eval_functional(h, tau, s);
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
  const FunctionalSpec other{TracePart{Matrix::Identity(1, 1), {}, GaugeSpec::schatten(1)}, {}};
  const FunctionalSpec mine{TracePart{Matrix::Identity(1, 1), {}, g}, {}};
  CHECK_THROWS_AS(linear_combination(1.0, mine, 1.0, other), InvalidInput);
}

TEST_CASE("functional norm bounds")
{
  Rng rng(8);
  const auto dg = instantiate_model(builtin_model("diagonal-grid", 2), 16);
  const auto g = GaugeSpec::schatten(2);
  const TestSetSpec samples{11, 6, TestKind::FinitelySupported, 6};

  const FunctionalSpec corner{TracePart{unit_entry(1, 0, 0), {}, g}, {}};
  const auto b1 = functional_norm_bounds(corner, dg, g, samples);
  CHECK(b1.upper == doctest::Approx(1.0));
  CHECK(b1.lower == doctest::Approx(1.0));

  const FunctionalSpec zero{TracePart{Matrix::Zero(1, 1), {}, g}, {}};
  const auto b0 = functional_norm_bounds(zero, dg, g, samples);
  CHECK(b0.upper == 0.0);
  CHECK(b0.lower == 0.0);

  const FunctionalSpec tail{std::nullopt, {{Complex(1.0), coordinate_states(4, 12)}}};
  const auto bt = functional_norm_bounds(tail, dg, g, TestSetSpec{3, 4, TestKind::RandomHermitian, 0});
  CHECK(bt.upper == 1.0);
  CHECK(bt.lower == doctest::Approx(1.0));

  const auto lp = instantiate_model(builtin_model("lap-pos"), 24);
  for (const auto& gauge : {GaugeSpec::schatten(1), GaugeSpec::schatten(3), GaugeSpec::ky_fan(2)}) {
    for (int trial = 0; trial < 4; ++trial) {
      const FunctionalSpec phi{random_trace_part(rng, lp, 5, 5, gauge), {{Complex(0.0, 1.0), coordinate_states(8, 16)}}};
      for (auto kind : {TestKind::RandomHermitian, TestKind::Banded, TestKind::FinitelySupported}) {
        const auto b = functional_norm_bounds(phi, lp, gauge, TestSetSpec{rng.next(), 5, kind, 2});
        CHECK(b.lower <= b.upper + 1e-9);
        CHECK(b.lower > 0.0);
      }
    }
  }
}

TEST_CASE("oscillating samples are skipped")
{
  const auto dg = instantiate_model(builtin_model("diagonal-grid"), 20);
  const auto g = GaugeSpec::schatten(2);
  const FunctionalSpec tail{std::nullopt, {{Complex(1.0), coordinate_states(2, 18)}}};
  Matrix signs = Matrix::Zero(20, 20);
  for (int j = 0; j < 20; ++j) {
    signs(j, j) = (j % 2 == 0) ? 1.0 : -1.0;
  }
  const std::vector<TestOperator> samples{{"signs", signs, 0}};
  const auto b = functional_norm_bounds(tail, dg, g, samples);
  CHECK(b.skipped == 1);
  CHECK(b.lower == doctest::Approx(1.0));
}

TEST_CASE("test sets are seeded")
{
  for (auto kind : {TestKind::RandomHermitian, TestKind::Banded, TestKind::FinitelySupported}) {
    const TestSetSpec spec{99, 3, kind, 3};
    const auto a = make_test_set(spec, 12);
    const auto b = make_test_set(spec, 12);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].s == b[i].s);
      CHECK(a[i].id == b[i].id);
      CHECK((a[i].s - a[i].s.adjoint()).norm() < 1e-14);
    }
    CHECK(test_kind_from_string(to_string(kind)) == kind);
  }
  const auto fs = make_test_set({1, 1, TestKind::FinitelySupported, 4}, 10);
  CHECK(fs[0].support == 4);
  CHECK(fs[0].s.bottomRows(6).isZero(0.0));
  CHECK_THROWS_AS(test_kind_from_string("dense"), InvalidInput);
}

TEST_CASE("pairing annihilates the null subspace")
{
  Rng rng(9);
  const auto lp = instantiate_model(builtin_model("lap-pos"), 30);
  const auto g = GaugeSpec::schatten(2);
  const auto pe = null_element(lp, {random_matrix(rng, 6, 6), random_matrix(rng, 4, 4)}, g);
  for (int k = 0; k < 10; ++k) {
    CHECK(std::abs(pairing(pe, lp, random_matrix(rng, 30, 30))) < 1e-10);
  }
}

TEST_CASE("quotient norm bounds")
{
  Rng rng(10);
  const auto g = GaugeSpec::schatten(2);

  const auto dg = instantiate_model(builtin_model("diagonal-grid", 2), 16);
  const PredualElement corner{unit_entry(1, 0, 0), {}, g};
  const auto samples = make_test_set({5, 4, TestKind::FinitelySupported, 6}, 16);
  const auto qc = quotient_norm_bounds(corner, dg, g, 6, samples);
  CHECK(std::abs(qc.lower - 1.0) < 1e-6);
  CHECK(std::abs(qc.upper - 1.0) < 1e-6);

  for (const auto* name : {"lap-pos", "shift-parts"}) {
    const auto tau = instantiate_model(builtin_model(name), 20);
    const auto probes = make_test_set({6, 3, TestKind::RandomHermitian, 0}, 20);
    for (const auto& gauge : {GaugeSpec::schatten(2), GaugeSpec::schatten(1), GaugeSpec::ky_fan(2)}) {
      const auto pe = null_element(tau, {random_matrix(rng, 5, 5), random_matrix(rng, 5, 5)}, gauge);
      CHECK(predual_norm(pe) > 1.0);
      const auto q = quotient_norm_bounds(pe, tau, gauge, 5, probes);
      CHECK(q.upper <= 1e-6);
      CHECK(q.lower <= 1e-9);
    }
  }

  const auto lp = instantiate_model(builtin_model("lap-pos"), 20);
  const auto probes = make_test_set({7, 4, TestKind::FinitelySupported, 8}, 20);
  for (int trial = 0; trial < 8; ++trial) {
    const PredualElement pe{random_matrix(rng, 4, 4), {random_matrix(rng, 3, 3), random_matrix(rng, 3, 3)}, g};
    const auto q = quotient_norm_bounds(pe, lp, g, 6, probes, {400, 200, 1e-10});
    CHECK(q.lower <= q.upper + 1e-6);
    CHECK(q.upper <= q.representative_norm + 1e-12);
    CHECK(q.duality_violation <= 1e-8);
  }

  CHECK_THROWS_AS(quotient_norm_bounds(corner, dg, GaugeSpec::schatten(1), 6, samples), InvalidInput);
  const PredualElement wide{Matrix::Zero(1, 1), {random_matrix(rng, 5, 5), Matrix()}, g};
  CHECK_THROWS_AS(quotient_norm_bounds(wide, dg, g, 4, samples), InvalidInput);
  CHECK_THROWS_AS(quotient_norm_bounds(wide, dg, g, 17, samples), InvalidInput);
}
