#include <doctest.h>

#include <qclab/idealops.hpp>
#include <qclab/random.hpp>

using namespace qclab;

TEST_CASE("built-in models")
{
  const auto dg = instantiate_model(builtin_model("diagonal-grid", 1), 3);
  REQUIRE(dg.size() == 1);
  CHECK(dg[0].isApprox(Matrix(Vector::LinSpaced(3, 1.0 / 3.0, 1.0).cast<Complex>().asDiagonal())));

  const auto lp = instantiate_model(builtin_model("lap-pos"), 4);
  REQUIRE(lp.size() == 2);
  CHECK(lp.bandwidth == 1);
  for (int i = 0; i < 4; ++i) {
    CHECK(lp[1](i, i) == Complex(2.0));
    if (i < 3) {
      CHECK(lp[1](i, i + 1) == Complex(-1.0));
      CHECK(lp[1](i + 1, i) == Complex(-1.0));
    }
  }
  CHECK(lp[1](0, 2) == Complex(0.0));

  const auto sp = instantiate_model(builtin_model("shift-parts"), 6);
  for (const auto& t : sp.ops) {
    CHECK((t - t.adjoint()).norm() < 1e-12);
  }
  // Re V + i Im V recovers the shift
  const Matrix v = sp[0] + Complex(0.0, 1.0) * sp[1];
  CHECK(std::abs(v(1, 0) - 1.0) < 1e-15);
  CHECK(std::abs(v(0, 1)) < 1e-15);
}

TEST_CASE("model errors")
{
  CHECK_THROWS_AS(builtin_model("no-such-model"), InvalidInput);
  CHECK_THROWS_AS(instantiate_model(builtin_model("lap-pos"), 3), InvalidInput);
  auto spec = builtin_model("lap-pos");
  spec.bandwidth = 0;
  CHECK_THROWS_AS(instantiate_model(spec, 10), InvalidInput);
}

TEST_CASE("corner consistency with a fixed grid length")
{
  for (const auto* name : {"diagonal-grid", "lap-pos", "shift-parts"}) {
    const auto spec = builtin_model(name, 0, {{"grid", 10.0}, {"scale", 0.5}});
    const auto a = instantiate_model(spec, 8);
    const auto b = instantiate_model(spec, 16);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j] == b[j].topLeftCorner(8, 8));
      CHECK((a[j] - a[j].adjoint()).norm() == 0.0);
      for (Eigen::Index r = 0; r < 16; ++r) {
        for (Eigen::Index c = 0; c < 16; ++c) {
          if (std::abs(r - c) > spec.bandwidth) {
            CHECK(b[j](r, c) == Complex(0.0));
          }
        }
      }
    }
  }
}

TEST_CASE("commutators")
{
  const auto dg = instantiate_model(builtin_model("diagonal-grid", 2), 5);
  Matrix s = Matrix::Zero(5, 5);
  s.diagonal() << 1.0, -2.0, 3.0, 0.5, 0.0;
  for (const auto& k : commutator_tuple(dg, s)) {
    CHECK(k.isZero(0.0));
  }

  Matrix t = Matrix::Zero(2, 2);
  t(1, 1) = 1.0;
  const auto t2 = make_tuple({t});
  Matrix swap = Matrix::Zero(2, 2);
  swap(0, 1) = swap(1, 0) = 1.0;
  const auto k = commutator_tuple(t2, swap)[0];
  CHECK(k(0, 0) == Complex(0.0));
  CHECK(k(0, 1) == Complex(-1.0));
  CHECK(k(1, 0) == Complex(1.0));
  CHECK(k(1, 1) == Complex(0.0));

  CHECK_THROWS_AS(commutator_tuple(dg, Matrix::Identity(4, 4)), InvalidInput);

  Rng rng(3);
  const auto lp = instantiate_model(builtin_model("lap-pos"), 12);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix h = random_hermitian(rng, 12);
    const Matrix r = random_matrix(rng, 12, 12);
    for (const auto& c : commutator_tuple(lp, h)) {
      CHECK(std::abs(c.trace()) < 1e-10);
      CHECK((c + c.adjoint()).norm() < 1e-12); // anti-hermitian for hermitian S
    }
    for (std::size_t j = 0; j < lp.size(); ++j) {
      CHECK((commutator_tuple(lp, r)[j] - commutator(lp[j], r)).cwiseAbs().maxCoeff() < 1e-12);
    }
    // Leibniz rule
    for (const auto& t : lp.ops) {
      const Matrix lhs = commutator(t, Matrix(h * r));
      const Matrix rhs = commutator(t, h) * r + h * commutator(t, r);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("explicit tuples")
{
  Rng rng(6);
  const Matrix h = random_hermitian(rng, 5);
  const auto dense = make_tuple({h});
  CHECK(dense.bandwidth == 4);
  Matrix tri = Matrix::Zero(5, 5);
  tri(1, 2) = tri(2, 1) = Complex(0.0, 0.0) + 3.0;
  CHECK(make_tuple({tri, Matrix::Identity(5, 5)}).bandwidth == 1);
  CHECK_THROWS_AS(make_tuple({random_matrix(rng, 5, 5)}), InvalidInput);
  CHECK_THROWS_AS(make_tuple({}), InvalidInput);
}

TEST_CASE("tuple gauge norm")
{
  std::vector<Matrix> zeros{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  CHECK(tuple_gauge_norm(zeros, GaugeSpec::schatten(1)) == 0.0);
  std::vector<Matrix> pair{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0)};
  CHECK(tuple_gauge_norm(pair, GaugeSpec::schatten(1)) == doctest::Approx(2.0));
  CHECK_THROWS_AS(tuple_gauge_norm(std::vector<Matrix>{}, GaugeSpec::schatten(1)), InvalidInput);

  Rng rng(8);
  std::vector<Matrix> triple{random_matrix(rng, 4, 4), random_matrix(rng, 4, 4), random_matrix(rng, 4, 4)};
  double oracle = 0.0;
  for (const auto& m : triple) {
    oracle = std::max(oracle, std::sqrt(m.cwiseAbs2().sum()));
  }
  CHECK(std::abs(tuple_gauge_norm(triple, GaugeSpec::schatten(2)) - oracle) < 1e-10);
}

TEST_CASE("commutant norms")
{
  const auto lp = instantiate_model(builtin_model("lap-pos", 0, {{"scale", 0.7}}), 10);
  const auto g = GaugeSpec::schatten(2);
  CHECK(e_norm_sum(lp, g, Matrix::Identity(10, 10)) == doctest::Approx(1.0));
  CHECK(e_norm_max(lp, g, Matrix::Identity(10, 10)) == doctest::Approx(1.0));
  CHECK(e_norm_max(lp, g, Matrix::Zero(10, 10)) == 0.0);

  const auto dg = instantiate_model(builtin_model("diagonal-grid", 2), 6);
  Matrix d = Matrix::Zero(6, 6);
  d.diagonal() << 0.5, -1.0, 0.25, 0.0, 0.9, -0.3;
  CHECK(e_norm_sum(dg, g, d) == doctest::Approx(1.0));

  Rng rng(44);
  for (const auto& gauge : {GaugeSpec::schatten(1), GaugeSpec::schatten(2), GaugeSpec::ky_fan(2)}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix s = random_matrix(rng, 10, 10);
      const Matrix t = random_matrix(rng, 10, 10);
      const double sum = e_norm_sum(lp, gauge, s);
      const double mx = e_norm_max(lp, gauge, s);
      CHECK(mx <= sum + 1e-12);
      CHECK(sum <= 2.0 * mx + 1e-12);
      CHECK(std::abs(e_norm_sum(lp, gauge, Matrix(s.adjoint())) - sum) <= 1e-12 * (1.0 + sum));
      CHECK(e_norm_sum(lp, gauge, Matrix(s * t)) <= sum * e_norm_sum(lp, gauge, t) * (1 + 1e-9));

      double oracle = operator_norm(s);
      for (const auto& op : lp.ops) {
        oracle = std::max(oracle, gauge_norm(gauge, Matrix(op * s - s * op)));
      }
      CHECK(std::abs(mx - oracle) < 1e-10);
    }
  }
}
