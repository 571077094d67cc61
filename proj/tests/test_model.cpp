#include <cmath>
#include <random>

#include "doctest.h"
#include "stabpert/model.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

namespace {

OperatorModel s1() { return builtin_scenario("S1").build_model(); }

CVector basis(std::size_t n, std::size_t i) {
  CVector e = CVector::Zero(static_cast<Eigen::Index>(n));
  e(static_cast<Eigen::Index>(i)) = 1.0;
  return e;
}

}  // namespace

TEST_CASE("apply on explicit diagonal") {
  const auto m = OperatorModel::explicit_diagonal({0.5, Complex(0.0, 0.3)});
  CVector x(2);
  x << 1.0, 1.0;
  const CVector y = stabpert::apply(m, x);
  CHECK(y(0) == Complex(0.5));
  CHECK(y(1) == Complex(0.0, 0.3));
  CHECK(stabpert::apply(m, CVector::Zero(2)).norm() == 0.0);
}

TEST_CASE("apply on S1 picks a_2") {
  const auto m = s1();
  const CVector y = stabpert::apply(m, basis(m.dim(), 1));
  const Complex a2 = 0.75 * unit(0.5);
  CHECK(std::abs(y(1) - a2) < 1e-15);
  CHECK(std::abs(a2 - Complex(0.6582, 0.3596)) < 1e-4);
  CHECK(std::abs(y.norm() - std::abs(a2)) < 1e-15);
}

TEST_CASE("dimension mismatch") {
  const auto m = OperatorModel::explicit_diagonal({0.5});
  CHECK_THROWS_AS(stabpert::apply(m, CVector::Zero(3)), Error);
}

TEST_CASE("orbit") {
  const auto m = OperatorModel::explicit_diagonal({0.5});
  CVector x(1);
  x << 1.0;
  CHECK(orbit(m, x, 0)(0) == Complex(1.0));
  CHECK(std::abs(orbit(m, x, 3)(0) - 0.125) < 1e-15);
  const auto a = s1();
  CHECK(orbit(a, basis(a.dim(), 0), 1).norm() == 0.0);
}

TEST_CASE("resolvent_apply") {
  const auto m = OperatorModel::explicit_diagonal({0.5});
  CVector x(1);
  x << 1.0;
  CHECK(std::abs(resolvent_apply(m, 1.0, x)(0) - 2.0) < 1e-15);

  const auto a = s1();
  const CVector y = resolvent_apply(a, -1.0, basis(a.dim(), 0));
  CHECK(std::abs(y(0) + 1.0) < 1e-15);
  CHECK_THROWS_AS(resolvent_apply(a, unit(0.0), basis(a.dim(), 0)), Error);
  try {
    resolvent_apply(a, unit(0.0), basis(a.dim(), 0));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpectrumHit);
  }
}

TEST_CASE("fractional_apply") {
  const auto m = OperatorModel::explicit_diagonal({0.5}, {0.0});
  CVector x(1);
  x << 1.0;
  CHECK(std::abs(fractional_apply(m, {0, 0.0, false}, x)(0) - 1.0) < 1e-15);
  CHECK(std::abs(fractional_apply(m, {0, 1.0, false}, x)(0) - 0.5) < 1e-15);

  const auto a = s1();
  const CVector y = fractional_apply(a, {0, -1.0, false}, basis(a.dim(), 1));
  CHECK(std::abs(y.norm() - 2.0157) < 1e-3);
  CHECK(std::abs(y(1) - 1.0 / (1.0 - 0.75 * unit(0.5))) < 1e-13);
}

TEST_CASE("fractional powers compose") {
  const auto a = s1();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  CVector x(static_cast<Eigen::Index>(a.dim()));
  for (auto& v : x) v = Complex(g(rng), g(rng));
  const CVector half = fractional_apply(a, {0, 0.5, false}, fractional_apply(a, {0, 0.5, false}, x));
  const CVector one = fractional_apply(a, {0, 1.0, false}, x);
  CHECK((half - one).norm() <= 1e-12 * one.norm());
}

TEST_CASE("power_bound") {
  CHECK(std::abs(power_bound(OperatorModel::explicit_diagonal({0.5, 0.3}), 16) - 0.5) < 1e-15);
  CHECK(std::abs(power_bound(s1(), 8) - 1.0) < 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  CMatrix m(12, 12);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = Complex(g(rng), g(rng));
  Eigen::JacobiSVD<CMatrix> svd(m);
  m *= 0.9 / svd.singularValues()(0);
  CHECK(power_bound(OperatorModel::dense(m), 20) <= 0.9 + 1e-9);
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(OperatorModel::explicit_diagonal({1.5}), Error);
  CHECK_THROWS_AS(OperatorModel::diagonal(EntryRule::polar_power(1, 0.0, 1, 1), {}, 10, {0.0}), Error);
}
