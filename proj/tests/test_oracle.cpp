#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "stabpert/oracle.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

TEST_CASE("oracle resolvent norm") {
  const OperatorModel s1 = builtin_scenario("S1").build_model();
  CHECK(oracle_resolvent_norm(make_truncation(s1, 300), -1.0) == doctest::Approx(1.0).epsilon(1e-12));
  const auto half = OperatorModel::explicit_diagonal({0.5});
  CHECK(oracle_resolvent_norm(make_truncation(half, 1), 1.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(oracle_resolvent_norm(make_truncation(half, 1), 0.5), Error);
  CHECK_THROWS_AS(make_truncation(s1, kOracleDimCap + 1), Error);
}

TEST_CASE("oracle eigenvalues") {
  const std::vector<Complex> entries{0.5, Complex(0.1, 0.7), Complex(-0.3, 0.2)};
  auto eigs = oracle_eigens(make_truncation(OperatorModel::explicit_diagonal(entries), 3));
  REQUIRE(eigs.size() == 3);
  for (const Complex& a : entries)
    CHECK(std::any_of(eigs.begin(), eigs.end(), [&](Complex e) { return std::abs(e - a) < 1e-14; }));

  FiniteRankPerturbation pert;
  pert.b_columns = {ColumnRule::explicit_values({1.0})};
  pert.c_columns = {ColumnRule::explicit_values({1.0})};
  const auto scalar = OperatorModel::explicit_diagonal({0.5});
  eigs = oracle_eigens(make_truncation(scalar, pert, 1));
  REQUIRE(eigs.size() == 1);
  CHECK(std::abs(eigs[0] - 1.5) < 1e-14);

  const Scenario s = builtin_scenario("S1-P1");
  const auto trunc = make_truncation(s.build_model(), s.perturbation, 500);
  CHECK(oracle_spectral_radius(trunc) < 1.0);
}

TEST_CASE("oracle orbit") {
  const auto m = OperatorModel::explicit_diagonal({0.5, Complex(0.0, 0.9)});
  const auto t = make_truncation(m, 2);
  CVector x(2);
  x << 1.0, 2.0;
  CHECK((oracle_orbit(t, x, 0) - x).norm() == 0.0);
  const CVector y = oracle_orbit(t, x, 7);
  CHECK(std::abs(y(0) - std::pow(0.5, 7)) < 1e-15);
  CHECK(std::abs(y(1) - 2.0 * std::pow(Complex(0.0, 0.9), 7)) < 1e-14);
  const auto first = oracle_first_passage(t, x, 0.5, 100);
  REQUIRE(first.has_value());
  CHECK(oracle_orbit(t, x, *first).norm() <= 0.5 * x.norm());
  CHECK(oracle_orbit(t, x, *first - 1).norm() > 0.5 * x.norm());
}
