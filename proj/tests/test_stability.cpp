#include <cmath>

#include "doctest.h"
#include "stabpert/oracle.hpp"
#include "stabpert/scenario.hpp"
#include "stabpert/stability.hpp"

using namespace stabpert;

namespace {

SpectralProfile unit_profile() {
  SpectralProfile p;
  p.phis = {0.0};
  p.alpha = 1.0;
  p.M_A = 2.0;
  return p;
}

CMatrix column(std::size_t n, std::size_t i) {
  CMatrix c = CMatrix::Zero(static_cast<Eigen::Index>(n), 1);
  c(static_cast<Eigen::Index>(i), 0) = 1.0;
  return c;
}

}  // namespace

TEST_CASE("orbit_decay scalar cases") {
  const auto m = OperatorModel::explicit_diagonal({0.5});
  CVector x(1);
  x << 1.0;
  const DecayTable t = orbit_decay(m, x, 10, 1e-3);
  REQUIRE(t.n.back() == 10);
  CHECK(t.norm.back() == doctest::Approx(std::pow(2.0, -10)).epsilon(1e-14));
  REQUIRE(t.first_passage.has_value());
  CHECK(*t.first_passage == 10);

  const DecayTable z = orbit_decay(m, CVector::Zero(1), 10, 1e-3);
  for (double v : z.norm) CHECK(v == 0.0);
}

TEST_CASE("perturbed orbit matches the dense oracle") {
  const Scenario s = builtin_scenario("S1-P1");
  const OperatorModel m = s.build_model().with_dim(500);
  const PerturbedSystem sys(m, s.perturbation);
  const DenseTruncation trunc = make_truncation(m, s.perturbation, 500);
  CVector x = CVector::Zero(500);
  x(0) = 1.0;
  x(1) = 1.0;
  const DecayTable t = orbit_decay(sys, x, 5000, 1e-3);
  REQUIRE(t.first_passage.has_value());
  const auto oracle = oracle_first_passage(trunc, x, 1e-3, 5000);
  REQUIRE(oracle.has_value());
  CHECK(*t.first_passage == *oracle);

  CVector y = x;
  for (int i = 0; i < 1000; ++i) y = sys.apply(y);
  const CVector ref = oracle_orbit(trunc, x, 1000);
  CHECK((y - ref).norm() <= 1e-10 * ref.norm());
}

TEST_CASE("closed-form finite-rank integral") {
  const auto m = OperatorModel::explicit_diagonal({0.5});
  QuadratureConfig cfg;
  const QuadratureResult q = finite_rank_integral(m, column(1, 0), false, unit_profile(), cfg);
  REQUIRE(q.r.size() == quadrature_radii(cfg).size());
  for (std::size_t i = 0; i < q.r.size(); ++i) {
    const double r = q.r[i];
    const double exact = (r - 1.0) * kTwoPi / (r * r - 0.25);
    CHECK(q.weighted[i] == doctest::Approx(exact).epsilon(1e-6));
  }
  CHECK(q.status == Status::certified);

  const QuadratureResult zero = finite_rank_integral(m, CMatrix::Zero(1, 1), false, unit_profile(), cfg);
  CHECK(zero.sup == 0.0);
}

TEST_CASE("finite-rank integral is subadditive over columns") {
  const auto m = OperatorModel::explicit_diagonal({0.5, Complex(0.0, 0.7), -0.2});
  QuadratureConfig cfg;
  CMatrix both(3, 2);
  both << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
  const QuadratureResult q = finite_rank_integral(m, both, false, unit_profile(), cfg);
  const QuadratureResult a = finite_rank_integral(m, both.col(0), false, unit_profile(), cfg);
  const QuadratureResult b = finite_rank_integral(m, both.col(1), false, unit_profile(), cfg);
  for (std::size_t i = 0; i < q.r.size(); ++i) CHECK(q.value[i] <= (a.value[i] + b.value[i]) * (1.0 + 1e-12));
}

TEST_CASE("integral criterion") {
  const auto m = OperatorModel::explicit_diagonal({0.5, Complex(0.1, 0.3)});
  QuadratureConfig cfg;
  ProbeSet zero;
  zero.x = CMatrix::Zero(2, 1);
  zero.y = CMatrix::Zero(2, 1);
  CHECK(integral_criterion(m, zero, unit_profile(), cfg).sup == 0.0);

  const Scenario s = builtin_scenario("S1");
  const OperatorModel a = s.build_model();
  const QuadratureResult q = integral_criterion(a, make_probes(20, 0, 20, 1), s.profile, s.config.quadrature);
  CHECK(std::isfinite(q.sup));
  CHECK(q.refinement_delta <= 0.05);
  CHECK(q.status == Status::certified);
}

TEST_CASE("zero C collapses the perturbed checks") {
  const Scenario s = builtin_scenario("S1-P1");
  const OperatorModel m = s.build_model();
  FiniteRankPerturbation zero = s.perturbation;
  zero.scale_c = 0.0;
  const PerturbedSystem sys(m, zero);
  const FkMajorant fk(sys, zero, s.profile, 0, 1.0);
  CHECK(fk(Complex(1.1, 0.2)) == 0.0);
  const FkCertificate cert = fk_properties_certify(fk, s.profile, s.scan_config(), s.config.quadrature);
  CHECK(cert.report.supremum == 0.0);
  CHECK(cert.quadrature.sup == 0.0);

  const ScanConfig cfg = s.scan_config();
  const SmoothedNorms norms = smoothed_norms(m, zero, s.profile);
  const PerturbedGrowth pg = perturbed_growth_certify(sys, s.profile, 1.0, {0.0}, norms, cfg);
  const GrowthResult g = certify_growth(m, s.profile, cfg);
  CHECK(pg.report.supremum == doctest::Approx(g.report.values.at("near_sup")).epsilon(1e-9));
  CHECK(pg.report.values.at("away_sup") == doctest::Approx(g.report.values.at("away_sup")).epsilon(1e-9));
}

TEST_CASE("zero perturbation is preserved") {
  Scenario s = builtin_scenario("S1-P1");
  s.perturbation.scale_b = 0.0;
  s.perturbation.scale_c = 0.0;
  const StabilityVerdict v = stability_verdict(s.build_model(), s.profile, s.perturbation, s.stability_config());
  CHECK(v.verdict == Verdict::preserved);
}

TEST_CASE("threshold bracket validation") {
  const Scenario s = builtin_scenario("S1-P1");
  const StabilityPipeline pipe(s.build_model(), s.profile, s.perturbation, s.stability_config());
  try {
    delta_threshold_search(pipe, 1.0, 0.5);
    FAIL("expected BracketInvalid");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BracketInvalid);
  }
}
