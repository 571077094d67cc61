#include <cmath>

#include "doctest.h"
#include "stabpert/oracle.hpp"
#include "stabpert/resolvent.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

namespace {

const Scenario& s1() {
  static const Scenario s = builtin_scenario("S1");
  return s;
}

const OperatorModel& s1_model() {
  static const OperatorModel m = s1().build_model();
  return m;
}

}  // namespace

TEST_CASE("resolvent_norm point values") {
  CHECK(resolvent_norm(s1_model(), -1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(resolvent_norm(OperatorModel::explicit_diagonal({0.5}), 1.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(resolvent_norm(s1_model(), 1.0), Error);
}

TEST_CASE("dense model matches its diagonal embedding") {
  const std::vector<Complex> entries{0.5, Complex(0.1, 0.7), Complex(-0.3, 0.2), 0.9};
  const auto diag = OperatorModel::explicit_diagonal(entries);
  CMatrix m = CMatrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) m(i, i) = entries[static_cast<std::size_t>(i)];
  const auto dense = OperatorModel::dense(m);
  for (Complex z : {Complex(1.2, 0.0), Complex(0.0, 1.05), Complex(-1.5, 0.5)})
    CHECK(resolvent_norm(dense, z) == doctest::Approx(resolvent_norm(diag, z)).epsilon(1e-6));
}

TEST_CASE("tail is included for rule models") {
  // lambda close to the limit point: the supremum comes from entries far
  // beyond any truncation.
  const Complex z = unit(1e-6) * (1.0 + 1e-9);
  const ResolventNorm norm(s1_model());
  const SupResult r = norm.detailed(z);
  CHECK(r.converged);
  CHECK(r.argmax > s1_model().dim());
  const auto trunc = make_truncation(s1_model(), 200);
  CHECK(norm(z) >= oracle_resolvent_norm(trunc, z));
}

TEST_CASE("certify_growth on S1") {
  const Scenario& s = s1();
  const GrowthResult ok = certify_growth(s1_model(), s.profile, s.scan_config());
  CHECK(ok.report.status == Status::certified);
  CHECK(ok.report.supremum <= s.profile.M_A);
  CHECK(ok.report.supremum * 1.1 >= s.profile.M_A * 0.99);

  SpectralProfile low = s.profile;
  low.alpha = 1.5;
  const GrowthResult bad = certify_growth(s1_model(), low, s.scan_config());
  CHECK(bad.report.status == Status::refuted);
  REQUIRE(bad.report.witness.has_value());
  CHECK(std::abs(std::arg(*bad.report.witness)) < 1e-2);
}

TEST_CASE("away branch uses the plain norm") {
  const Scenario& s = s1();
  const GrowthResult g = certify_growth(s1_model(), s.profile, s.scan_config());
  for (const CircleRow& r : g.rows)
    if (r.dist > s.profile.eps_A) CHECK(r.weighted == r.resnorm);
}

TEST_CASE("estimate_alpha") {
  const AlphaEstimate a = estimate_alpha(s1_model(), 0.0, {1e-3, 1e-1});
  CHECK(a.right == doctest::Approx(2.0).epsilon(0.075));
  CHECK(a.left == doctest::Approx(1.0).epsilon(0.15));

  const auto m = OperatorModel::diagonal(EntryRule::polar_power(1, 1, 1, 1), {}, 2000, {0.0});
  CHECK(estimate_alpha(m, 0.0, {1e-3, 1e-1}).right == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("kreiss_check") {
  const Scenario& s = s1();
  const CertificateReport r = kreiss_check(s1_model(), s.profile, 1.0, s.scan_config());
  CHECK(r.supremum <= 1.0 + 1e-9);
  CHECK(r.status == Status::certified);

  const auto half = OperatorModel::explicit_diagonal({0.5});
  CHECK((2.0 - 1.0) * resolvent_norm(half, 2.0) == doctest::Approx(2.0 / 3.0));

  CMatrix j(2, 2);
  j << 0.5, 0.5, 0.0, 0.5;
  const auto dense = OperatorModel::dense(j);
  CHECK(power_bound(dense, 1) <= 1.0);
  const CertificateReport d = kreiss_check(dense, s.profile, 1.0, s.scan_config());
  CHECK(d.supremum <= 1.0 + 1e-9);
}

TEST_CASE("region suprema on S1") {
  const Scenario& s = s1();
  const ScanConfig cfg = s.scan_config();
  const RegionAnalysis ra = analyze_region(s1_model(), s.profile, 0, 1.0, cfg);
  CHECK(std::isfinite(ra.plain.supremum));
  CHECK(ra.plain.refinement_delta < 0.1);
  CHECK(ra.plain.status == Status::certified);
  CHECK(ra.smoothed.refinement_delta < 0.1);
  CHECK(ra.smoothed.status == Status::certified);
  CHECK(ra.smoothed.values.at("plain_sup") > 1e6);
  CHECK(ra.smoothed.values.at("product_violations") == 0.0);

  const CertificateReport plain = region_sup_plain(s1_model(), s.profile, 0, 1.0, cfg);
  CHECK(plain.supremum == ra.plain.supremum);

  const double M_0 = ra.plain.supremum;
  const CertificateReport comp = complement_sup(s1_model(), s.profile, 1.0, M_0, cfg);
  const double chain = std::max(s.profile.M_A, M_0 / std::pow(s.profile.r_A(), s.profile.alpha)) * 2.0;
  CHECK(comp.supremum <= chain);
  CHECK(comp.status == Status::certified);
  CHECK(resolvent_norm(s1_model(), 3.0) <= 0.5);
}

TEST_CASE("global smoothed sup on S2") {
  const Scenario s = builtin_scenario("S2");
  const OperatorModel m = s.build_model();
  const CertificateReport r = global_smoothed_sup(m, s.profile, s.scan_config());
  CHECK(std::isfinite(r.supremum));
  CHECK(r.status == Status::certified);
}

TEST_CASE("moment inequality") {
  for (auto [tt, t] : {std::pair{0.5, 1.0}, std::pair{1.0, 2.0}, std::pair{1.3, 2.0}})
    CHECK(moment_inequality_probe(s1_model(), 0, tt, t, 200, 11) <= 1.0 + 1e-10);

  const std::size_t n = s1_model().dim();
  CVector e = CVector::Zero(static_cast<Eigen::Index>(n));
  e(3) = 1.0;
  CHECK(moment_ratio(s1_model(), 0, 0.5, 1.0, e) == doctest::Approx(1.0).epsilon(1e-14));

  // x = e1 + e2 against a brute-force sweep over span{e1, e2}
  CVector x = CVector::Zero(static_cast<Eigen::Index>(n));
  x(0) = 1.0;
  x(1) = 1.0;
  const double mixed = moment_ratio(s1_model(), 0, 0.5, 1.0, x);
  CHECK(mixed < 1.0);
  double best = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double t = 0.5 * kPi * i / 400.0;
    CVector y = CVector::Zero(static_cast<Eigen::Index>(n));
    y(0) = std::cos(t);
    y(1) = std::sin(t);
    best = std::max(best, moment_ratio(s1_model(), 0, 0.5, 1.0, y));
  }
  CHECK(mixed <= best + 1e-12);
  CHECK(best <= 1.0 + 1e-12);
}
