#include <cmath>
#include <random>

#include "doctest.h"
#include "stabpert/oracle.hpp"
#include "stabpert/perturbation.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

namespace {

const Scenario& p1() {
  static const Scenario s = builtin_scenario("S1-P1");
  return s;
}

CVector random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CVector x(static_cast<Eigen::Index>(n));
  for (auto& v : x) v = Complex(g(rng), g(rng));
  return x;
}

}  // namespace

TEST_CASE("smoothed norms") {
  const Scenario& s = p1();
  const OperatorModel m = s.build_model();
  FiniteRankPerturbation flat = s.perturbation;
  flat.beta = 0.0;
  flat.gamma = 0.0;
  const SmoothedNorms n0 = smoothed_norms(m, flat, s.profile);
  CHECK(n0.b[0] == doctest::Approx(n0.b_plain).epsilon(1e-12));
  CHECK(n0.c[0] == doctest::Approx(n0.c_plain).epsilon(1e-12));

  const SmoothedNorms n1 = smoothed_norms(m, s.perturbation, s.profile);
  CHECK(std::isfinite(n1.b[0]));
  CHECK(n1.b[0] >= n0.b[0]);

  FiniteRankPerturbation harmonic = s.perturbation;
  harmonic.b_columns = {ColumnRule::smooth(0.5, 0.5)};
  try {
    smoothed_norms(m, harmonic, s.profile);
    FAIL("expected RangeViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RangeViolation);
  }
}

TEST_CASE("zero perturbation") {
  const Scenario& s = p1();
  const OperatorModel m = s.build_model().with_dim(300);
  FiniteRankPerturbation zero = s.perturbation;
  zero.scale_c = 0.0;
  const PerturbedSystem sys(m, zero);
  const TransferMatrix t = sys.transfer(Complex(1.2, 0.1));
  CHECK(t.G.norm() == 0.0);
  CHECK((t.D - CMatrix::Identity(1, 1)).norm() == 0.0);

  std::mt19937_64 rng(1);
  const CVector x = random_vector(m.dim(), rng);
  const Complex z(0.3, 1.1);
  const CVector ref = resolvent_apply(m, z, x);
  CHECK((smw_resolvent_apply(sys, z, x) - ref).norm() <= 1e-13 * ref.norm());

  const CertificateReport d = d_inverse_sup(sys, s.profile, s.scan_config());
  CHECK(d.supremum == 1.0);
  CHECK(d.status == Status::certified);

  const std::vector<Complex> eigs = oracle_eigens(make_truncation(m, zero, m.dim()));
  CHECK(spectrum_inclusion_check(s.profile, d, eigs).status == Status::certified);
}

TEST_CASE("SMW against the dense oracle") {
  const Scenario& s = p1();
  const OperatorModel m = s.build_model().with_dim(500);
  const PerturbedSystem sys(m, s.perturbation);
  const DenseTruncation trunc = make_truncation(m, s.perturbation, 500);
  std::mt19937_64 rng(5);
  for (Complex z : {Complex(1.2, 0.0), Complex(0.0, 1.01), unit(0.05) * 1.0001}) {
    const CVector x = random_vector(500, rng);
    const CVector fast = smw_resolvent_apply(sys, z, x);
    const CVector slow = oracle_solve(trunc, z, x);
    CHECK((fast - slow).norm() <= 1e-8 * slow.norm());
  }
}

TEST_CASE("transfer matrices are bilinear in the scales") {
  const Scenario& s = p1();
  const OperatorModel m = s.build_model().with_dim(400);
  const PerturbedSystem base(m, s.perturbation);
  FiniteRankPerturbation scaled = s.perturbation;
  scaled.scale_b *= 3.0;
  scaled.scale_c *= 0.25;
  const PerturbedSystem other(m, scaled);
  const Complex z = unit(0.2) * 1.001;
  CHECK((other.transfer(z).G - 0.75 * base.transfer(z).G).norm() <= 1e-14 * base.transfer(z).G.norm());
}

TEST_CASE("transfer bounds and D inverse on S1-P1") {
  const Scenario& s = p1();
  const OperatorModel m = s.build_model();
  const PerturbedSystem sys(m, s.perturbation);
  const ScanConfig cfg = s.scan_config();
  const SmoothedNorms norms = smoothed_norms(m, s.perturbation, s.profile);
  const TransferField field = transfer_field(sys, s.profile, cfg);
  const TransferScan ts =
      transfer_bound_certify(field, sys.scale_product(), s.perturbation, s.profile, 0, norms, 1.0, 2.0, m, cfg);
  CHECK(ts.region.supremum <= 0.5);
  CHECK(ts.complement.supremum <= 0.5);

  const CertificateReport d = d_inverse_sup(field, sys, s.profile, cfg);
  REQUIRE(d.bound.has_value());
  CHECK(d.status == Status::certified);
  CHECK(d.supremum <= 1.0 / (1.0 - d.values.at("sup_G")) + 1e-9);
}

TEST_CASE("large scale gives a singular D witness") {
  const Scenario s = builtin_scenario("S1-violation");
  const OperatorModel m = s.build_model().with_dim(200);
  const PerturbedSystem sys(m, s.perturbation);
  const CertificateReport d = d_inverse_sup(sys, s.profile, s.scan_config());
  CHECK(d.status == Status::refuted);
  REQUIRE(d.witness.has_value());
  CHECK(std::abs(*d.witness) > 1.0 + 1e-8);
  CHECK(std::abs(sys.transfer(*d.witness).D.determinant()) < 1e-8);

  const auto eigs = oracle_eigens(make_truncation(m, s.perturbation, 200));
  const CertificateReport inc = spectrum_inclusion_check(s.profile, d, eigs);
  CHECK(inc.status == Status::refuted);
  CHECK(std::abs(*inc.witness) > 1.0 + 1e-8);
}

TEST_CASE("injectivity factorization") {
  const Scenario& s = p1();
  const OperatorModel m = s.build_model().with_dim(500);
  const PerturbedSystem sys(m, s.perturbation);
  const auto eigs = oracle_eigens(make_truncation(m, s.perturbation, 500));
  const CertificateReport r = injectivity_factor_check(sys, s.perturbation, s.profile, 0, 4, 9, eigs);
  CHECK(r.values.at("beta1") == 0.5);
  CHECK(r.values.at("factorization_residual") <= 1e-8);
  CHECK(r.values.at("middle_norm") < 1.0);
  CHECK(r.status == Status::certified);
  CHECK(spectrum_inclusion_check(s.profile, CertificateReport{}, eigs).supremum < 1.0);

  const FiniteRankPerturbation big = s.perturbation.scaled(40.0);
  const PerturbedSystem large(m, big);
  const CertificateReport bad = injectivity_factor_check(large, big, s.profile, 0, 2, 9, {});
  CHECK(bad.values.at("middle_norm") >= 1.0);
  CHECK(bad.status == Status::inconclusive);
}

TEST_CASE("proportional split") {
  const SplitExponents s = proportional_split(1.0, 1.0, 2.0);
  CHECK(s.beta1 == 1.0);
  CHECK(s.gamma1 == 1.0);
  const SplitExponents h = proportional_split(1.0, 3.0, 2.0);
  CHECK(h.beta1 == doctest::Approx(0.5));
  CHECK(h.gamma1 == doctest::Approx(1.5));
  CHECK_THROWS_AS(proportional_split(0.5, 0.5, 2.0), Error);
}
