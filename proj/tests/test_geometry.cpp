#include <cmath>

#include "doctest.h"
#include "stabpert/geometry.hpp"

using namespace stabpert;

namespace {

SpectralProfile one_point() {
  SpectralProfile p;
  p.phis = {0.0};
  p.alpha = 2.0;
  p.eps_A = kPi / 8;
  p.M_A = 8.6;
  return p;
}

}  // namespace

TEST_CASE("validate_profile") {
  SpectralProfile p;
  p.phis = {0.0, 1.2};
  p.eps_A = 0.5;
  p.M_A = 2.0;
  CHECK_FALSE(validate_profile(p).ok());

  CHECK(validate_profile(one_point()).ok());

  SpectralProfile q = one_point();
  q.alpha = 0.5;
  const ValidationReport rep = validate_profile(q);
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.violations.front().find("alpha") != std::string::npos);
}

TEST_CASE("derived profile quantities") {
  const SpectralProfile p = one_point();
  CHECK(p.d_A() == doctest::Approx(kTwoPi));
  CHECK(p.r_A() == doctest::Approx(0.390181).epsilon(1e-6));
  SpectralProfile two;
  two.phis = {0.0, kPi};
  CHECK(two.d_A() == doctest::Approx(kPi));
}

TEST_CASE("region_contains") {
  const SpectralProfile p = one_point();
  const Region reg = make_region(p, 0);
  CHECK_FALSE(region_contains(reg, unit(0.0)));
  CHECK(region_contains(reg, Complex(1.2, 0.0)));
  CHECK_FALSE(region_contains(reg, Complex(0.99, 0.0)));
  CHECK_FALSE(region_contains(reg, Complex(1.5, 0.0)));
}

TEST_CASE("grid arithmetic") {
  SpectralProfile p = one_point();
  GridResolution res;
  res.pts_per_decade = 10.0;
  res.dphi_min = 1e-4;
  const auto offsets = near_offsets(p, res);
  CHECK(offsets.size() == 36);
  CHECK(offsets.front() == 1e-4);
  CHECK(offsets.back() == p.eps_A);

  res.radial_min = 1e-6;
  CHECK(radial_grid(res).size() == 61);

  GridResolution fine = res.refined();
  const auto fine_offsets = near_offsets(p, fine);
  CHECK(fine_offsets.size() == 71);
  for (std::size_t i = 0; i < offsets.size(); ++i)
    CHECK(std::abs(fine_offsets[2 * i] - offsets[i]) <= 1e-15 * offsets[i]);
}

TEST_CASE("grids exclude spectral points") {
  SpectralProfile p;
  p.phis = {0.0, kPi};
  p.alpha = 1.0;
  p.M_A = 4.0;
  const ScanGrid g = build_grids(p, GridResolution{});
  for (const CirclePoint& pt : g.circle) {
    CHECK(pt.dist > 0.0);
    for (double phi : p.phis) CHECK(std::abs(circle_lambda(p, pt) - unit(phi)) > 0.0);
  }
  for (std::size_t k = 0; k < 2; ++k)
    for (const Complex& z : g.region_points[k]) {
      CHECK(region_contains(make_region(p, k), z));
    }
  for (const Complex& z : g.complement)
    for (std::size_t k = 0; k < 2; ++k) CHECK_FALSE(region_contains(make_region(p, k), z));
  CHECK_THROWS_AS(build_grids(p, GridResolution{4.0}), Error);
}

TEST_CASE("grid hash is reproducible") {
  const SpectralProfile p = one_point();
  CHECK(build_grids(p, GridResolution{}).hash == build_grids(p, GridResolution{}).hash);
  CHECK(build_grids(p, GridResolution{}).hash != build_grids(p, GridResolution{}.refined()).hash);
}

TEST_CASE("arc_partition") {
  const SpectralProfile p = one_point();
  const double rA = p.r_A();

  const ArcPartition tangent = arc_partition(p, 1.0 + rA);
  REQUIRE(tangent.near.size() == 1);
  CHECK(tangent.near[0].length() < 1e-5);

  const ArcPartition far = arc_partition(p, 2.0);
  CHECK(far.near.empty());
  REQUIRE(far.rest.size() == 1);
  CHECK(far.rest[0].length() == doctest::Approx(kTwoPi));

  const double r = 1.01;
  const ArcPartition mid = arc_partition(p, r);
  const double expected = std::acos((r * r + 1.0 - rA * rA) / (2.0 * r));
  REQUIRE(mid.near.size() == 1);
  CHECK(mid.half_widths[0] == doctest::Approx(expected).epsilon(1e-14));
  // membership scan across the boundary
  const Region reg = make_region(p, 0);
  CHECK(region_contains(reg, std::polar(r, 0.999 * expected)));
  CHECK_FALSE(region_contains(reg, std::polar(r, 1.001 * expected)));
  CHECK(mid.near[0].length() + mid.rest[0].length() == doctest::Approx(kTwoPi));
}
