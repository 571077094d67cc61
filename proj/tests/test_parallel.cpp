#include <cstdlib>
#include <cstring>

#include "doctest.h"
#include "stabpert/perturbation.hpp"
#include "stabpert/quadrature.hpp"
#include "stabpert/resolvent.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

// Several threads even on a single core, so the parallel path really splits work.
const int kThreads = [] {
  setenv("STABPERT_THREADS", "4", 1);
  return configure_threads_from_env();
}();

}  // namespace

TEST_CASE("circle scan is bit-identical across execution policies") {
  const Scenario s = builtin_scenario("S2");
  const OperatorModel m = s.build_model();
  const ScanGrid grid = build_grids(s.profile, s.config.grid);
  const auto serial = circle_scan(m, s.profile, grid, Exec::serial);
  const auto parallel = circle_scan(m, s.profile, grid, Exec::parallel);
  REQUIRE(serial.size() == parallel.size());
  bool same = true;
  for (std::size_t i = 0; i < serial.size(); ++i)
    same = same && same_bits(serial[i].resnorm, parallel[i].resnorm) && same_bits(serial[i].weighted, parallel[i].weighted);
  CHECK(same);
}

TEST_CASE("region analysis is bit-identical across execution policies") {
  const Scenario s = builtin_scenario("S1");
  const OperatorModel m = s.build_model();
  ScanConfig cfg = s.scan_config();
  cfg.exec = Exec::serial;
  const RegionAnalysis a = analyze_region(m, s.profile, 0, 1.0, cfg);
  cfg.exec = Exec::parallel;
  const RegionAnalysis b = analyze_region(m, s.profile, 0, 1.0, cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  bool same = true;
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    same = same && same_bits(a.rows[i].resnorm, b.rows[i].resnorm) && same_bits(a.rows[i].smoothed, b.rows[i].smoothed);
  CHECK(same);
  CHECK(same_bits(a.smoothed.supremum, b.smoothed.supremum));
}

TEST_CASE("transfer field is bit-identical across execution policies") {
  const Scenario s = builtin_scenario("S1-P1");
  const OperatorModel m = s.build_model().with_dim(400);
  const PerturbedSystem sys(m, s.perturbation);
  ScanConfig cfg = s.scan_config();
  cfg.exec = Exec::serial;
  const TransferField a = transfer_field(sys, s.profile, cfg);
  cfg.exec = Exec::parallel;
  const TransferField b = transfer_field(sys, s.profile, cfg);
  bool same = true;
  for (int l = 0; l < 2; ++l) {
    REQUIRE(a.levels[l].g_norm.size() == b.levels[l].g_norm.size());
    for (std::size_t i = 0; i < a.levels[l].g_norm.size(); ++i)
      same = same && same_bits(a.levels[l].g_norm[i], b.levels[l].g_norm[i]);
  }
  CHECK(same);
}

TEST_CASE("quadrature is bit-identical across execution policies") {
  const Scenario s = builtin_scenario("S1");
  const OperatorModel m = s.build_model();
  const ResolventNorm norm(m);
  const CircleIntegrand f = [&](Complex z, double* out) { out[0] = norm(z); };
  QuadratureConfig cfg = s.config.quadrature;
  cfg.throw_on_unstable = false;
  cfg.exec = Exec::serial;
  const CircleIntegral a = integrate_circle(s.profile, 1.01, 1, f, cfg);
  cfg.exec = Exec::parallel;
  const CircleIntegral b = integrate_circle(s.profile, 1.01, 1, f, cfg);
  CHECK(a.panels == b.panels);
  CHECK(same_bits(a.value[0], b.value[0]));
}

TEST_CASE("thread cap from the environment") {
  CHECK(kThreads == 4);
  CHECK(max_threads() == 4);
}
