#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stabpert_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("builtin scenarios") {
  const Scenario s1 = load_scenario("builtin:S1");
  CHECK(s1.model.kind == "diagonal");
  CHECK(s1.model.rule == EntryRule::polar_power(1, 2, 1, 1));
  CHECK(s1.model.n_max == 2000);
  CHECK(s1.profile.phis == std::vector<double>{0.0});
  CHECK(s1.profile.alpha == 2.0);
  CHECK(s1.profile.eps_A == kPi / 8);

  const Scenario s2 = load_scenario("builtin:S2");
  CHECK(s2.profile.phis == std::vector<double>{0.0, kPi});
  CHECK(s2.profile.alpha == 1.0);
  CHECK(s2.profile.d_A() == doctest::Approx(kPi));

  CHECK_THROWS_AS(load_scenario("builtin:nope"), Error);
}

TEST_CASE("serialization round trip") {
  for (const std::string& name : builtin_names()) {
    const Scenario s = builtin_scenario(name);
    const std::string text = serialize_scenario(s);
    const Scenario back = parse_scenario(text);
    CHECK(back == s);
    CHECK(serialize_scenario(back) == text);
  }
}

TEST_CASE("missing alpha names the field") {
  nlohmann::json j = nlohmann::json::parse(serialize_scenario(builtin_scenario("S1")));
  j["profile"].erase("alpha");
  try {
    parse_scenario(j.dump(2));
    FAIL("expected ValidationError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ValidationError);
    CHECK(std::string(e.what()).find("alpha") != std::string::npos);
  }
}

TEST_CASE("parse errors carry a location") {
  try {
    parse_scenario("{\n  \"schema_version\": 1,\n  \"name\": \n}");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
  nlohmann::json j = nlohmann::json::parse(serialize_scenario(builtin_scenario("S1")));
  j["profile"]["alpha"] = "two";
  try {
    parse_scenario(j.dump());
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("profile.alpha") != std::string::npos);
  }
}

TEST_CASE("validation lists violated clauses") {
  Scenario s = builtin_scenario("S1");
  s.profile.alpha = 0.5;
  s.config.grid.pts_per_decade = 4.0;
  try {
    validate_scenario(s);
    FAIL("expected ValidationError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ValidationError);
    const std::string what = e.what();
    CHECK(what.find("alpha") != std::string::npos);
    CHECK(what.find("pts_per_decade") != std::string::npos);
  }
}

TEST_CASE("exit codes follow the verdict") {
  CHECK(exit_code_for("preserved") == 0);
  CHECK(exit_code_for("certified") == 0);
  CHECK(exit_code_for("refuted") == 2);
  CHECK(exit_code_for("violated") == 2);
  CHECK(exit_code_for("inconclusive") == 3);
  CHECK(parse_subcommand("threshold") == Subcommand::threshold);
  CHECK_THROWS_AS(parse_subcommand("bogus"), Error);
}

TEST_CASE("empty bundle") {
  ReportBundle b;
  b.subcommand = "scan";
  b.verdict = "complete";
  const fs::path dir = scratch("empty");
  const auto files = emit_reports(b, dir);
  REQUIRE(files.size() == 1);
  CHECK(files[0].filename() == "bundle.json");
  const nlohmann::json j = nlohmann::json::parse(slurp(files[0]));
  CHECK(j["schema_version"] == kSchemaVersion);
  CHECK(j["reports"].empty());
  CHECK(j["quadratures"].empty());
  CHECK(j["errors"].empty());
  fs::remove_all(dir);
}

TEST_CASE("S1 certify emits one CSV row per scan angle") {
  const Scenario s = builtin_scenario("S1");
  const ReportBundle b = run(Subcommand::certify, s);
  CHECK(b.verdict == "certified");
  CHECK(b.exit_code == 0);
  const fs::path dir = scratch("certify");
  emit_reports(b, dir);
  const ScanGrid grid = build_grids(s.profile, s.config.grid);
  CHECK(line_count(dir / "circle_scan.csv") == grid.circle.size() + 1);
  CHECK(fs::exists(dir / "region_scan_0.csv"));
  fs::remove_all(dir);
}

TEST_CASE("bundles are deterministic") {
  const Scenario s = builtin_scenario("S2");
  const std::string a = bundle_json(run(Subcommand::scan, s));
  const std::string b = bundle_json(run(Subcommand::scan, s));
  CHECK(a == b);
  const nlohmann::json j = nlohmann::json::parse(a);
  CHECK(j["provenance"]["tool_version"] == kToolVersion);
  CHECK(j["verdict"] == "complete");
}
