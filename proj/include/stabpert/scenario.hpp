#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stabpert/geometry.hpp"
#include "stabpert/model.hpp"
#include "stabpert/perturbation.hpp"
#include "stabpert/quadrature.hpp"
#include "stabpert/resolvent.hpp"
#include "stabpert/stability.hpp"

namespace stabpert {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct ModelSpec {
  std::string kind = "diagonal";  ///< "diagonal" or "dense"
  EntryRule rule;
  std::vector<Complex> prefix;
  std::size_t n_max = 2000;
  std::vector<std::vector<Complex>> matrix;  ///< rows, dense only

  bool operator==(const ModelSpec&) const = default;
};

struct ExperimentConfig {
  GridResolution grid;
  double stability_tol = 0.1;
  double spectrum_floor = 1e-14;
  QuadratureConfig quadrature;
  std::uint64_t orbit_max = 100000;
  double orbit_threshold = 1e-3;
  std::size_t oracle_dim = 500;
  std::size_t basis_probes = 20;
  std::size_t random_probes = 20;
  std::size_t injectivity_samples = 8;
  std::uint64_t seed = 12345;
  int power_probe = 64;
  double alpha_window_lo = 1e-3;
  double alpha_window_hi = 1e-1;
  double threshold_low = 0.0;
  double threshold_high = 1.0;
  double threshold_rel_width = 1e-3;
  std::size_t threshold_rechecks = 5;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

struct Scenario {
  std::string name;
  ModelSpec model;
  SpectralProfile profile;
  FiniteRankPerturbation perturbation;
  ExperimentConfig config;

  OperatorModel build_model() const;
  ScanConfig scan_config() const;
  StabilityConfig stability_config() const;
};

bool operator==(const Scenario& a, const Scenario& b);

/// "S1", "S2", "S1-P1", "S1-violation".
std::vector<std::string> builtin_names();
Scenario builtin_scenario(const std::string& name);

/// Parses and validates. ParseError carries the line or the field path;
/// ValidationError lists every violated clause.
Scenario parse_scenario(const std::string& text);
/// A file path or "builtin:NAME".
Scenario load_scenario(const std::string& source);
std::string serialize_scenario(const Scenario& scenario);
void validate_scenario(const Scenario& scenario);

struct ReportBundle {
  std::string subcommand;
  std::string scenario_name;
  std::string verdict;
  int exit_code = 0;
  std::vector<HypothesisCheck> hypotheses;
  std::vector<CertificateReport> reports;
  std::vector<QuadratureResult> quadratures;
  std::vector<DecayTable> decay;
  std::map<std::string, double> constants;
  std::vector<std::string> errors;
  std::vector<std::string> reasons;
  std::optional<Complex> witness;
  std::optional<ThresholdResult> threshold;
  std::uint64_t seed = 0;

  std::vector<CircleRow> circle_rows;
  std::vector<CircleRow> perturbed_rows;
  std::vector<std::vector<RegionRow>> region_rows;
};

enum class Subcommand { certify, perturb, stability, threshold, integral, scan };
Subcommand parse_subcommand(const std::string& name);
const char* to_string(Subcommand sub);

/// Runs one subcommand. Stage errors are recorded in the bundle; errors that
/// prevent any result (invalid bracket, bad input) propagate.
ReportBundle run(Subcommand sub, const Scenario& scenario);

/// 0 preserved/certified, 2 refuted/violated, 3 inconclusive.
int exit_code_for(const std::string& verdict);

std::string bundle_json(const ReportBundle& bundle);

/// bundle.json plus the CSV tables that have rows. Returns the written paths.
std::vector<std::filesystem::path> emit_reports(const ReportBundle& bundle, const std::filesystem::path& dir);

}  // namespace stabpert
