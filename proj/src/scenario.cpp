#include "stabpert/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stabpert/oracle.hpp"

namespace stabpert {

using json = nlohmann::json;

namespace {

// -- reading -------------------------------------------------------------------

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ParseError, "field '" + path + "': " + what);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& member(const json& obj, const std::string& path, const std::string& key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::ValidationError, "missing field '" + join(path, key) + "'");
  return *it;
}

const json* optional_member(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) parse_fail(path, "expected an object");
}

double read_double(const json& j, const std::string& path) {
  if (!j.is_number()) parse_fail(path, "expected a number");
  return j.get<double>();
}

std::uint64_t read_uint(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) parse_fail(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

bool read_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) parse_fail(path, "expected true or false");
  return j.get<bool>();
}

std::string read_string(const json& j, const std::string& path) {
  if (!j.is_string()) parse_fail(path, "expected a string");
  return j.get<std::string>();
}

Complex read_complex(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    parse_fail(path, "expected a complex number [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Complex> read_complex_list(const json& j, const std::string& path) {
  if (!j.is_array()) parse_fail(path, "expected a list");
  std::vector<Complex> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_complex(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<double> read_double_list(const json& j, const std::string& path) {
  if (!j.is_array()) parse_fail(path, "expected a list");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_double(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <class T, class Fn>
void read_opt(const json& obj, const std::string& path, const std::string& key, T& dst, Fn&& fn) {
  if (const json* v = optional_member(obj, key)) dst = static_cast<T>(fn(*v, join(path, key)));
}

ModelSpec read_model(const json& j) {
  const std::string path = "model";
  expect_object(j, path);
  ModelSpec m;
  m.kind = read_string(member(j, path, "kind"), "model.kind");
  if (m.kind == "diagonal") {
    const json& rule = member(j, path, "rule");
    expect_object(rule, "model.rule");
    m.rule.id = read_string(member(rule, "model.rule", "id"), "model.rule.id");
    if (m.rule.id == "polar_power") {
      m.rule.c = read_double(member(rule, "model.rule", "c"), "model.rule.c");
      m.rule.s = read_double(member(rule, "model.rule", "s"), "model.rule.s");
      m.rule.d = read_double(member(rule, "model.rule", "d"), "model.rule.d");
      m.rule.q = read_double(member(rule, "model.rule", "q"), "model.rule.q");
    } else if (m.rule.id != "explicit") {
      throw Error(ErrorKind::ValidationError, "unknown entry rule '" + m.rule.id + "' at 'model.rule.id'");
    }
    if (const json* p = optional_member(j, "prefix")) m.prefix = read_complex_list(*p, "model.prefix");
    if (m.rule.id == "explicit")
      m.n_max = m.prefix.size();
    else
      m.n_max = read_uint(member(j, path, "n_max"), "model.n_max");
  } else if (m.kind == "dense") {
    const json& rows = member(j, path, "matrix");
    if (!rows.is_array()) parse_fail("model.matrix", "expected a list of rows");
    for (std::size_t i = 0; i < rows.size(); ++i)
      m.matrix.push_back(read_complex_list(rows[i], "model.matrix[" + std::to_string(i) + "]"));
    m.n_max = m.matrix.size();
  } else {
    throw Error(ErrorKind::ValidationError, "model.kind must be 'diagonal' or 'dense'");
  }
  return m;
}

SpectralProfile read_profile(const json& j) {
  const std::string path = "profile";
  expect_object(j, path);
  SpectralProfile p;
  p.phis = read_double_list(member(j, path, "phis"), "profile.phis");
  p.alpha = read_double(member(j, path, "alpha"), "profile.alpha");
  p.eps_A = read_double(member(j, path, "eps_A"), "profile.eps_A");
  p.M_A = read_double(member(j, path, "M_A"), "profile.M_A");
  return p;
}

ColumnRule read_column(const json& j, const std::string& path) {
  expect_object(j, path);
  ColumnRule r;
  r.id = read_string(member(j, path, "id"), join(path, "id"));
  if (r.id == "smooth") {
    r.mu = read_double(member(j, path, "mu"), join(path, "mu"));
    r.nu = read_double(member(j, path, "nu"), join(path, "nu"));
    r.conjugate = read_bool(member(j, path, "conjugate"), join(path, "conjugate"));
  } else if (r.id == "unit") {
    r.index = read_uint(member(j, path, "index"), join(path, "index"));
  } else if (r.id == "explicit") {
    r.values = read_complex_list(member(j, path, "values"), join(path, "values"));
  } else {
    throw Error(ErrorKind::ValidationError, "unknown column rule '" + r.id + "' at '" + join(path, "id") + "'");
  }
  return r;
}

FiniteRankPerturbation read_perturbation(const json& j) {
  const std::string path = "perturbation";
  expect_object(j, path);
  FiniteRankPerturbation p;
  p.beta = read_double(member(j, path, "beta"), "perturbation.beta");
  p.gamma = read_double(member(j, path, "gamma"), "perturbation.gamma");
  p.scale_b = read_double(member(j, path, "scale_b"), "perturbation.scale_b");
  p.scale_c = read_double(member(j, path, "scale_c"), "perturbation.scale_c");
  for (const char* side : {"b_columns", "c_columns"}) {
    const std::string sp = join(path, side);
    const json& cols = member(j, path, side);
    if (!cols.is_array()) parse_fail(sp, "expected a list");
    auto& dst = std::string(side) == "b_columns" ? p.b_columns : p.c_columns;
    for (std::size_t i = 0; i < cols.size(); ++i) dst.push_back(read_column(cols[i], sp + "[" + std::to_string(i) + "]"));
  }
  if (const json* rank = optional_member(j, "p")) {
    if (read_uint(*rank, "perturbation.p") != p.b_columns.size())
      throw Error(ErrorKind::ValidationError, "perturbation.p does not match the number of columns");
  }
  return p;
}

ExperimentConfig read_config(const json& j) {
  const std::string path = "config";
  expect_object(j, path);
  ExperimentConfig c;
  auto dbl = [](const json& v, const std::string& p) { return read_double(v, p); };
  auto uint = [](const json& v, const std::string& p) { return read_uint(v, p); };
  if (const json* g = optional_member(j, "grid")) {
    const std::string gp = "config.grid";
    expect_object(*g, gp);
    read_opt(*g, gp, "pts_per_decade", c.grid.pts_per_decade, dbl);
    read_opt(*g, gp, "dphi_min", c.grid.dphi_min, dbl);
    read_opt(*g, gp, "uniform_angles", c.grid.uniform_angles, uint);
    read_opt(*g, gp, "region_angles", c.grid.region_angles, uint);
    read_opt(*g, gp, "complement_angles", c.grid.complement_angles, uint);
    read_opt(*g, gp, "radial_min", c.grid.radial_min, dbl);
  }
  read_opt(j, path, "stability_tol", c.stability_tol, dbl);
  read_opt(j, path, "spectrum_floor", c.spectrum_floor, dbl);
  if (const json* q = optional_member(j, "quadrature")) {
    const std::string qp = "config.quadrature";
    expect_object(*q, qp);
    read_opt(*q, qp, "pts_per_decade", c.quadrature.pts_per_decade, dbl);
    read_opt(*q, qp, "r_min", c.quadrature.r_min, dbl);
    read_opt(*q, qp, "r_max", c.quadrature.r_max, dbl);
    read_opt(*q, qp, "base_panels", c.quadrature.base_panels, uint);
    read_opt(*q, qp, "rel_tol", c.quadrature.rel_tol, dbl);
    read_opt(*q, qp, "max_panels", c.quadrature.max_panels, uint);
    read_opt(*q, qp, "stability_tol", c.quadrature.stability_tol, dbl);
  }
  if (const json* o = optional_member(j, "orbit")) {
    expect_object(*o, "config.orbit");
    read_opt(*o, "config.orbit", "max", c.orbit_max, uint);
    read_opt(*o, "config.orbit", "threshold", c.orbit_threshold, dbl);
  }
  read_opt(j, path, "oracle_dim", c.oracle_dim, uint);
  if (const json* p = optional_member(j, "probes")) {
    expect_object(*p, "config.probes");
    read_opt(*p, "config.probes", "basis", c.basis_probes, uint);
    read_opt(*p, "config.probes", "random", c.random_probes, uint);
  }
  read_opt(j, path, "injectivity_samples", c.injectivity_samples, uint);
  read_opt(j, path, "seed", c.seed, uint);
  read_opt(j, path, "power_probe", c.power_probe, uint);
  if (const json* w = optional_member(j, "alpha_window")) {
    const std::vector<double> v = read_double_list(*w, "config.alpha_window");
    if (v.size() != 2) parse_fail("config.alpha_window", "expected [lo, hi]");
    c.alpha_window_lo = v[0];
    c.alpha_window_hi = v[1];
  }
  if (const json* t = optional_member(j, "threshold")) {
    const std::string tp = "config.threshold";
    expect_object(*t, tp);
    read_opt(*t, tp, "low", c.threshold_low, dbl);
    read_opt(*t, tp, "high", c.threshold_high, dbl);
    read_opt(*t, tp, "rel_width", c.threshold_rel_width, dbl);
    read_opt(*t, tp, "rechecks", c.threshold_rechecks, uint);
  }
  return c;
}

// -- writing -------------------------------------------------------------------

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

json complex_list(const std::vector<Complex>& v) {
  json out = json::array();
  for (const Complex& z : v) out.push_back(complex_json(z));
  return out;
}

json column_json(const ColumnRule& r) {
  json j;
  j["id"] = r.id;
  if (r.id == "smooth") {
    j["mu"] = r.mu;
    j["nu"] = r.nu;
    j["conjugate"] = r.conjugate;
  } else if (r.id == "unit") {
    j["index"] = r.index;
  } else {
    j["values"] = complex_list(r.values);
  }
  return j;
}

json scenario_json(const Scenario& s) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = s.name;

  json m;
  m["kind"] = s.model.kind;
  if (s.model.kind == "diagonal") {
    json rule;
    rule["id"] = s.model.rule.id;
    if (s.model.rule.id == "polar_power") {
      rule["c"] = s.model.rule.c;
      rule["s"] = s.model.rule.s;
      rule["d"] = s.model.rule.d;
      rule["q"] = s.model.rule.q;
    }
    m["rule"] = rule;
    m["prefix"] = complex_list(s.model.prefix);
    m["n_max"] = s.model.n_max;
  } else {
    json rows = json::array();
    for (const auto& row : s.model.matrix) rows.push_back(complex_list(row));
    m["matrix"] = rows;
  }
  j["model"] = m;

  json p;
  p["phis"] = s.profile.phis;
  p["alpha"] = s.profile.alpha;
  p["eps_A"] = s.profile.eps_A;
  p["M_A"] = s.profile.M_A;
  j["profile"] = p;

  const FiniteRankPerturbation& pert = s.perturbation;
  json q;
  q["p"] = pert.rank();
  q["beta"] = pert.beta;
  q["gamma"] = pert.gamma;
  q["scale_b"] = pert.scale_b;
  q["scale_c"] = pert.scale_c;
  q["b_columns"] = json::array();
  q["c_columns"] = json::array();
  for (const auto& r : pert.b_columns) q["b_columns"].push_back(column_json(r));
  for (const auto& r : pert.c_columns) q["c_columns"].push_back(column_json(r));
  j["perturbation"] = q;

  const ExperimentConfig& c = s.config;
  json cfg;
  cfg["grid"] = {{"pts_per_decade", c.grid.pts_per_decade},       {"dphi_min", c.grid.dphi_min},
                 {"uniform_angles", c.grid.uniform_angles},       {"region_angles", c.grid.region_angles},
                 {"complement_angles", c.grid.complement_angles}, {"radial_min", c.grid.radial_min}};
  cfg["stability_tol"] = c.stability_tol;
  cfg["spectrum_floor"] = c.spectrum_floor;
  cfg["quadrature"] = {{"pts_per_decade", c.quadrature.pts_per_decade}, {"r_min", c.quadrature.r_min},
                       {"r_max", c.quadrature.r_max},
                       {"base_panels", c.quadrature.base_panels},       {"rel_tol", c.quadrature.rel_tol},
                       {"max_panels", c.quadrature.max_panels},         {"stability_tol", c.quadrature.stability_tol}};
  cfg["orbit"] = {{"max", c.orbit_max}, {"threshold", c.orbit_threshold}};
  cfg["oracle_dim"] = c.oracle_dim;
  cfg["probes"] = {{"basis", c.basis_probes}, {"random", c.random_probes}};
  cfg["injectivity_samples"] = c.injectivity_samples;
  cfg["seed"] = c.seed;
  cfg["power_probe"] = c.power_probe;
  cfg["alpha_window"] = {c.alpha_window_lo, c.alpha_window_hi};
  cfg["threshold"] = {{"low", c.threshold_low},
                      {"high", c.threshold_high},
                      {"rel_width", c.threshold_rel_width},
                      {"rechecks", c.threshold_rechecks}};
  j["config"] = cfg;
  return j;
}

std::string hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const CertificateReport& r) {
  json j;
  j["name"] = r.name;
  j["supremum"] = r.supremum;
  j["argmax"] = complex_json(r.argmax);
  j["bound"] = optional_number(r.bound);
  j["grid"] = {{"points", r.grid.points}, {"floor", r.grid.floor}, {"refinement", r.grid.refinement},
               {"hash", hex(r.grid.hash)}};
  j["refinement_delta"] = r.refinement_delta;
  j["status"] = to_string(r.status);
  j["note"] = r.note;
  j["values"] = r.values;
  j["witness"] = r.witness ? complex_json(*r.witness) : json(nullptr);
  return j;
}

json quadrature_json(const QuadratureResult& q) {
  json j;
  j["name"] = q.name;
  j["r"] = q.r;
  j["value"] = q.value;
  j["weighted"] = q.weighted;
  j["sup"] = q.sup;
  j["sup_r"] = q.sup_r;
  j["refinement_delta"] = q.refinement_delta;
  j["probes"] = q.probes;
  j["status"] = to_string(q.status);
  j["note"] = q.note;
  return j;
}

json decay_json(const DecayTable& t) {
  json j;
  j["name"] = t.name;
  j["n"] = t.n;
  j["norm"] = t.norm;
  j["initial_norm"] = t.initial_norm;
  j["threshold"] = t.threshold;
  j["n_max"] = t.n_max;
  j["first_passage"] = t.first_passage ? json(*t.first_passage) : json(nullptr);
  return j;
}

json verdict_pairs(const std::vector<std::pair<double, Verdict>>& v) {
  json out = json::array();
  for (const auto& [s, verdict] : v) out.push_back({{"scale", s}, {"verdict", to_string(verdict)}});
  return out;
}

// -- subcommands -----------------------------------------------------------------

template <class Fn>
bool stage(ReportBundle& b, const std::string& name, Fn&& fn) {
  try {
    fn();
    return true;
  } catch (const std::exception& e) {
    b.errors.push_back(name + ": " + e.what());
    return false;
  }
}

double refined(const CertificateReport& r) {
  const auto it = r.values.find("refined_sup");
  return it == r.values.end() ? r.supremum : std::max(r.supremum, it->second);
}

std::string aggregate(const ReportBundle& b) {
  for (const auto& r : b.reports)
    if (r.status == Status::refuted) return "refuted";
  bool all = b.errors.empty();
  for (const auto& h : b.hypotheses) all = all && h.passed;
  for (const auto& r : b.reports) all = all && r.status == Status::certified;
  for (const auto& q : b.quadratures) all = all && q.status == Status::certified;
  return all ? "certified" : "inconclusive";
}

void profile_hypothesis(ReportBundle& b, const SpectralProfile& profile) {
  const ValidationReport v = validate_profile(profile);
  std::string detail;
  for (const auto& s : v.violations) detail += (detail.empty() ? "" : "; ") + s;
  b.hypotheses.push_back({"profile", v.ok(), detail});
}

void run_certify(ReportBundle& b, const Scenario& s, const OperatorModel& model) {
  const ScanConfig scan = s.scan_config();
  const SpectralProfile& profile = s.profile;
  profile_hypothesis(b, profile);
  double M = 1.0, M_0 = 0.0;
  stage(b, "power_bound", [&] { M = std::max(1.0, power_bound(model, s.config.power_probe)); });
  b.constants["M"] = M;
  b.constants["M_A"] = profile.M_A;
  b.constants["r_A"] = profile.r_A();
  b.constants["d_A"] = profile.d_A();
  b.constants["alpha"] = profile.alpha;
  stage(b, "certify_growth", [&] {
    GrowthResult g = certify_growth(model, profile, scan);
    b.circle_rows = std::move(g.rows);
    b.reports.push_back(std::move(g.report));
  });
  for (std::size_t k = 0; k < profile.size(); ++k) {
    const std::string ks = std::to_string(k);
    stage(b, "estimate_alpha_" + ks, [&] {
      const AlphaEstimate a =
          estimate_alpha(model, profile.phis[k], {s.config.alpha_window_lo, s.config.alpha_window_hi},
                         s.config.grid.pts_per_decade);
      b.constants["alpha_left_" + ks] = a.left;
      b.constants["alpha_right_" + ks] = a.right;
    });
  }
  stage(b, "kreiss_check", [&] { b.reports.push_back(kreiss_check(model, profile, M, scan)); });
  double M_1 = 0.0;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    const std::string ks = std::to_string(k);
    stage(b, "analyze_region_" + ks, [&] {
      RegionAnalysis ra = analyze_region(model, profile, k, M, scan);
      M_0 = std::max(M_0, refined(ra.plain));
      M_1 = std::max(M_1, refined(ra.smoothed));
      b.constants["M_1_" + ks] = refined(ra.smoothed);
      ra.plain.name = "region_plain_" + ks;
      ra.smoothed.name = "region_smoothed_" + ks;
      b.reports.push_back(std::move(ra.plain));
      b.reports.push_back(std::move(ra.smoothed));
      b.region_rows.push_back(std::move(ra.rows));
    });
  }
  b.constants["M_0"] = M_0;
  b.constants["M_1"] = M_1;
  stage(b, "complement_sup", [&] {
    CertificateReport r = complement_sup(model, profile, M, M_0, scan);
    b.constants["M_2"] = refined(r);
    b.reports.push_back(std::move(r));
  });
  if (profile.size() > 0)
    stage(b, "global_smoothed_sup", [&] { b.reports.push_back(global_smoothed_sup(model, profile, scan)); });
  const std::pair<double, double> pairs[] = {{0.5, 1.0}, {1.0, 2.0}, {1.3, 2.0}};
  for (std::size_t k = 0; k < profile.size(); ++k)
    stage(b, "moment_inequality_" + std::to_string(k), [&] {
      CertificateReport r;
      r.name = "moment_inequality_" + std::to_string(k);
      for (const auto& [tt, t] : pairs) {
        const double v = moment_inequality_probe(model, k, tt, t, 1000, s.config.seed + k);
        r.values["ratio_" + std::to_string(tt).substr(0, 3) + "_" + std::to_string(t).substr(0, 3)] = v;
        r.supremum = std::max(r.supremum, v);
      }
      if (model.is_diagonal()) {
        r.bound = 1.0 + 1e-10;
        r.status = r.supremum <= *r.bound ? Status::certified : Status::refuted;
      } else {
        r.status = Status::certified;
        r.note = "empirical constant for a dense model";
      }
      b.reports.push_back(std::move(r));
    });
  b.verdict = aggregate(b);
}

void run_perturb(ReportBundle& b, const Scenario& s, const OperatorModel& model) {
  const ScanConfig scan = s.scan_config();
  const SpectralProfile& profile = s.profile;
  const FiniteRankPerturbation& pert = s.perturbation;
  const std::size_t N = profile.size();
  profile_hypothesis(b, profile);
  b.constants["beta"] = pert.beta;
  b.constants["gamma"] = pert.gamma;
  b.constants["scale_b"] = pert.scale_b;
  b.constants["scale_c"] = pert.scale_c;
  const bool split_ok = pert.rank() == 0 || pert.beta + pert.gamma >= profile.alpha;
  b.hypotheses.push_back({"split_sum", split_ok, split_ok ? "" : "beta + gamma < alpha"});

  double M = 1.0, M_0 = 0.0, M_2 = 1.0;
  std::vector<double> M_1(N, 1.0);
  stage(b, "power_bound", [&] { M = std::max(1.0, power_bound(model, s.config.power_probe)); });
  for (std::size_t k = 0; k < N; ++k)
    stage(b, "analyze_region_" + std::to_string(k), [&] {
      const RegionAnalysis ra = analyze_region(model, profile, k, M, scan);
      M_0 = std::max(M_0, refined(ra.plain));
      M_1[k] = std::max(1.0, refined(ra.smoothed));
      b.constants["M_1_" + std::to_string(k)] = M_1[k];
    });
  stage(b, "complement_sup", [&] { M_2 = std::max(1.0, refined(complement_sup(model, profile, M, M_0, scan))); });
  b.constants["M"] = M;
  b.constants["M_0"] = M_0;
  b.constants["M_2"] = M_2;

  const PerturbedSystem sys(model, pert, scan.spectrum_floor);
  std::optional<SmoothedNorms> norms;
  if (pert.rank() > 0) {
    stage(b, "smoothed_norms", [&] {
      norms = smoothed_norms(model, pert, profile);
      for (std::size_t k = 0; k < N; ++k) {
        b.constants["smoothed_b_" + std::to_string(k)] = norms->b[k];
        b.constants["smoothed_c_" + std::to_string(k)] = norms->c[k];
      }
      b.constants["norm_B"] = norms->b_plain;
      b.constants["norm_C"] = norms->c_plain;
    });
    b.hypotheses.push_back({"smoothed_norms", norms.has_value(), norms ? "" : "smoothed norms unavailable"});
  }
  std::optional<TransferField> field;
  stage(b, "transfer_field", [&] { field = transfer_field(sys, profile, scan); });
  if (field && norms)
    for (std::size_t k = 0; k < N; ++k)
      stage(b, "transfer_bound_" + std::to_string(k), [&] {
        TransferScan ts = transfer_bound_certify(*field, sys.scale_product(), pert, profile, k, *norms, M_1[k], M_2,
                                                 model, scan);
        b.constants["M_R_" + std::to_string(k)] = ts.region.values["empirical_M_R"];
        b.reports.push_back(std::move(ts.region));
        if (k == 0) {
          ts.complement.name = "transfer_complement";
          b.reports.push_back(std::move(ts.complement));
        }
      });
  CertificateReport d_rep;
  if (field)
    stage(b, "d_inverse_sup", [&] {
      d_rep = d_inverse_sup(*field, sys, profile, scan);
      b.constants["sup_G"] = d_rep.values["sup_G"];
      b.constants["M_D"] = std::max(d_rep.supremum, d_rep.values["refined_sup"]);
      b.reports.push_back(d_rep);
    });

  const std::size_t n_o =
      std::min({s.config.oracle_dim, kOracleDimCap, model.has_tail() ? s.config.oracle_dim : model.dim()});
  std::vector<Complex> eigs;
  const bool have_eigs = stage(b, "oracle_eigens", [&] { eigs = oracle_eigens(make_truncation(model, pert, n_o)); });
  if (pert.rank() > 0 && have_eigs)
    for (std::size_t k = 0; k < N; ++k)
      stage(b, "injectivity_" + std::to_string(k), [&] {
        b.reports.push_back(
            injectivity_factor_check(sys, pert, profile, k, s.config.injectivity_samples, s.config.seed + k, eigs));
      });
  if (have_eigs) {
    if (pert.rank() == 0) d_rep.status = Status::certified;
    CertificateReport inc = spectrum_inclusion_check(profile, d_rep, eigs);
    b.constants["spectral_radius"] = inc.supremum;
    b.reports.push_back(std::move(inc));
  }
  for (const char* name : {"spectrum_inclusion", "d_inverse"})
    for (const auto& r : b.reports)
      if (r.name == name && r.status == Status::refuted && r.witness && !b.witness) b.witness = r.witness;
  b.verdict = aggregate(b);
}

void copy_verdict(ReportBundle& b, StabilityVerdict v) {
  b.verdict = to_string(v.verdict);
  b.hypotheses = std::move(v.hypotheses);
  b.reports = std::move(v.reports);
  b.quadratures = std::move(v.quadratures);
  b.decay = std::move(v.decay);
  b.constants = std::move(v.constants);
  b.errors = std::move(v.errors);
  b.reasons = std::move(v.reasons);
  b.witness = v.witness;
  b.circle_rows = std::move(v.circle_rows);
  b.perturbed_rows = std::move(v.perturbed_rows);
  b.region_rows = std::move(v.region_rows);
}

void run_integral(ReportBundle& b, const Scenario& s, const OperatorModel& model) {
  QuadratureConfig qc = s.config.quadrature;
  qc.throw_on_unstable = false;
  const ExperimentConfig& c = s.config;
  stage(b, "integral_criterion", [&] {
    const ProbeSet probes = make_probes(c.basis_probes, c.random_probes, std::min<std::size_t>(20, model.dim()), c.seed);
    QuadratureResult q = integral_criterion(model, probes, s.profile, qc);
    q.name = "integral_criterion";
    b.constants["integral_sup"] = q.sup;
    b.quadratures.push_back(std::move(q));
  });
  if (s.perturbation.rank() > 0)
    stage(b, "integral_criterion_perturbed", [&] {
      const std::size_t n_o =
          std::min({c.oracle_dim, kOracleDimCap, model.has_tail() ? c.oracle_dim : model.dim()});
      const OperatorModel model_o = model.with_dim(n_o);
      const PerturbedSystem sys(model_o, s.perturbation, c.spectrum_floor);
      const ProbeSet probes = make_probes(c.basis_probes, c.random_probes, std::min<std::size_t>(20, n_o), c.seed);
      QuadratureResult q = integral_criterion(sys, probes, s.profile, qc);
      b.constants["integral_sup_perturbed"] = q.sup;
      b.quadratures.push_back(std::move(q));
    });
  b.verdict = aggregate(b);
}

void run_scan(ReportBundle& b, const Scenario& s, const OperatorModel& model) {
  const ScanConfig scan = s.scan_config();
  stage(b, "circle_scan", [&] {
    const ScanGrid grid = build_grids(s.profile, scan.resolution);
    b.circle_rows = circle_scan(model, s.profile, grid, scan.exec, scan.spectrum_floor);
  });
  double M = 1.0;
  stage(b, "power_bound", [&] { M = std::max(1.0, power_bound(model, s.config.power_probe)); });
  for (std::size_t k = 0; k < s.profile.size(); ++k)
    stage(b, "region_scan_" + std::to_string(k),
          [&] { b.region_rows.push_back(analyze_region(model, s.profile, k, M, scan).rows); });
  b.verdict = b.errors.empty() ? "complete" : "inconclusive";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string file_stem(std::string name) {
  for (char& ch : name)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) ch = '_';
  return name;
}

std::string circle_csv(const std::vector<CircleRow>& rows) {
  std::string s = "phi,nearest_k,dist,resnorm,weighted\n";
  for (const auto& r : rows)
    s += num(r.phi) + "," + std::to_string(r.nearest_k) + "," + num(r.dist) + "," + num(r.resnorm) + "," +
         num(r.weighted) + "\n";
  return s;
}

}  // namespace

// -- scenario ---------------------------------------------------------------------

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto& ga = a.grid;
  const auto& gb = b.grid;
  const auto& qa = a.quadrature;
  const auto& qb = b.quadrature;
  return ga.pts_per_decade == gb.pts_per_decade && ga.dphi_min == gb.dphi_min &&
         ga.uniform_angles == gb.uniform_angles && ga.region_angles == gb.region_angles &&
         ga.complement_angles == gb.complement_angles && ga.radial_min == gb.radial_min &&
         a.stability_tol == b.stability_tol && a.spectrum_floor == b.spectrum_floor &&
         qa.pts_per_decade == qb.pts_per_decade && qa.r_min == qb.r_min && qa.r_max == qb.r_max &&
         qa.base_panels == qb.base_panels && qa.rel_tol == qb.rel_tol && qa.max_panels == qb.max_panels &&
         qa.stability_tol == qb.stability_tol && a.orbit_max == b.orbit_max && a.orbit_threshold == b.orbit_threshold &&
         a.oracle_dim == b.oracle_dim && a.basis_probes == b.basis_probes && a.random_probes == b.random_probes &&
         a.injectivity_samples == b.injectivity_samples && a.seed == b.seed && a.power_probe == b.power_probe &&
         a.alpha_window_lo == b.alpha_window_lo && a.alpha_window_hi == b.alpha_window_hi &&
         a.threshold_low == b.threshold_low && a.threshold_high == b.threshold_high &&
         a.threshold_rel_width == b.threshold_rel_width && a.threshold_rechecks == b.threshold_rechecks;
}

bool operator==(const Scenario& a, const Scenario& b) {
  return a.name == b.name && a.model == b.model && a.profile.phis == b.profile.phis &&
         a.profile.alpha == b.profile.alpha && a.profile.eps_A == b.profile.eps_A && a.profile.M_A == b.profile.M_A &&
         a.perturbation == b.perturbation && a.config == b.config;
}

OperatorModel Scenario::build_model() const {
  if (model.kind == "dense") {
    const auto n = static_cast<Eigen::Index>(model.matrix.size());
    CMatrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<Eigen::Index>(model.matrix[static_cast<std::size_t>(i)].size()) != n)
        throw Error(ErrorKind::ValidationError, "model.matrix must be square");
      for (Eigen::Index j = 0; j < n; ++j) m(i, j) = model.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return OperatorModel::dense(std::move(m), profile.phis);
  }
  if (model.rule.id == "explicit") return OperatorModel::explicit_diagonal(model.prefix, profile.phis);
  return OperatorModel::diagonal(model.rule, model.prefix, model.n_max, profile.phis);
}

ScanConfig Scenario::scan_config() const {
  ScanConfig c;
  c.resolution = config.grid;
  c.stability_tol = config.stability_tol;
  c.spectrum_floor = config.spectrum_floor;
  return c;
}

StabilityConfig Scenario::stability_config() const {
  StabilityConfig c;
  c.scan = scan_config();
  c.quadrature = config.quadrature;
  c.orbit_max = config.orbit_max;
  c.orbit_threshold = config.orbit_threshold;
  c.oracle_dim = config.oracle_dim;
  c.basis_probes = config.basis_probes;
  c.random_probes = config.random_probes;
  c.injectivity_samples = config.injectivity_samples;
  c.seed = config.seed;
  return c;
}

std::vector<std::string> builtin_names() { return {"S1", "S2", "S1-P1", "S1-violation"}; }

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  s.model.kind = "diagonal";
  s.model.n_max = 2000;
  if (name == "S2") {
    s.model.rule = EntryRule::polar_power(1, 1, 1, 1);
    s.profile.phis = {0.0, kPi};
    s.profile.alpha = 1.0;
    s.profile.eps_A = kPi / 8;
    s.profile.M_A = 4.0;
    return s;
  }
  s.model.rule = EntryRule::polar_power(1, 2, 1, 1);
  s.profile.phis = {0.0};
  s.profile.alpha = 2.0;
  s.profile.eps_A = kPi / 8;
  s.profile.M_A = 8.6;
  if (name == "S1") return s;
  if (name == "S1-P1") {
    s.perturbation.beta = 1.0;
    s.perturbation.gamma = 1.0;
    s.perturbation.scale_b = 0.1;
    s.perturbation.scale_c = 0.1;
    s.perturbation.b_columns = {ColumnRule::smooth(1.0, 1.0, false)};
    s.perturbation.c_columns = {ColumnRule::smooth(1.0, 1.0, true)};
    s.config.threshold_low = 0.0;
    s.config.threshold_high = 1.0;
    return s;
  }
  if (name == "S1-violation") {
    s.perturbation.scale_b = std::sqrt(2.0);
    s.perturbation.scale_c = std::sqrt(2.0);
    s.perturbation.b_columns = {ColumnRule::unit_vector(1)};
    s.perturbation.c_columns = {ColumnRule::unit_vector(1)};
    return s;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown builtin scenario '" + name + "'");
}

void validate_scenario(const Scenario& s) {
  std::vector<std::string> issues;
  const ValidationReport pv = validate_profile(s.profile);
  issues.insert(issues.end(), pv.violations.begin(), pv.violations.end());
  if (s.model.kind == "diagonal" && s.model.rule.id == "polar_power" && s.model.n_max == 0)
    issues.push_back("model.n_max must be positive");
  const ExperimentConfig& c = s.config;
  if (c.grid.pts_per_decade < 8.0) issues.push_back("config.grid.pts_per_decade must be at least 8");
  if (!(c.stability_tol > 0.0)) issues.push_back("config.stability_tol must be positive");
  if (!(c.quadrature.stability_tol > 0.0)) issues.push_back("config.quadrature.stability_tol must be positive");
  if (c.orbit_max == 0) issues.push_back("config.orbit.max must be at least 1");
  if (c.oracle_dim == 0 || c.oracle_dim > kOracleDimCap) issues.push_back("config.oracle_dim must lie in [1, 2000]");
  if (!(c.alpha_window_lo > 0.0) || !(c.alpha_window_hi > c.alpha_window_lo))
    issues.push_back("config.alpha_window must satisfy 0 < lo < hi");
  if (!issues.empty()) {
    std::string msg;
    for (const auto& i : issues) msg += (msg.empty() ? "" : "; ") + i;
    throw Error(ErrorKind::ValidationError, msg);
  }
  const OperatorModel model = s.build_model();
  validate_perturbation(model, s.perturbation);
}

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }
  expect_object(j, "(root)");
  if (const json* v = optional_member(j, "schema_version")) {
    if (!v->is_number_integer() || v->get<int>() != kSchemaVersion)
      parse_fail("schema_version", "unsupported schema version");
  }
  Scenario s;
  if (const json* n = optional_member(j, "name")) s.name = read_string(*n, "name");
  s.model = read_model(member(j, "", "model"));
  s.profile = read_profile(member(j, "", "profile"));
  if (const json* p = optional_member(j, "perturbation")) s.perturbation = read_perturbation(*p);
  if (const json* c = optional_member(j, "config")) s.config = read_config(*c);
  validate_scenario(s);
  return s;
}

Scenario load_scenario(const std::string& source) {
  const std::string prefix = "builtin:";
  if (source.rfind(prefix, 0) == 0) return builtin_scenario(source.substr(prefix.size()));
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read scenario file " + source);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string serialize_scenario(const Scenario& scenario) { return scenario_json(scenario).dump(2) + "\n"; }

// -- running ------------------------------------------------------------------------

Subcommand parse_subcommand(const std::string& name) {
  for (Subcommand s : {Subcommand::certify, Subcommand::perturb, Subcommand::stability, Subcommand::threshold,
                       Subcommand::integral, Subcommand::scan})
    if (name == to_string(s)) return s;
  throw Error(ErrorKind::InvalidArgument, "unknown subcommand '" + name + "'");
}

const char* to_string(Subcommand sub) {
  switch (sub) {
    case Subcommand::certify: return "certify";
    case Subcommand::perturb: return "perturb";
    case Subcommand::stability: return "stability";
    case Subcommand::threshold: return "threshold";
    case Subcommand::integral: return "integral";
    case Subcommand::scan: return "scan";
  }
  return "scan";
}

int exit_code_for(const std::string& verdict) {
  if (verdict == "preserved" || verdict == "certified" || verdict == "complete") return 0;
  if (verdict == "violated" || verdict == "refuted") return 2;
  return 3;
}

ReportBundle run(Subcommand sub, const Scenario& scenario) {
  ReportBundle b;
  b.subcommand = to_string(sub);
  b.scenario_name = scenario.name;
  b.seed = scenario.config.seed;
  const OperatorModel model = scenario.build_model();
  switch (sub) {
    case Subcommand::certify: run_certify(b, scenario, model); break;
    case Subcommand::perturb: run_perturb(b, scenario, model); break;
    case Subcommand::stability: {
      const StabilityPipeline pipe(model, scenario.profile, scenario.perturbation, scenario.stability_config());
      copy_verdict(b, pipe.run());
      break;
    }
    case Subcommand::threshold: {
      const ExperimentConfig& c = scenario.config;
      const StabilityPipeline pipe(model, scenario.profile, scenario.perturbation, scenario.stability_config());
      ThresholdResult t =
          delta_threshold_search(pipe, c.threshold_low, c.threshold_high, c.threshold_rel_width, c.threshold_rechecks);
      b.constants["s_low"] = t.s_low;
      b.constants["s_high"] = t.s_high;
      b.verdict = t.monotone ? "certified" : "inconclusive";
      if (!t.monotone) b.reasons.push_back("a re-verification below the bracket was not preserved");
      b.threshold = std::move(t);
      break;
    }
    case Subcommand::integral: run_integral(b, scenario, model); break;
    case Subcommand::scan: run_scan(b, scenario, model); break;
  }
  b.exit_code = exit_code_for(b.verdict);
  return b;
}

std::string bundle_json(const ReportBundle& b) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["subcommand"] = b.subcommand;
  j["scenario"] = b.scenario_name;
  j["verdict"] = b.verdict;
  j["exit_code"] = b.exit_code;
  j["hypotheses"] = json::array();
  for (const auto& h : b.hypotheses) j["hypotheses"].push_back({{"name", h.name}, {"passed", h.passed}, {"detail", h.detail}});
  j["reports"] = json::array();
  for (const auto& r : b.reports) j["reports"].push_back(report_json(r));
  j["quadratures"] = json::array();
  for (const auto& q : b.quadratures) j["quadratures"].push_back(quadrature_json(q));
  j["decay"] = json::array();
  for (const auto& t : b.decay) j["decay"].push_back(decay_json(t));
  j["constants"] = json::object();
  for (const auto& [k, v] : b.constants) j["constants"][k] = v;
  j["errors"] = b.errors;
  j["reasons"] = b.reasons;
  j["witness"] = b.witness ? complex_json(*b.witness) : json(nullptr);
  if (b.threshold) {
    const ThresholdResult& t = *b.threshold;
    j["threshold"] = {{"initial_low", t.initial_low}, {"initial_high", t.initial_high},
                      {"s_low", t.s_low},             {"s_high", t.s_high},
                      {"history", verdict_pairs(t.history)},
                      {"rechecks", verdict_pairs(t.rechecks)},
                      {"monotone", t.monotone}};
  } else {
    j["threshold"] = nullptr;
  }
  json hashes = json::object();
  for (const auto& r : b.reports)
    if (r.grid.hash != 0) hashes[r.name] = hex(r.grid.hash);
  j["provenance"] = {{"tool_version", kToolVersion}, {"seed", b.seed}, {"grid_hashes", hashes}};
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_reports(const ReportBundle& b, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> out;
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto path = dir / name;
    write_text(path, text);
    out.push_back(path);
  };
  emit("bundle.json", bundle_json(b));
  if (!b.circle_rows.empty()) emit("circle_scan.csv", circle_csv(b.circle_rows));
  if (!b.perturbed_rows.empty()) emit("circle_scan_perturbed.csv", circle_csv(b.perturbed_rows));
  for (std::size_t k = 0; k < b.region_rows.size(); ++k) {
    if (b.region_rows[k].empty()) continue;
    std::string s = "re,im,resnorm,smoothed\n";
    for (const auto& r : b.region_rows[k])
      s += num(r.lambda.real()) + "," + num(r.lambda.imag()) + "," + num(r.resnorm) + "," + num(r.smoothed) + "\n";
    emit("region_scan_" + std::to_string(k) + ".csv", s);
  }
  for (const auto& q : b.quadratures) {
    if (q.r.empty()) continue;
    std::string s = "r,value,weighted\n";
    for (std::size_t i = 0; i < q.r.size(); ++i) s += num(q.r[i]) + "," + num(q.value[i]) + "," + num(q.weighted[i]) + "\n";
    emit("quadrature_" + file_stem(q.name) + ".csv", s);
  }
  for (const auto& t : b.decay) {
    std::string s = "n,norm\n";
    for (std::size_t i = 0; i < t.n.size(); ++i) s += std::to_string(t.n[i]) + "," + num(t.norm[i]) + "\n";
    emit("decay_" + file_stem(t.name) + ".csv", s);
  }
  return out;
}

}  // namespace stabpert
