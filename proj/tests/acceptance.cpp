#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "stabpert/oracle.hpp"
#include "stabpert/parallel.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const CertificateReport* find(const ReportBundle& b, const std::string& name) {
  for (const auto& r : b.reports)
    if (r.name == name) return &r;
  return nullptr;
}

Outcome growth_order() {
  const Scenario s1 = builtin_scenario("S1"), s2 = builtin_scenario("S2");
  const OperatorModel m1 = s1.build_model(), m2 = s2.build_model();
  const std::pair<double, double> window{1e-3, 1e-1};
  const AlphaEstimate a1 = estimate_alpha(m1, 0.0, window);
  bool ok = std::abs(a1.right - 2.0) <= 0.15;
  std::string detail = fmt("S1 %.4f", a1.right);
  for (double phi : s2.profile.phis) {
    const AlphaEstimate a = estimate_alpha(m2, phi, window);
    ok = ok && std::abs(a.left - 1.0) <= 0.15 && std::abs(a.right - 1.0) <= 0.15;
    detail += fmt("; S2 phi=%.4f left %.4f right %.4f", phi, a.left, a.right);
  }
  return {ok, detail};
}

Outcome kreiss() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"S1", "S2"}) {
    const Scenario s = builtin_scenario(name);
    const CertificateReport r = kreiss_check(s.build_model(), s.profile, 1.0, s.scan_config());
    const double sup = std::max(r.supremum, r.values.at("refined_sup"));
    ok = ok && sup <= 1.0 + 1e-9;
    detail += std::string(detail.empty() ? "" : "; ") + name + fmt(" sup %.12f", sup);
  }
  return {ok, detail};
}

Outcome smoothed_vs_plain() {
  const Scenario s = builtin_scenario("S1");
  const RegionAnalysis ra = analyze_region(s.build_model(), s.profile, 0, 1.0, s.scan_config());
  const double plain = ra.smoothed.values.at("plain_sup");
  const bool ok = std::isfinite(ra.smoothed.supremum) && ra.smoothed.refinement_delta < 0.1 && plain > 1e6;
  return {ok, fmt("smoothed sup %.6g (delta %.3g), plain sup %.3g", ra.smoothed.supremum,
                  ra.smoothed.refinement_delta, plain)};
}

Outcome moment() {
  double worst = 0.0;
  for (const char* name : {"S1", "S2"}) {
    const Scenario s = builtin_scenario(name);
    const OperatorModel m = s.build_model();
    for (std::size_t k = 0; k < s.profile.size(); ++k)
      for (auto [tt, t] : {std::pair{0.5, 1.0}, std::pair{1.0, 2.0}, std::pair{1.3, 2.0}})
        worst = std::max(worst, moment_inequality_probe(m, k, tt, t, 1000, s.config.seed + k));
  }
  return {worst <= 1.0 + 1e-10, fmt("max ratio %.15f", worst)};
}

Outcome smw() {
  const Scenario s = builtin_scenario("S1-P1");
  const OperatorModel m = s.build_model().with_dim(500);
  const PerturbedSystem sys(m, s.perturbation);
  const DenseTruncation trunc = make_truncation(m, s.perturbation, 500);
  const DenseTruncation plain = make_truncation(m, 500);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss;
  double worst = 0.0;
  std::size_t max_rank = 0;
  for (int i = 0; i < 100; ++i) {
    const double r = 1.0 + std::pow(10.0, -4.0 + 4.0 * uni(rng));
    const Complex z = std::polar(r, kTwoPi * uni(rng));
    CVector x(500);
    for (auto& v : x) v = Complex(gauss(rng), gauss(rng));
    const CVector ref = oracle_solve(trunc, z, x);
    worst = std::max(worst, (smw_resolvent_apply(sys, z, x) - ref).norm() / ref.norm());
    if (i % 20 == 0) {
      const auto n = static_cast<Eigen::Index>(500);
      const CMatrix I = CMatrix::Identity(n, n);
      const CMatrix diff = (z * I - trunc.active()).inverse() - (z * I - plain.active()).inverse();
      const Eigen::JacobiSVD<CMatrix> svd(diff);
      const auto& sv = svd.singularValues();
      std::size_t rank = 0;
      for (Eigen::Index j = 0; j < sv.size(); ++j)
        if (sv(j) > 1e-10 * sv(0)) ++rank;
      max_rank = std::max(max_rank, rank);
    }
  }
  return {worst <= 1e-8 && max_rank <= 1,
          fmt("max relative error %.3g, numerical rank %.0f", worst, static_cast<double>(max_rank))};
}

Outcome quadrature() {
  const auto m = OperatorModel::explicit_diagonal({0.5});
  SpectralProfile p;
  p.phis = {0.0};
  p.alpha = 1.0;
  p.M_A = 2.0;
  QuadratureConfig cfg;
  CMatrix e1 = CMatrix::Ones(1, 1);
  const QuadratureResult q = finite_rank_integral(m, e1, false, p, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < q.r.size(); ++i) {
    const double r = q.r[i];
    const double exact = (r - 1.0) * kTwoPi / (r * r - 0.25);
    worst = std::max(worst, std::abs(q.weighted[i] - exact) / exact);
  }
  ProbeSet probes = make_probes(1, 0, 1, 1);
  const QuadratureResult ic = integral_criterion(m, probes, p, cfg);
  return {worst <= 1e-6 && ic.refinement_delta <= 0.05,
          fmt("max relative error %.3g over %.0f radii, criterion delta %.3g", worst, static_cast<double>(q.r.size()),
              ic.refinement_delta)};
}

std::string stability_json;

Outcome preservation() {
  const Scenario s = builtin_scenario("S1-P1");
  const ReportBundle b = run(Subcommand::stability, s);
  stability_json = bundle_json(b);
  const CertificateReport* d = find(b, "d_inverse");
  const CertificateReport* g = find(b, "perturbed_growth");
  const CertificateReport* inc = find(b, "spectrum_inclusion");
  const CertificateReport* orb = find(b, "orbit_decay");
  if (!d || !g || !inc || !orb) return {false, "verdict " + b.verdict + ", missing reports"};
  const double sup_g = std::max(d->values.at("sup_G"), d->values.at("refined_sup_G"));
  const double neumann = 1.0 / (1.0 - sup_g);
  const bool ok = b.verdict == "preserved" && sup_g < 1.0 && d->supremum <= neumann + 1e-9 &&
                  g->bound && g->supremum <= *g->bound && inc->supremum < 1.0 &&
                  orb->status == Status::certified &&
                  orb->values.at("first_passage") == orb->values.at("oracle_first_passage");
  return {ok, "verdict " + b.verdict +
                  fmt(", sup|G| %.4g, sup|D^-1| %.6g <= %.6g, growth %.4g", sup_g, d->supremum, neumann,
                      g->supremum) +
                  fmt(" <= %.4g, radius %.6f, first passage %.0f = oracle", g->bound.value_or(0.0), inc->supremum,
                      orb->values.at("first_passage"))};
}

Outcome violation() {
  const Scenario s = builtin_scenario("S1-violation");
  const ReportBundle b = run(Subcommand::stability, s);
  const CertificateReport* inc = find(b, "spectrum_inclusion");
  const CertificateReport* d = find(b, "d_inverse");
  if (!inc || !d) return {false, "verdict " + b.verdict + ", missing reports"};
  const bool eig = inc->supremum > 1.0 + 1e-8;
  const bool sing = d->status == Status::refuted && d->witness && std::abs(*d->witness) > 1.0 + 1e-8;
  return {b.verdict == "violated" && eig && sing && b.witness.has_value(),
          "verdict " + b.verdict + fmt(", eigenvalue |lambda| %.6f, singular D at |lambda| %.6f", inc->supremum,
                                       d->witness ? std::abs(*d->witness) : 0.0)};
}

Outcome threshold() {
  const Scenario s = builtin_scenario("S1-P1");
  const StabilityPipeline pipe(s.build_model(), s.profile, s.perturbation, s.stability_config());
  const ThresholdResult t = delta_threshold_search(pipe, s.config.threshold_low, s.config.threshold_high,
                                                   s.config.threshold_rel_width, s.config.threshold_rechecks);
  bool all = t.rechecks.size() == 5;
  for (const auto& [scale, v] : t.rechecks) all = all && v == Verdict::preserved;
  const double width = t.s_high - t.s_low, init = t.initial_high - t.initial_low;
  return {width <= 1e-3 * init * (1.0 + 1e-12) && all,
          fmt("bracket [%.6f, %.6f], width ratio %.3g, rechecks preserved %.0f/5", t.s_low, t.s_high, width / init,
              static_cast<double>(std::count_if(t.rechecks.begin(), t.rechecks.end(), [](const auto& r) {
                return r.second == Verdict::preserved;
              })))};
}

Outcome determinism() {
  bool same = true;
  std::size_t bytes = 0;
  for (auto [sub, name] : {std::pair{Subcommand::certify, "S1"}, std::pair{Subcommand::perturb, "S1-P1"},
                           std::pair{Subcommand::scan, "S2"}}) {
    const Scenario s = builtin_scenario(name);
    const std::string a = bundle_json(run(sub, s));
    const std::string b = bundle_json(run(sub, s));
    same = same && a == b;
    bytes += a.size();
  }
  const std::string again = bundle_json(run(Subcommand::stability, builtin_scenario("S1-P1")));
  same = same && !stability_json.empty() && again == stability_json;
  bytes += again.size();
  return {same, fmt("4 bundle pairs, %.0f bytes compared", static_cast<double>(bytes))};
}

}  // namespace

int main() {
  configure_threads_from_env();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"growth-order recovery", growth_order},
      {"Kreiss contraction bound", kreiss},
      {"smoothed region sup finite, plain sup divergent", smoothed_vs_plain},
      {"moment inequality", moment},
      {"SMW against dense oracle", smw},
      {"closed-form quadrature", quadrature},
      {"preservation end-to-end", preservation},
      {"violation detection", violation},
      {"threshold bisection", threshold},
      {"determinism", determinism},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
