#include "stabpert/resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "stabpert/linalg.hpp"

namespace stabpert {

namespace {

std::size_t unit_point_index(const OperatorModel& model, double phi) {
  const auto& pts = model.unit_points();
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (circular_distance(pts[j], phi) == 0.0) return j;
  throw Error(ErrorKind::InvalidArgument, "weight angle is not a declared unit point of the model");
}

struct Peak {
  double value = -1.0;
  std::size_t index = 0;
};

Peak peak_of(const std::vector<double>& v) {
  Peak p;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > p.value) {
      p.value = v[i];
      p.index = i;
    }
  if (v.empty()) p.value = 0.0;
  return p;
}

GridMeta meta_of(const ScanGrid& grid, std::size_t points) {
  return GridMeta{points, grid.floor, grid.refinement, grid.hash};
}

Status stable_status(double delta, double tol, double sup) {
  if (!std::isfinite(sup)) return Status::inconclusive;
  return delta <= tol ? Status::certified : Status::inconclusive;
}

}  // namespace

ResolventNorm::ResolventNorm(const OperatorModel& model, SpectralWeight weight, double spectrum_floor)
    : model_(&model), weight_(std::move(weight)), floor_(spectrum_floor) {
  if (model.is_diagonal()) {
    sup_ = std::make_unique<SpectralSup>(model, weight_, spectrum_floor);
    return;
  }
  if (weight_.trivial()) return;
  const auto n = static_cast<Eigen::Index>(model.dim());
  dense_weight_ = CMatrix::Identity(n, n);
  for (std::size_t l = 0; l < weight_.phis.size(); ++l) {
    if (weight_.exponents[l] == 0.0) continue;
    const FractionalFactor f{unit_point_index(model, weight_.phis[l]), weight_.exponents[l], false};
    dense_weight_ = fractional_matrix(model, f) * dense_weight_;
  }
}

SupResult ResolventNorm::detailed(Complex lambda) const {
  if (sup_) {
    SupResult r = sup_->evaluate(lambda);
    if (!r.converged)
      throw Error(ErrorKind::TailInconclusive, "tail search did not converge; increase n_max or the node budget");
    return r;
  }
  for (double phi : model_->unit_points())
    if (std::abs(lambda - unit(phi)) < floor_)
      throw Error(ErrorKind::SpectrumHit, "lambda coincides with a unit-circle spectral point");
  const auto n = static_cast<Eigen::Index>(model_->dim());
  const CMatrix shifted = lambda * CMatrix::Identity(n, n) - model_->matrix();
  SupResult out;
  if (weight_.trivial()) {
    if (model_->dim() < linalg::kSvdCutoff) {
      Eigen::BDCSVD<CMatrix> svd(shifted);
      const double smin = svd.singularValues()(n - 1);
      if (!(smin > floor_)) throw Error(ErrorKind::SpectrumHit, "lambda - A is numerically singular");
      out.value = 1.0 / smin;
    } else {
      Eigen::PartialPivLU<CMatrix> lu(shifted);
      if (!(lu.rcond() > floor_)) throw Error(ErrorKind::SpectrumHit, "lambda - A is numerically singular");
      const CMatrix adj = shifted.adjoint();
      Eigen::PartialPivLU<CMatrix> lu_adj(adj);
      out.value = linalg::power_iteration_norm([&](const CVector& x) -> CVector { return lu.solve(x); },
                                               [&](const CVector& y) -> CVector { return lu_adj.solve(y); },
                                               CVector::Ones(n));
    }
  } else {
    Eigen::PartialPivLU<CMatrix> lu(shifted);
    if (!(lu.rcond() > floor_)) throw Error(ErrorKind::SpectrumHit, "lambda - A is numerically singular");
    out.value = linalg::spectral_norm(lu.solve(dense_weight_));
  }
  out.upper = out.value;
  return out;
}

double ResolventNorm::operator()(Complex lambda) const { return detailed(lambda).value; }

double ResolventNorm::weight_norm() const {
  if (sup_) return sup_->weight_sup().value;
  if (weight_.trivial()) return 1.0;
  return linalg::spectral_norm(dense_weight_);
}

double resolvent_norm(const OperatorModel& model, Complex lambda, double spectrum_floor) {
  return ResolventNorm(model, SpectralWeight::none(), spectrum_floor)(lambda);
}

std::vector<CircleRow> circle_scan(const OperatorModel& model, const SpectralProfile& profile, const ScanGrid& grid,
                                   Exec exec, double spectrum_floor) {
  const ResolventNorm norm(model, SpectralWeight::none(), spectrum_floor);
  return map_indexed<CircleRow>(
      grid.circle.size(),
      [&](std::size_t i) {
        const CirclePoint& pt = grid.circle[i];
        CircleRow row;
        row.phi = pt.phi;
        row.nearest_k = pt.nearest_k;
        row.dist = pt.dist;
        row.resnorm = norm(circle_lambda(profile, pt));
        row.weighted = pt.near ? std::pow(pt.dist, profile.alpha) * row.resnorm : row.resnorm;
        return row;
      },
      exec);
}

GrowthResult certify_growth(const OperatorModel& model, const SpectralProfile& profile, const ScanConfig& cfg) {
  struct Level {
    ScanGrid grid;
    std::vector<CircleRow> rows;
    double near_sup = 0.0, away_sup = 0.0;
    std::size_t arg = 0;
    double sup = 0.0;
  };
  auto run_level = [&](const GridResolution& res) {
    Level lv;
    lv.grid = build_grids(profile, res);
    lv.rows = circle_scan(model, profile, lv.grid, cfg.exec, cfg.spectrum_floor);
    double best = -1.0;
    for (std::size_t i = 0; i < lv.rows.size(); ++i) {
      const CircleRow& r = lv.rows[i];
      double& side = lv.grid.circle[i].near ? lv.near_sup : lv.away_sup;
      side = std::max(side, r.weighted);
      if (r.weighted > best) {
        best = r.weighted;
        lv.arg = i;
      }
    }
    lv.sup = std::max(lv.near_sup, lv.away_sup);
    return lv;
  };
  Level coarse = run_level(cfg.resolution);
  Level fine = run_level(cfg.resolution.refined());

  GrowthResult out;
  CertificateReport& rep = out.report;
  rep.name = "growth";
  rep.supremum = coarse.sup;
  rep.argmax = circle_lambda(profile, coarse.grid.circle[coarse.arg]);
  rep.bound = profile.M_A;
  rep.grid = meta_of(coarse.grid, coarse.rows.size());
  rep.refinement_delta = relative_change(coarse.sup, fine.sup);
  rep.values["near_sup"] = coarse.near_sup;
  rep.values["away_sup"] = coarse.away_sup;
  rep.values["refined_sup"] = fine.sup;
  rep.values["alpha"] = profile.alpha;
  const Level* bad = coarse.sup > profile.M_A ? &coarse : (fine.sup > profile.M_A ? &fine : nullptr);
  if (bad != nullptr) {
    rep.status = Status::refuted;
    rep.witness = circle_lambda(profile, bad->grid.circle[bad->arg]);
    rep.values["witness_value"] = bad->sup;
    rep.note = "declared M_A exceeded";
  } else {
    rep.status = stable_status(rep.refinement_delta, cfg.stability_tol, rep.supremum);
  }
  out.rows = std::move(coarse.rows);
  return out;
}

AlphaEstimate estimate_alpha(const OperatorModel& model, double phi_k, std::pair<double, double> window,
                             double pts_per_decade) {
  const auto [lo, hi] = window;
  if (!(lo > 0.0) || !(hi > lo) || hi / lo < 10.0 * (1.0 - 1e-12))
    throw Error(ErrorKind::WindowTooNarrow, "alpha window must span at least one decade");
  const std::vector<double> psis = log_space(lo, hi, log_count(lo, hi, pts_per_decade, 0));
  const ResolventNorm norm(model);
  auto slope = [&](double sign) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double psi : psis) {
      const double x = -std::log(psi);
      const double y = std::log(norm(unit(phi_k) * unit(sign * psi)));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = static_cast<double>(psis.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  return AlphaEstimate{slope(-1.0), slope(1.0)};
}

CertificateReport kreiss_check(const OperatorModel& model, const SpectralProfile& profile, double power_bound_M,
                               const ScanConfig& cfg) {
  const ResolventNorm norm(model, SpectralWeight::none(), cfg.spectrum_floor);
  struct Level {
    ScanGrid grid;
    std::vector<Complex> pts;
    std::vector<double> vals;
    Peak peak;
  };
  auto run_level = [&](const GridResolution& res) {
    Level lv;
    lv.grid = build_grids(profile, res);
    std::vector<Complex> dirs;
    for (const CirclePoint& pt : lv.grid.circle) dirs.push_back(circle_lambda(profile, pt));
    for (double phi : profile.phis) dirs.push_back(unit(phi));
    for (double r : lv.grid.radial_r)
      for (const Complex& d : dirs) lv.pts.push_back(r * d);
    lv.vals = map_indexed<double>(
        lv.pts.size(), [&](std::size_t i) { return (std::abs(lv.pts[i]) - 1.0) * norm(lv.pts[i]); }, cfg.exec);
    lv.peak = peak_of(lv.vals);
    return lv;
  };
  const Level coarse = run_level(cfg.resolution);
  const Level fine = run_level(cfg.resolution.refined());

  CertificateReport rep;
  rep.name = "kreiss";
  rep.supremum = coarse.peak.value;
  rep.argmax = coarse.pts[coarse.peak.index];
  const double bound = power_bound_M + 1e-9;
  rep.bound = bound;
  rep.grid = meta_of(coarse.grid, coarse.pts.size());
  rep.refinement_delta = relative_change(coarse.peak.value, fine.peak.value);
  rep.values["M"] = power_bound_M;
  rep.values["refined_sup"] = fine.peak.value;
  if (coarse.peak.value > bound || fine.peak.value > bound) {
    const Level& bad = coarse.peak.value > bound ? coarse : fine;
    rep.status = Status::refuted;
    rep.witness = bad.pts[bad.peak.index];
    rep.note = "strong Kreiss bound exceeded";
  } else {
    rep.status = stable_status(rep.refinement_delta, cfg.stability_tol, rep.supremum);
  }
  return rep;
}

RegionAnalysis analyze_region(const OperatorModel& model, const SpectralProfile& profile, std::size_t k,
                              double power_bound_M, const ScanConfig& cfg) {
  if (k >= profile.size()) throw Error(ErrorKind::InvalidArgument, "region index out of range");
  const double phi = profile.phis[k];
  const Complex center = unit(phi);
  const double alpha = profile.alpha;
  const ResolventNorm plain(model, SpectralWeight::none(), cfg.spectrum_floor);
  const ResolventNorm smooth(model, SpectralWeight::single(phi, alpha), cfg.spectrum_floor);

  struct Level {
    ScanGrid grid;
    std::vector<RegionRow> rows;
    std::vector<double> weighted, smoothed, raw;
    Peak w_peak, s_peak, raw_peak;
  };
  auto run_level = [&](const GridResolution& res) {
    Level lv;
    lv.grid = build_grids(profile, res);
    const auto& pts = lv.grid.region_points[k];
    lv.rows = map_indexed<RegionRow>(
        pts.size(),
        [&](std::size_t i) {
          return RegionRow{pts[i], plain(pts[i]), smooth(pts[i])};
        },
        cfg.exec);
    for (const RegionRow& r : lv.rows) {
      lv.weighted.push_back(std::pow(std::abs(r.lambda - center), alpha) * r.resnorm);
      lv.smoothed.push_back(r.smoothed);
      lv.raw.push_back(r.resnorm);
    }
    lv.w_peak = peak_of(lv.weighted);
    lv.s_peak = peak_of(lv.smoothed);
    lv.raw_peak = peak_of(lv.raw);
    return lv;
  };
  Level coarse = run_level(cfg.resolution);
  const Level fine = run_level(cfg.resolution.refined());

  RegionAnalysis out;
  const double M = power_bound_M;
  {
    CertificateReport& rep = out.plain;
    rep.name = "region_plain_" + std::to_string(k);
    rep.supremum = coarse.w_peak.value;
    rep.argmax = coarse.rows[coarse.w_peak.index].lambda;
    rep.grid = meta_of(coarse.grid, coarse.rows.size());
    rep.refinement_delta = relative_change(coarse.w_peak.value, fine.w_peak.value);
    const double chain = std::pow(2.0, alpha) * (M + profile.M_A * (1.0 + M));
    rep.bound = chain;
    rep.values["chain_bound"] = chain;
    rep.values["refined_sup"] = fine.w_peak.value;
    double ray = 0.0;
    for (double r : coarse.grid.radial_r) {
      if (r - 1.0 > profile.r_A()) continue;
      const double n = plain(r * center);
      ray = std::max(ray, (r - 1.0) * n);
      rep.values["ray_max"] = ray;
    }
    rep.values["M"] = M;
    if (std::max(coarse.w_peak.value, fine.w_peak.value) > chain * (1.0 + 1e-9)) {
      rep.status = Status::refuted;
      rep.witness = rep.argmax;
      rep.note = "region supremum exceeds the chain bound 2^alpha(M + M_A(1+M))";
    } else {
      rep.status = stable_status(rep.refinement_delta, cfg.stability_tol, rep.supremum);
    }
  }
  {
    CertificateReport& rep = out.smoothed;
    rep.name = "region_smoothed_" + std::to_string(k);
    rep.supremum = coarse.s_peak.value;
    rep.argmax = coarse.rows[coarse.s_peak.index].lambda;
    rep.grid = meta_of(coarse.grid, coarse.rows.size());
    rep.refinement_delta = relative_change(coarse.s_peak.value, fine.s_peak.value);
    const double lambda_norm = smooth.weight_norm();
    std::size_t violations = 0;
    for (const RegionRow& r : coarse.rows)
      if (r.smoothed > r.resnorm * lambda_norm * (1.0 + 1e-12) + 1e-300) ++violations;
    rep.values["plain_sup"] = coarse.raw_peak.value;
    rep.values["lambda_alpha_norm"] = lambda_norm;
    rep.values["product_violations"] = static_cast<double>(violations);
    rep.values["refined_sup"] = fine.s_peak.value;
    rep.status = violations > 0 ? Status::refuted
                                : stable_status(rep.refinement_delta, cfg.stability_tol, rep.supremum);
    if (violations > 0) rep.note = "smoothed norm exceeds ||R|| ||Lambda^alpha|| at some grid point";
  }
  out.rows = std::move(coarse.rows);
  return out;
}

CertificateReport region_sup_plain(const OperatorModel& model, const SpectralProfile& profile, std::size_t k,
                                   double power_bound_M, const ScanConfig& cfg) {
  return analyze_region(model, profile, k, power_bound_M, cfg).plain;
}

CertificateReport region_sup_smoothed(const OperatorModel& model, const SpectralProfile& profile, std::size_t k,
                                      const ScanConfig& cfg) {
  return analyze_region(model, profile, k, 1.0, cfg).smoothed;
}

CertificateReport complement_sup(const OperatorModel& model, const SpectralProfile& profile, double power_bound_M,
                                 double M_0, const ScanConfig& cfg) {
  const ResolventNorm norm(model, SpectralWeight::none(), cfg.spectrum_floor);
  auto run_level = [&](const GridResolution& res, ScanGrid& grid) {
    grid = build_grids(profile, res);
    return map_indexed<double>(grid.complement.size(), [&](std::size_t i) { return norm(grid.complement[i]); },
                               cfg.exec);
  };
  ScanGrid g0, g1;
  const std::vector<double> v0 = run_level(cfg.resolution, g0);
  const std::vector<double> v1 = run_level(cfg.resolution.refined(), g1);
  const Peak p0 = peak_of(v0), p1 = peak_of(v1);

  const double M = power_bound_M;
  const double far_field = M / 2.0;
  const double chain = std::max(profile.M_A, M_0 / std::pow(profile.r_A(), profile.alpha)) * (1.0 + M);
  CertificateReport rep;
  rep.name = "complement";
  rep.supremum = std::max(p0.value, far_field);
  rep.argmax = g0.complement[p0.index];
  rep.bound = chain;
  rep.grid = meta_of(g0, v0.size());
  rep.refinement_delta = relative_change(std::max(p0.value, far_field), std::max(p1.value, far_field));
  rep.values["grid_sup"] = p0.value;
  rep.values["far_field"] = far_field;
  rep.values["chain_bound"] = chain;
  rep.values["refined_sup"] = p1.value;
  if (std::max(p0.value, p1.value) > chain * (1.0 + 1e-9)) {
    rep.status = Status::refuted;
    rep.witness = p0.value > chain ? g0.complement[p0.index] : g1.complement[p1.index];
    rep.note = "complement supremum exceeds max{M_A, M_0/r_A^alpha}(1+M)";
  } else {
    rep.status = stable_status(rep.refinement_delta, cfg.stability_tol, rep.supremum);
  }
  return rep;
}

CertificateReport global_smoothed_sup(const OperatorModel& model, const SpectralProfile& profile,
                                      const ScanConfig& cfg) {
  SpectralWeight w;
  for (double phi : profile.phis) {
    w.phis.push_back(phi);
    w.exponents.push_back(profile.alpha);
  }
  const ResolventNorm norm(model, w, cfg.spectrum_floor);
  auto run_level = [&](const GridResolution& res, ScanGrid& grid, std::vector<Complex>& pts) {
    grid = build_grids(profile, res);
    for (const auto& reg : grid.region_points) pts.insert(pts.end(), reg.begin(), reg.end());
    pts.insert(pts.end(), grid.complement.begin(), grid.complement.end());
    return map_indexed<double>(pts.size(), [&](std::size_t i) { return norm(pts[i]); }, cfg.exec);
  };
  ScanGrid g0, g1;
  std::vector<Complex> pts0, pts1;
  const std::vector<double> v0 = run_level(cfg.resolution, g0, pts0);
  const std::vector<double> v1 = run_level(cfg.resolution.refined(), g1, pts1);
  const Peak p0 = peak_of(v0), p1 = peak_of(v1);

  CertificateReport rep;
  rep.name = "global_smoothed";
  rep.supremum = p0.value;
  rep.argmax = pts0[p0.index];
  rep.grid = meta_of(g0, v0.size());
  rep.refinement_delta = relative_change(p0.value, p1.value);
  rep.values["product_norm"] = norm.weight_norm();
  rep.values["refined_sup"] = p1.value;
  rep.status = stable_status(rep.refinement_delta, cfg.stability_tol, rep.supremum);
  return rep;
}

namespace {

struct MomentWeights {
  std::vector<double> small, large;  // |Lambda|^{t~}, |Lambda|^{t} for diagonal models
  CMatrix small_m, large_m;          // dense factors
};

MomentWeights moment_weights(const OperatorModel& model, std::size_t k, double theta_tilde, double theta) {
  if (!(theta_tilde > 0.0) || !(theta > theta_tilde))
    throw Error(ErrorKind::InvalidArgument, "moment inequality needs 0 < theta~ < theta");
  if (k >= model.unit_points().size()) throw Error(ErrorKind::InvalidArgument, "unit point index out of range");
  MomentWeights w;
  if (model.is_diagonal()) {
    const double phi = model.unit_points()[k];
    for (std::size_t n = 1; n <= model.dim(); ++n) {
      const double g = std::abs(model.gap(n, phi));
      w.small.push_back(std::pow(g, theta_tilde));
      w.large.push_back(std::pow(g, theta));
    }
  } else {
    w.small_m = fractional_matrix(model, FractionalFactor{k, theta_tilde, false});
    w.large_m = fractional_matrix(model, FractionalFactor{k, theta, false});
  }
  return w;
}

double ratio_with(const OperatorModel& model, const MomentWeights& w, double theta_tilde, double theta,
                  const CVector& x) {
  double nx = x.norm(), ns = 0.0, nl = 0.0;
  if (model.is_diagonal()) {
    double ss = 0.0, sl = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double a = std::norm(x(i));
      ss += w.small[i] * w.small[i] * a;
      sl += w.large[i] * w.large[i] * a;
    }
    ns = std::sqrt(ss);
    nl = std::sqrt(sl);
  } else {
    ns = (w.small_m * x).norm();
    nl = (w.large_m * x).norm();
  }
  if (ns == 0.0) return 0.0;
  const double q = theta_tilde / theta;
  return ns / (std::pow(nx, 1.0 - q) * std::pow(nl, q));
}

}  // namespace

double moment_ratio(const OperatorModel& model, std::size_t k, double theta_tilde, double theta, const CVector& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "probe vector does not match the model dimension");
  return ratio_with(model, moment_weights(model, k, theta_tilde, theta), theta_tilde, theta, x);
}

double moment_inequality_probe(const OperatorModel& model, std::size_t k, double theta_tilde, double theta,
                               std::size_t samples, std::uint64_t seed) {
  const MomentWeights w = moment_weights(model, k, theta_tilde, theta);
  const auto n = static_cast<Eigen::Index>(model.dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  double best = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    CVector x = CVector::Zero(n);
    if (s % 2 == 0) {
      for (Eigen::Index i = 0; i < n; ++i) x(i) = Complex(gauss(rng), gauss(rng));
    } else {
      for (int j = 0; j < 2; ++j) x(pick(rng)) += Complex(gauss(rng), gauss(rng));
    }
    best = std::max(best, ratio_with(model, w, theta_tilde, theta, x));
  }
  return best;
}

}  // namespace stabpert
