#include "stabpert/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/LU>

#include "stabpert/linalg.hpp"
#include "stabpert/oracle.hpp"

namespace stabpert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::uint64_t> decay_samples(std::uint64_t n_max) {
  std::set<std::uint64_t> s;
  for (std::uint64_t n = 0; n <= std::min<std::uint64_t>(10, n_max); ++n) s.insert(n);
  for (int i = 1;; ++i) {
    const double v = std::round(10.0 * std::pow(10.0, i / 10.0));
    if (v > static_cast<double>(n_max)) break;
    s.insert(static_cast<std::uint64_t>(v));
  }
  s.insert(n_max);
  return {s.begin(), s.end()};
}

double block_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.cols() == 1) return m.col(0).norm();
  return linalg::column_block_norm(m);
}

CMatrix shifted_matrix(const OperatorModel& model, Complex lambda) {
  const auto n = static_cast<Eigen::Index>(model.dim());
  return lambda * CMatrix::Identity(n, n) - model.matrix();
}

/// 1/(lambda - a_n) for the first `count` diagonal entries.
CVector diagonal_resolvent(const OperatorModel& model, Complex lambda, Eigen::Index count) {
  const CVector& a = model.head();
  CVector r(count);
  for (Eigen::Index i = 0; i < count; ++i) r(i) = reciprocal(lambda - a(i));
  return r;
}

CMatrix pad_rows(const CMatrix& m, std::size_t rows) {
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(rows), m.cols());
  out.topRows(m.rows()) = m;
  return out;
}

void check_probes(const ProbeSet& probes, std::size_t dim) {
  if (probes.support() > dim) throw Error(ErrorKind::DimensionMismatch, "probe support exceeds the truncation");
  if (probes.y.rows() != probes.x.rows() || probes.y.cols() != probes.x.cols())
    throw Error(ErrorKind::DimensionMismatch, "probe x and y blocks differ in shape");
}

QuadratureResult finish(QuadratureResult res, const QuadratureConfig& cfg) {
  if (cfg.throw_on_unstable) require_stable(res, cfg);
  return res;
}

std::string error_text(const std::string& stage, const std::exception& e) {
  return stage + ": " + e.what();
}

}  // namespace

// -- orbits ------------------------------------------------------------------

DecayTable orbit_decay(const StepMap& step, const CVector& x, std::uint64_t n_max, double threshold) {
  DecayTable t;
  t.n_max = n_max;
  t.threshold = threshold;
  t.initial_norm = x.norm();
  const std::vector<std::uint64_t> samples = decay_samples(n_max);
  const double target = threshold * t.initial_norm;
  CVector y = x;
  std::size_t next = 0;
  for (std::uint64_t n = 0;; ++n) {
    const double norm = y.norm();
    if (!t.first_passage && norm <= target) t.first_passage = n;
    if (next < samples.size() && samples[next] == n) {
      t.n.push_back(n);
      t.norm.push_back(norm);
      ++next;
    }
    if (n == n_max) break;
    if (norm == 0.0) {
      for (; next < samples.size(); ++next) {
        t.n.push_back(samples[next]);
        t.norm.push_back(0.0);
      }
      break;
    }
    step(y);
  }
  return t;
}

DecayTable orbit_decay(const OperatorModel& model, const CVector& x, std::uint64_t n_max, double threshold) {
  if (static_cast<std::size_t>(x.size()) != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "orbit vector does not match the truncation");
  if (model.is_diagonal()) {
    const CVector a = model.head();
    return orbit_decay([&](CVector& y) { y = a.cwiseProduct(y); }, x, n_max, threshold);
  }
  return orbit_decay([&](CVector& y) { y = model.matrix() * y; }, x, n_max, threshold);
}

DecayTable orbit_decay(const PerturbedSystem& sys, const CVector& x, std::uint64_t n_max, double threshold) {
  const OperatorModel& model = sys.model();
  if (static_cast<std::size_t>(x.size()) != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "orbit vector does not match the truncation");
  const CMatrix c = sys.Cstar().adjoint();
  if (model.is_diagonal()) {
    const CVector a = model.head();
    return orbit_decay(
        [&](CVector& y) {
          const CVector cy = c * y;
          y = a.cwiseProduct(y);
          if (cy.size() > 0) y.noalias() += sys.B() * cy;
        },
        x, n_max, threshold);
  }
  return orbit_decay(
      [&](CVector& y) {
        const CVector cy = c * y;
        y = model.matrix() * y;
        if (cy.size() > 0) y.noalias() += sys.B() * cy;
      },
      x, n_max, threshold);
}

// -- integral criterion -------------------------------------------------------

ProbeSet make_probes(std::size_t basis, std::size_t random, std::size_t support, std::uint64_t seed) {
  if (support == 0) throw Error(ErrorKind::InvalidArgument, "probe support must be positive");
  const std::size_t nb = std::min(basis, support);
  ProbeSet set;
  const auto m = static_cast<Eigen::Index>(support);
  const auto count = static_cast<Eigen::Index>(nb + random);
  set.x = CMatrix::Zero(m, count);
  set.y = CMatrix::Zero(m, count);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(nb); ++j) set.x(j, j) = set.y(j, j) = 1.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  for (Eigen::Index j = static_cast<Eigen::Index>(nb); j < count; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) set.x(i, j) = Complex(gauss(rng), gauss(rng));
    for (Eigen::Index i = 0; i < m; ++i) set.y(i, j) = Complex(gauss(rng), gauss(rng));
    set.x.col(j).normalize();
    set.y.col(j).normalize();
  }
  return set;
}

QuadratureResult integral_criterion(const OperatorModel& model, const ProbeSet& probes,
                                    const SpectralProfile& profile, const QuadratureConfig& cfg) {
  check_probes(probes, model.dim());
  const std::size_t P = probes.size();
  const auto m = static_cast<Eigen::Index>(probes.support());
  CircleIntegrand f;
  if (model.is_diagonal()) {
    const Eigen::MatrixXd w = probes.x.cwiseAbs2() + probes.y.cwiseAbs2();
    f = [&model, w, m, P](Complex lambda, double* out) {
      const Eigen::VectorXd r2 = diagonal_resolvent(model, lambda, m).cwiseAbs2();
      for (std::size_t j = 0; j < P; ++j) out[j] = r2.dot(w.col(static_cast<Eigen::Index>(j)));
    };
  } else {
    const CMatrix x = pad_rows(probes.x, model.dim()), y = pad_rows(probes.y, model.dim());
    f = [&model, x, y, P](Complex lambda, double* out) {
      const CMatrix s = shifted_matrix(model, lambda);
      Eigen::PartialPivLU<CMatrix> lu(s);
      const CMatrix rx = lu.solve(x);
      const CMatrix ry = s.adjoint().partialPivLu().solve(y);
      for (std::size_t j = 0; j < P; ++j)
        out[j] = rx.col(static_cast<Eigen::Index>(j)).squaredNorm() + ry.col(static_cast<Eigen::Index>(j)).squaredNorm();
    };
  }
  QuadratureResult res = radial_quadrature("integral_criterion", profile, P, P, f, cfg);
  return finish(std::move(res), cfg);
}

QuadratureResult integral_criterion(const PerturbedSystem& sys, const ProbeSet& probes,
                                    const SpectralProfile& profile, const QuadratureConfig& cfg) {
  const OperatorModel& model = sys.model();
  check_probes(probes, model.dim());
  const std::size_t P = probes.size();
  const auto m = static_cast<Eigen::Index>(probes.support());
  const auto p = static_cast<Eigen::Index>(sys.rank());
  CircleIntegrand f;
  if (model.is_diagonal()) {
    f = [&sys, &probes, &model, m, p, P](Complex lambda, double* out) {
      const CVector& a = model.head();
      const CMatrix& B = sys.B();
      const CMatrix& Cs = sys.Cstar();
      const auto n = static_cast<Eigen::Index>(model.dim());
      CVector r(n);
      for (Eigen::Index i = 0; i < n; ++i) r(i) = reciprocal(lambda - a(i));
      const CMatrix rx = r.head(m).asDiagonal() * probes.x;
      const CMatrix w0 = r.head(m).conjugate().asDiagonal() * probes.y;
      for (std::size_t j = 0; j < P; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        out[j] = rx.col(jj).squaredNorm() + w0.col(jj).squaredNorm();
      }
      if (p == 0) return;
      CMatrix gram_b = CMatrix::Zero(p, p), gram_c = CMatrix::Zero(p, p);
      CMatrix d = CMatrix::Identity(p, p);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Complex ri = r(i);
        const double wi = std::norm(ri);
        for (Eigen::Index v = 0; v < p; ++v) {
          const Complex bv = B(i, v), cv = Cs(i, v);
          const Complex rbv = ri * bv;
          for (Eigen::Index u = 0; u < p; ++u) {
            gram_b(u, v) += wi * std::conj(B(i, u)) * bv;
            gram_c(u, v) += wi * std::conj(Cs(i, u)) * cv;
            d(u, v) -= std::conj(Cs(i, u)) * rbv;
          }
        }
      }
      Eigen::PartialPivLU<CMatrix> lu(d);
      if (!(lu.rcond() > 1e-12)) throw Error(ErrorKind::SingularD, "I - C R(lambda, A) B is singular");
      // cx = C rx, by = B^* w0, tx = (R B)^* rx, ty = (R^* C^*)^* w0 on the probe support
      CMatrix cx = CMatrix::Zero(p, P), by = CMatrix::Zero(p, P), tx = CMatrix::Zero(p, P), ty = CMatrix::Zero(p, P);
      for (std::size_t j = 0; j < P; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        for (Eigen::Index i = 0; i < m; ++i) {
          const Complex xi = rx(i, jj), yi = w0(i, jj);
          const Complex cr = std::conj(r(i));
          for (Eigen::Index u = 0; u < p; ++u) {
            const Complex cb = std::conj(B(i, u)), cc = std::conj(Cs(i, u));
            cx(u, jj) += cc * xi;
            by(u, jj) += cb * yi;
            tx(u, jj) += cr * cb * xi;
            ty(u, jj) += r(i) * cc * yi;
          }
        }
      }
      const CMatrix z = lu.solve(cx);
      const CMatrix v = d.adjoint().partialPivLu().solve(by);
      for (std::size_t j = 0; j < P; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        Complex cross = 0.0, quad = 0.0;
        for (Eigen::Index u = 0; u < p; ++u) {
          cross += std::conj(tx(u, jj)) * z(u, jj) + std::conj(ty(u, jj)) * v(u, jj);
          for (Eigen::Index w = 0; w < p; ++w)
            quad += std::conj(z(u, jj)) * gram_b(u, w) * z(w, jj) + std::conj(v(u, jj)) * gram_c(u, w) * v(w, jj);
        }
        out[j] += 2.0 * cross.real() + quad.real();
      }
    };
  } else {
    const CMatrix x = pad_rows(probes.x, model.dim()), y = pad_rows(probes.y, model.dim());
    f = [&sys, x, y, P](Complex lambda, double* out) {
      for (std::size_t j = 0; j < P; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        out[j] = sys.resolvent_apply(lambda, x.col(jj)).squaredNorm() +
                 sys.resolvent_adjoint_apply(lambda, y.col(jj)).squaredNorm();
      }
    };
  }
  QuadratureResult res = radial_quadrature("integral_criterion_perturbed", profile, P, P, f, cfg);
  return finish(std::move(res), cfg);
}

QuadratureResult finite_rank_integral(const OperatorModel& model, const CMatrix& columns, bool adjoint,
                                      const SpectralProfile& profile, const QuadratureConfig& cfg) {
  if (columns.cols() == 0) throw Error(ErrorKind::InvalidArgument, "finite_rank_integral needs at least one column");
  if (static_cast<std::size_t>(columns.rows()) != model.dim())
    throw Error(ErrorKind::DimensionMismatch, "columns do not match the truncation");
  CircleIntegrand f;
  if (model.is_diagonal()) {
    const Eigen::VectorXd w = columns.cwiseAbs2().rowwise().sum();
    Eigen::Index last = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w(i) > 0.0) last = i + 1;
    f = [&model, w, last](Complex lambda, double* out) {
      out[0] = diagonal_resolvent(model, lambda, last).cwiseAbs2().dot(w.head(last));
    };
  } else {
    f = [&model, columns, adjoint](Complex lambda, double* out) {
      const CMatrix s = shifted_matrix(model, lambda);
      out[0] = adjoint ? s.adjoint().partialPivLu().solve(columns).squaredNorm()
                       : s.partialPivLu().solve(columns).squaredNorm();
    };
  }
  QuadratureResult res =
      radial_quadrature(adjoint ? "finite_rank_integral_adjoint" : "finite_rank_integral", profile, 1, 1, f, cfg);
  res.probes = static_cast<std::size_t>(columns.cols());
  return finish(std::move(res), cfg);
}

// -- f_k majorant ---------------------------------------------------------------

FkMajorant::FkMajorant(const PerturbedSystem& sys, const FiniteRankPerturbation& pert,
                       const SpectralProfile& profile, std::size_t k, double M_1)
    : sys_(&sys), k_(k), alpha_(profile.alpha), M_1_(M_1) {
  if (k >= profile.size()) throw Error(ErrorKind::InvalidArgument, "f_k: point index out of range");
  split_ = proportional_split(pert.beta, pert.gamma, profile.alpha);
  const OperatorModel& model = sys.model();
  if (model.is_diagonal()) {
    const double phi = profile.phis[k];
    b_tilde_ = sys.B();
    c_tilde_ = sys.Cstar();
    for (Eigen::Index i = 0; i < b_tilde_.rows(); ++i) {
      const Complex g = model.gap(static_cast<std::uint64_t>(i + 1), phi);
      if (split_.beta1 != 0.0) b_tilde_.row(i) *= std::pow(g, -split_.beta1);
      if (split_.gamma1 != 0.0) c_tilde_.row(i) *= std::conj(std::pow(g, -split_.gamma1));
    }
  } else {
    b_tilde_ = fractional_matrix(model, FractionalFactor{k, -split_.beta1, false}) * sys.B();
    c_tilde_ = fractional_matrix(model, FractionalFactor{k, -split_.gamma1, true}) * sys.Cstar();
    auto probe = [&](double t) {
      if (t <= 0.0 || t >= alpha_) return 1.0;
      return std::max(1.0, moment_inequality_probe(model, k, t, alpha_, 200, 7));
    };
    moment_b_ = probe(split_.beta1);
    moment_c_ = probe(split_.gamma1);
  }
  b_tilde_norm_ = smoothed_block_norm(model, pert, k, split_.beta1, false);
  c_tilde_norm_ = smoothed_block_norm(model, pert, k, split_.gamma1, true);
  K_ = moment_b_ * moment_c_ * M_1_ * std::pow(b_tilde_norm_, split_.beta1 / alpha_) *
       std::pow(c_tilde_norm_, split_.gamma1 / alpha_);
}

FkMajorant::Terms FkMajorant::terms(Complex lambda) const {
  Terms t;
  const OperatorModel& model = sys_->model();
  if (sys_->rank() == 0) return t;
  if (model.is_diagonal()) {
    const CVector r = diagonal_resolvent(model, lambda, static_cast<Eigen::Index>(model.dim()));
    t.rb = block_norm(r.asDiagonal() * sys_->B());
    t.cr = block_norm(r.conjugate().asDiagonal() * sys_->Cstar());
    t.rb_tilde = block_norm(r.asDiagonal() * b_tilde_);
    t.rc_tilde = block_norm(r.conjugate().asDiagonal() * c_tilde_);
  } else {
    const CMatrix s = shifted_matrix(model, lambda);
    Eigen::PartialPivLU<CMatrix> lu(s), lu_adj(s.adjoint());
    t.rb = block_norm(lu.solve(sys_->B()));
    t.cr = block_norm(lu_adj.solve(sys_->Cstar()));
    t.rb_tilde = block_norm(lu.solve(b_tilde_));
    t.rc_tilde = block_norm(lu_adj.solve(c_tilde_));
  }
  t.fk = K_ * std::pow(t.rb_tilde, exponent_b()) * std::pow(t.rc_tilde, exponent_c());
  return t;
}

double fk_evaluate(const FkMajorant& fk, Complex lambda) { return fk(lambda); }

FkCertificate fk_properties_certify(const FkMajorant& fk, const SpectralProfile& profile, const ScanConfig& scan,
                                    const QuadratureConfig& quad) {
  const std::size_t k = fk.k();
  const double alpha = profile.alpha;
  FkCertificate out;
  CertificateReport& rep = out.report;
  rep.name = "fk_" + std::to_string(k);

  struct Level {
    ScanGrid grid;
    std::vector<std::size_t> idx;
    std::vector<double> w;
  };
  auto run_level = [&](const GridResolution& res) {
    Level lv;
    lv.grid = build_grids(profile, res);
    for (std::size_t i = 0; i < lv.grid.circle.size(); ++i)
      if (lv.grid.circle[i].near && lv.grid.circle[i].nearest_k == k) lv.idx.push_back(i);
    lv.w = map_indexed<double>(
        lv.idx.size(),
        [&](std::size_t i) {
          const CirclePoint& pt = lv.grid.circle[lv.idx[i]];
          return std::pow(pt.dist, alpha) * fk(circle_lambda(profile, pt));
        },
        scan.exec);
    return lv;
  };
  const Level coarse = run_level(scan.resolution);
  const Level fine = run_level(scan.resolution.refined());
  std::size_t arg = 0;
  double sup0 = 0.0, sup1 = 0.0;
  for (std::size_t i = 0; i < coarse.w.size(); ++i)
    if (coarse.w[i] > sup0) {
      sup0 = coarse.w[i];
      arg = i;
    }
  for (double v : fine.w) sup1 = std::max(sup1, v);
  rep.supremum = sup0;
  rep.argmax = coarse.idx.empty() ? Complex() : circle_lambda(profile, coarse.grid.circle[coarse.idx[arg]]);
  rep.grid = GridMeta{coarse.idx.size(), coarse.grid.floor, coarse.grid.refinement, coarse.grid.hash};
  rep.refinement_delta = relative_change(sup0, sup1);
  const double bound = profile.M_A * fk.K() * std::pow(fk.b_tilde_norm(), fk.exponent_b()) *
                       std::pow(fk.c_tilde_norm(), fk.exponent_c());
  rep.bound = bound;

  const std::vector<Complex>& region = coarse.grid.region_points.at(k);
  const std::vector<double> ratios = map_indexed<double>(
      region.size(),
      [&](std::size_t i) {
        const FkMajorant::Terms t = fk.terms(region[i]);
        const double lhs = t.rb * t.cr;
        if (lhs == 0.0) return 0.0;
        return t.fk > 0.0 ? lhs / t.fk : kInf;
      },
      scan.exec);
  double dom = 0.0;
  std::size_t dom_arg = 0, dom_bad = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i] > dom) {
      dom = ratios[i];
      dom_arg = i;
    }
    if (ratios[i] > 1.0 + 1e-9) ++dom_bad;
  }

  const double eb = fk.exponent_b(), ec = fk.exponent_c(), K = fk.K();
  const PerturbedSystem& sys = fk.system();
  const OperatorModel& model = sys.model();
  CircleIntegrand f = [&fk, &model, &sys](Complex lambda, double* o) {
    const FkMajorant::Terms t = fk.terms(lambda);
    o[0] = t.fk * t.fk;
    if (model.is_diagonal()) {
      const Eigen::VectorXd r2 = diagonal_resolvent(model, lambda, static_cast<Eigen::Index>(model.dim())).cwiseAbs2();
      o[1] = r2.dot(fk.B_tilde().cwiseAbs2().rowwise().sum());
      o[2] = r2.dot(fk.C_tilde().cwiseAbs2().rowwise().sum());
    } else {
      const CMatrix s = shifted_matrix(model, lambda);
      o[1] = s.partialPivLu().solve(fk.B_tilde()).squaredNorm();
      o[2] = s.adjoint().partialPivLu().solve(fk.C_tilde()).squaredNorm();
    }
    (void)sys;
  };
  QuadratureConfig qc = quad;
  qc.throw_on_unstable = false;
  out.quadrature = radial_quadrature("fk_quadrature_" + std::to_string(k), profile, 3, 1, f, qc);
  double holder = 0.0;
  for (const auto& c : out.quadrature.components) {
    const double rhs = K * K * std::pow(c[1], eb) * std::pow(c[2], ec);
    if (c[0] > 0.0) holder = std::max(holder, rhs > 0.0 ? c[0] / rhs : kInf);
  }

  rep.values["K"] = K;
  rep.values["refined_sup"] = sup1;
  rep.values["beta1"] = fk.split().beta1;
  rep.values["gamma1"] = fk.split().gamma1;
  rep.values["b_tilde_norm"] = fk.b_tilde_norm();
  rep.values["c_tilde_norm"] = fk.c_tilde_norm();
  rep.values["moment_b"] = fk.moment_b();
  rep.values["moment_c"] = fk.moment_c();
  rep.values["M_1"] = fk.M_1();
  rep.values["domination_ratio"] = dom;
  rep.values["domination_violations"] = static_cast<double>(dom_bad);
  rep.values["holder_ratio"] = holder;
  rep.values["quadrature_sup"] = out.quadrature.sup;
  rep.values["quadrature_delta"] = out.quadrature.refinement_delta;

  if (sup0 > bound * (1.0 + 1e-9) + 1e-300) {
    rep.status = Status::refuted;
    rep.witness = rep.argmax;
    rep.note = "circle scan exceeds M_A K ||B_b1||^{1-b1/alpha} ||C_g1||^{1-g1/alpha}";
  } else if (dom_bad > 0) {
    rep.status = Status::refuted;
    rep.witness = region[dom_arg];
    rep.note = "||R B|| ||C R|| exceeds f_k on the region grid";
  } else if (holder > 1.0 + 1e-9) {
    rep.status = Status::refuted;
    rep.note = "quadrature of f_k^2 exceeds the Hoelder bound";
  } else if (rep.refinement_delta <= scan.stability_tol && out.quadrature.status == Status::certified) {
    rep.status = Status::certified;
  } else {
    rep.status = Status::inconclusive;
    rep.note = "refinement not stable";
  }
  return out;
}

FkCertificate rescale(const FkCertificate& cert, const SplitExponents& split, double alpha, double fb, double fc) {
  FkCertificate out = cert;
  const double f = std::abs(fb * fc);
  fb = std::abs(fb);
  fc = std::abs(fc);
  CertificateReport& rep = out.report;
  rep.supremum *= f;
  if (rep.bound) *rep.bound *= f;
  auto scale = [&](const char* key, double by) {
    const auto it = rep.values.find(key);
    if (it != rep.values.end()) it->second *= by;
  };
  scale("K", std::pow(fb, split.beta1 / alpha) * std::pow(fc, split.gamma1 / alpha));
  scale("refined_sup", f);
  scale("b_tilde_norm", fb);
  scale("c_tilde_norm", fc);
  scale("quadrature_sup", f * f);
  QuadratureResult& q = out.quadrature;
  for (double& v : q.value) v *= f * f;
  for (double& v : q.weighted) v *= f * f;
  for (auto& c : q.components) {
    c[0] *= f * f;
    c[1] *= fb * fb;
    c[2] *= fc * fc;
  }
  q.sup *= f * f;
  return out;
}

// -- perturbed growth ---------------------------------------------------------------

PerturbedGrowth perturbed_growth_certify(const PerturbedSystem& sys, const SpectralProfile& profile, double M_D,
                                         const std::vector<double>& M_k, const SmoothedNorms& norms,
                                         const ScanConfig& cfg) {
  if (M_k.size() != profile.size()) throw Error(ErrorKind::DimensionMismatch, "one M_k per spectral point required");
  const double alpha = profile.alpha, M_A = profile.M_A;
  const double away_bound = M_A + M_D * norms.b_plain * norms.c_plain * M_A * M_A;
  const ResolventNorm plain(sys.model(), SpectralWeight::none(), cfg.spectrum_floor);

  struct Sample {
    double resnorm = 0.0;
    double weighted = 0.0;
    double ratio = 0.0;
    double triangle = 0.0;
  };
  struct Level {
    ScanGrid grid;
    std::vector<Sample> s;
  };
  auto run_level = [&](const GridResolution& res, bool triangle) {
    Level lv;
    lv.grid = build_grids(profile, res);
    lv.s = map_indexed<Sample>(
        lv.grid.circle.size(),
        [&](std::size_t i) {
          const CirclePoint& pt = lv.grid.circle[i];
          const Complex lambda = circle_lambda(profile, pt);
          Sample s;
          s.resnorm = sys.resolvent_norm(lambda);
          if (pt.near) {
            s.weighted = std::pow(pt.dist, alpha) * s.resnorm;
            s.ratio = s.weighted / (M_A + M_D * M_k[pt.nearest_k]);
          } else {
            s.weighted = s.resnorm;
            s.ratio = s.resnorm / away_bound;
          }
          if (triangle && sys.rank() > 0) {
            const double base = plain(lambda);
            const TransferMatrix t = sys.transfer(lambda);
            const double corr = t.d_inverse_norm * block_norm(sys.resolvent_columns(lambda)) *
                                block_norm(sys.adjoint_resolvent_columns(lambda));
            const double gap = std::abs(s.resnorm - base);
            s.triangle = gap <= 1e-7 * base ? 0.0 : gap / std::max(corr, 1e-300);
          }
          return s;
        },
        cfg.exec);
    return lv;
  };
  const Level coarse = run_level(cfg.resolution, true);
  const Level fine = run_level(cfg.resolution.refined(), false);

  PerturbedGrowth out;
  CertificateReport& rep = out.report;
  rep.name = "perturbed_growth";
  double near0 = 0.0, near1 = 0.0, away0 = 0.0, ratio = 0.0, tri = 0.0;
  std::size_t arg = 0, worst = 0, tri_bad = 0;
  for (std::size_t i = 0; i < coarse.s.size(); ++i) {
    const CirclePoint& pt = coarse.grid.circle[i];
    const Sample& s = coarse.s[i];
    out.rows.push_back(CircleRow{pt.phi, pt.nearest_k, pt.dist, s.resnorm, s.weighted});
    if (pt.near && s.weighted > near0) {
      near0 = s.weighted;
      arg = i;
    }
    if (!pt.near) away0 = std::max(away0, s.weighted);
    if (s.ratio > ratio) {
      ratio = s.ratio;
      worst = i;
    }
    tri = std::max(tri, s.triangle);
    if (s.triangle > 1.0 + 1e-6) ++tri_bad;
  }
  for (std::size_t i = 0; i < fine.s.size(); ++i) {
    if (fine.grid.circle[i].near) near1 = std::max(near1, fine.s[i].weighted);
    ratio = std::max(ratio, fine.s[i].ratio);
  }
  double near_bound = 0.0;
  for (double m : M_k) near_bound = std::max(near_bound, M_A + M_D * m);
  rep.supremum = near0;
  rep.argmax = coarse.grid.circle.empty() ? Complex() : circle_lambda(profile, coarse.grid.circle[arg]);
  rep.bound = near_bound;
  rep.grid = GridMeta{coarse.grid.circle.size(), coarse.grid.floor, coarse.grid.refinement, coarse.grid.hash};
  rep.refinement_delta = relative_change(near0, near1);
  rep.values["refined_sup"] = near1;
  rep.values["away_sup"] = away0;
  rep.values["away_bound"] = away_bound;
  rep.values["max_ratio"] = ratio;
  rep.values["M_D"] = M_D;
  rep.values["triangle_ratio"] = tri;
  rep.values["triangle_violations"] = static_cast<double>(tri_bad);
  if (ratio > 1.0 + 1e-9) {
    rep.status = Status::refuted;
    rep.witness = circle_lambda(profile, coarse.grid.circle[worst]);
    rep.note = "perturbed resolvent exceeds M_A + M_D M_k";
  } else if (tri_bad > 0) {
    rep.status = Status::inconclusive;
    rep.note = "resolvent difference exceeds the Sherman-Morrison-Woodbury correction bound";
  } else {
    rep.status = rep.refinement_delta <= cfg.stability_tol ? Status::certified : Status::inconclusive;
  }
  return out;
}

// -- verdict --------------------------------------------------------------------------

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::preserved: return "preserved";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

const CertificateReport* StabilityVerdict::find(const std::string& name) const {
  for (const auto& r : reports)
    if (r.name == name) return &r;
  return nullptr;
}

struct StabilityPipeline::Cache {
  bool base_done = false;
  std::vector<CertificateReport> base_reports;
  std::vector<QuadratureResult> base_quadratures;
  std::vector<CircleRow> circle_rows;
  std::vector<std::vector<RegionRow>> region_rows;
  std::vector<std::string> base_errors;
  bool growth_ok = false;
  double M = 1.0;
  double M_0 = 0.0;
  double M_2 = 0.0;
  std::vector<double> M_1;

  bool unit_done = false;
  std::optional<SmoothedNorms> norms;
  std::unique_ptr<PerturbedSystem> unit_sys;
  std::optional<TransferField> field;
  std::vector<std::optional<FkCertificate>> fk;
  std::vector<std::string> unit_errors;
};

StabilityPipeline::StabilityPipeline(OperatorModel model, SpectralProfile profile, FiniteRankPerturbation pert,
                                     StabilityConfig cfg)
    : model_(std::move(model)),
      profile_(std::move(profile)),
      pert_(std::move(pert)),
      cfg_(std::move(cfg)),
      cache_(std::make_unique<Cache>()) {
  cfg_.quadrature.throw_on_unstable = false;
  validate_perturbation(model_, pert_);
}

StabilityPipeline::~StabilityPipeline() = default;

StabilityVerdict StabilityPipeline::run() const { return run_scaled(pert_.scale_b, pert_.scale_c); }

namespace {

template <class Fn>
bool guarded(std::vector<std::string>& errors, const std::string& stage, Fn&& fn) {
  try {
    fn();
    return true;
  } catch (const std::exception& e) {
    errors.push_back(error_text(stage, e));
    return false;
  }
}

double with_refined(const CertificateReport& r) {
  const auto it = r.values.find("refined_sup");
  return it == r.values.end() ? r.supremum : std::max(r.supremum, it->second);
}

}  // namespace

StabilityVerdict StabilityPipeline::run_scaled(double scale_b, double scale_c) const {
  Cache& c = *cache_;
  const ScanConfig& scan = cfg_.scan;
  const std::size_t N = profile_.size();

  if (!c.base_done) {
    c.base_done = true;
    c.M_1.assign(N, 1.0);
    guarded(c.base_errors, "power_bound", [&] { c.M = std::max(1.0, power_bound(model_, 64)); });
    guarded(c.base_errors, "certify_growth", [&] {
      GrowthResult g = certify_growth(model_, profile_, scan);
      c.growth_ok = g.report.status == Status::certified;
      c.circle_rows = std::move(g.rows);
      c.base_reports.push_back(std::move(g.report));
    });
    guarded(c.base_errors, "kreiss_check", [&] { c.base_reports.push_back(kreiss_check(model_, profile_, c.M, scan)); });
    for (std::size_t k = 0; k < N; ++k)
      guarded(c.base_errors, "analyze_region_" + std::to_string(k), [&] {
        RegionAnalysis ra = analyze_region(model_, profile_, k, c.M, scan);
        c.M_0 = std::max(c.M_0, with_refined(ra.plain));
        c.M_1[k] = std::max(1.0, with_refined(ra.smoothed));
        ra.plain.name = "region_plain_" + std::to_string(k);
        ra.smoothed.name = "region_smoothed_" + std::to_string(k);
        c.base_reports.push_back(std::move(ra.plain));
        c.base_reports.push_back(std::move(ra.smoothed));
        c.region_rows.push_back(std::move(ra.rows));
      });
    guarded(c.base_errors, "complement_sup", [&] {
      CertificateReport r = complement_sup(model_, profile_, c.M, c.M_0, scan);
      c.M_2 = std::max(1.0, with_refined(r));
      c.base_reports.push_back(std::move(r));
    });
    if (N > 0)
      guarded(c.base_errors, "global_smoothed_sup",
              [&] { c.base_reports.push_back(global_smoothed_sup(model_, profile_, scan)); });
    guarded(c.base_errors, "integral_criterion", [&] {
      const ProbeSet probes = make_probes(cfg_.basis_probes, cfg_.random_probes,
                                          std::min<std::size_t>(20, model_.dim()), cfg_.seed);
      QuadratureResult q = integral_criterion(model_, probes, profile_, cfg_.quadrature);
      q.name = "integral_criterion";
      c.base_quadratures.push_back(std::move(q));
    });
  }

  const bool zero = pert_.rank() == 0 || scale_b == 0.0 || scale_c == 0.0;
  if (!c.unit_done && !zero) {
    c.unit_done = true;
    FiniteRankPerturbation unit = pert_;
    unit.scale_b = 1.0;
    unit.scale_c = 1.0;
    guarded(c.unit_errors, "smoothed_norms", [&] { c.norms = smoothed_norms(model_, unit, profile_); });
    guarded(c.unit_errors, "transfer_field", [&] {
      c.unit_sys = std::make_unique<PerturbedSystem>(model_, unit, scan.spectrum_floor);
      c.field = transfer_field(*c.unit_sys, profile_, scan);
    });
    c.fk.resize(N);
    if (c.unit_sys)
      for (std::size_t k = 0; k < N; ++k)
        guarded(c.unit_errors, "fk_properties_" + std::to_string(k), [&] {
          const FkMajorant fk(*c.unit_sys, unit, profile_, k, c.M_1[k]);
          c.fk[k] = fk_properties_certify(fk, profile_, scan, cfg_.quadrature);
        });
  }

  StabilityVerdict v;
  v.reports = c.base_reports;
  v.quadratures = c.base_quadratures;
  v.circle_rows = c.circle_rows;
  v.region_rows = c.region_rows;
  v.errors = c.base_errors;

  FiniteRankPerturbation pert = pert_;
  pert.scale_b = scale_b;
  pert.scale_c = scale_c;

  const ValidationReport pv = validate_profile(profile_);
  std::string pv_detail;
  for (const auto& s : pv.violations) pv_detail += (pv_detail.empty() ? "" : "; ") + s;
  v.hypotheses.push_back({"profile", pv.ok(), pv_detail});
  v.hypotheses.push_back({"growth_certified", c.growth_ok, c.growth_ok ? "" : "growth bound not certified"});

  auto& K = v.constants;
  K["M"] = c.M;
  K["M_A"] = profile_.M_A;
  K["M_0"] = c.M_0;
  K["M_2"] = c.M_2;
  K["r_A"] = profile_.r_A();
  K["d_A"] = profile_.d_A();
  K["alpha"] = profile_.alpha;
  K["beta"] = pert.beta;
  K["gamma"] = pert.gamma;
  K["scale_b"] = scale_b;
  K["scale_c"] = scale_c;
  double M_1_max = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    K["M_1_" + std::to_string(k)] = c.M_1[k];
    M_1_max = std::max(M_1_max, c.M_1[k]);
  }
  K["M_1"] = M_1_max;

  const std::size_t n_o = std::min({cfg_.oracle_dim, kOracleDimCap, model_.has_tail() ? cfg_.oracle_dim : model_.dim()});
  const OperatorModel model_o = model_.with_dim(n_o);

  SmoothedNorms norms;
  std::vector<double> M_k(N, 0.0);
  double M_D = 1.0;
  std::unique_ptr<PerturbedSystem> sys;
  guarded(v.errors, "perturbed_system", [&] { sys = std::make_unique<PerturbedSystem>(model_, pert, scan.spectrum_floor); });

  if (zero) {
    v.hypotheses.push_back({"split_sum", true, "zero perturbation"});
    v.hypotheses.push_back({"smoothed_norms", true, "zero perturbation"});
    v.hypotheses.push_back({"transfer_sup", true, "zero perturbation"});
    v.hypotheses.push_back({"factorization", true, "zero perturbation"});
    norms.b.assign(N, 0.0);
    norms.c.assign(N, 0.0);
    K["M_D"] = 1.0;
    K["sup_G"] = 0.0;
  } else {
    v.errors.insert(v.errors.end(), c.unit_errors.begin(), c.unit_errors.end());
    const bool split_ok = pert.beta + pert.gamma >= profile_.alpha;
    v.hypotheses.push_back({"split_sum", split_ok, split_ok ? "" : "beta + gamma < alpha"});
    v.hypotheses.push_back({"smoothed_norms", c.norms.has_value(), c.norms ? "" : "smoothed norms unavailable"});
    if (c.norms) {
      norms = *c.norms;
      for (double& x : norms.b) x *= std::abs(scale_b);
      for (double& x : norms.c) x *= std::abs(scale_c);
      norms.b_plain *= std::abs(scale_b);
      norms.c_plain *= std::abs(scale_c);
      for (std::size_t k = 0; k < N; ++k) {
        K["smoothed_b_" + std::to_string(k)] = norms.b[k];
        K["smoothed_c_" + std::to_string(k)] = norms.c[k];
      }
      K["norm_B"] = norms.b_plain;
      K["norm_C"] = norms.c_plain;
    }
    if (c.field && c.norms)
      for (std::size_t k = 0; k < N; ++k)
        guarded(v.errors, "transfer_bound_" + std::to_string(k), [&] {
          TransferScan ts = transfer_bound_certify(*c.field, scale_b * scale_c, pert, profile_, k, norms, c.M_1[k],
                                                   c.M_2, model_, scan);
          K["M_R_" + std::to_string(k)] = ts.region.values["empirical_M_R"];
          v.reports.push_back(std::move(ts.region));
          if (k == 0) {
            ts.complement.name = "transfer_complement";
            v.reports.push_back(std::move(ts.complement));
          }
        });
    bool transfer_ok = false;
    if (c.field && sys)
      guarded(v.errors, "d_inverse_sup", [&] {
        CertificateReport d = d_inverse_sup(*c.field, *sys, profile_, scan);
        K["sup_G"] = d.values["sup_G"];
        transfer_ok = d.values["sup_G"] < 1.0 && d.values["refined_sup_G"] < 1.0;
        M_D = std::max(d.supremum, d.values["refined_sup"]);
        K["M_D"] = M_D;
        v.reports.push_back(std::move(d));
      });
    v.hypotheses.push_back({"transfer_sup", transfer_ok, transfer_ok ? "" : "sup ||C R B|| >= 1 or unavailable"});
  }

  std::vector<Complex> eigs;
  std::optional<DenseTruncation> trunc;
  guarded(v.errors, "oracle_eigens", [&] {
    trunc = make_truncation(model_, pert, n_o);
    eigs = oracle_eigens(*trunc);
  });

  if (!zero) {
    bool fact_ok = sys != nullptr;
    if (sys)
      for (std::size_t k = 0; k < N; ++k) {
        const bool ok = guarded(v.errors, "injectivity_" + std::to_string(k), [&] {
          CertificateReport r =
              injectivity_factor_check(*sys, pert, profile_, k, cfg_.injectivity_samples, cfg_.seed + k, eigs);
          fact_ok = fact_ok && r.status == Status::certified;
          v.reports.push_back(std::move(r));
        });
        fact_ok = fact_ok && ok;
      }
    v.hypotheses.push_back({"factorization", fact_ok, fact_ok ? "" : "injectivity factorization not certified"});
  }

  if (trunc) {
    CertificateReport d_stub;
    if (const CertificateReport* d = v.find("d_inverse")) d_stub = *d;
    else if (zero) d_stub.status = Status::certified;
    CertificateReport inc = spectrum_inclusion_check(profile_, d_stub, eigs);
    K["spectral_radius"] = inc.supremum;
    v.reports.push_back(std::move(inc));
  }

  std::unique_ptr<PerturbedSystem> sys_o;
  guarded(v.errors, "oracle_system", [&] { sys_o = std::make_unique<PerturbedSystem>(model_o, pert, scan.spectrum_floor); });
  if (sys_o)
    guarded(v.errors, "integral_criterion_perturbed", [&] {
      const ProbeSet probes = make_probes(cfg_.basis_probes, cfg_.random_probes, std::min<std::size_t>(20, n_o), cfg_.seed);
      QuadratureResult q = integral_criterion(*sys_o, probes, profile_, cfg_.quadrature);
      K["integral_sup"] = q.sup;
      v.quadratures.push_back(std::move(q));
    });

  if (!zero) {
    for (std::size_t k = 0; k < N; ++k) {
      if (k >= c.fk.size() || !c.fk[k]) {
        M_k[k] = kInf;
        continue;
      }
      const SplitExponents split = proportional_split(pert.beta, pert.gamma, profile_.alpha);
      FkCertificate fc = rescale(*c.fk[k], split, profile_.alpha, scale_b, scale_c);
      M_k[k] = std::max(fc.report.supremum, fc.report.values["refined_sup"]);
      K["M_k_" + std::to_string(k)] = M_k[k];
      K["K_" + std::to_string(k)] = fc.report.values["K"];
      v.reports.push_back(std::move(fc.report));
      v.quadratures.push_back(std::move(fc.quadrature));
    }
  }

  if (sys)
    guarded(v.errors, "perturbed_growth", [&] {
      bool finite = std::isfinite(M_D);
      for (double m : M_k) finite = finite && std::isfinite(m);
      if (!finite) throw Error(ErrorKind::SingularD, "M_D or M_k unavailable");
      PerturbedGrowth g = perturbed_growth_certify(*sys, profile_, M_D, M_k, norms, scan);
      v.perturbed_rows = std::move(g.rows);
      v.reports.push_back(std::move(g.report));
    });

  if (sys_o)
    guarded(v.errors, "orbit_decay", [&] {
      CVector x = CVector::Zero(static_cast<Eigen::Index>(n_o));
      x(0) = 1.0;
      if (n_o > 1) x(1) = 1.0;
      DecayTable t = orbit_decay(*sys_o, x, cfg_.orbit_max, cfg_.orbit_threshold);
      t.name = "orbit_e1_e2";
      CertificateReport r;
      r.name = "orbit_decay";
      r.supremum = t.norm.empty() ? 0.0 : t.norm.back() / std::max(t.initial_norm, 1e-300);
      r.bound = cfg_.orbit_threshold;
      r.values["n_max"] = static_cast<double>(cfg_.orbit_max);
      if (t.first_passage) {
        r.values["first_passage"] = static_cast<double>(*t.first_passage);
        if (trunc) {
          const auto oracle = oracle_first_passage(*trunc, x, cfg_.orbit_threshold, *t.first_passage + 1);
          r.values["oracle_first_passage"] = oracle ? static_cast<double>(*oracle) : -1.0;
          r.status = oracle && *oracle == *t.first_passage ? Status::certified : Status::inconclusive;
          if (r.status != Status::certified) r.note = "first passage differs from the dense oracle";
        } else {
          r.status = Status::certified;
          r.note = "no dense oracle at this dimension";
        }
      } else {
        r.status = Status::inconclusive;
        r.note = "threshold not reached within the orbit budget";
      }
      v.decay.push_back(std::move(t));
      v.reports.push_back(std::move(r));
    });

  // aggregation
  for (const auto& name : {"d_inverse", "spectrum_inclusion"}) {
    const CertificateReport* r = v.find(name);
    if (r && r->status == Status::refuted && r->witness && std::abs(*r->witness) > 1.0 + 1e-8) {
      v.verdict = Verdict::violated;
      v.witness = r->witness;
      v.reasons.push_back(std::string(name) + " refuted with witness outside the closed unit disk");
      break;
    }
  }
  if (v.verdict != Verdict::violated) {
    for (const auto& h : v.hypotheses)
      if (!h.passed) v.reasons.push_back("hypothesis " + h.name + " failed");
    for (const auto& r : v.reports)
      if (r.status != Status::certified) v.reasons.push_back(r.name + " " + to_string(r.status));
    for (const auto& q : v.quadratures)
      if (q.status != Status::certified) v.reasons.push_back(q.name + " " + to_string(q.status));
    for (const auto& e : v.errors) v.reasons.push_back(e);
    v.verdict = v.reasons.empty() ? Verdict::preserved : Verdict::inconclusive;
  }
  return v;
}

StabilityVerdict stability_verdict(const OperatorModel& model, const SpectralProfile& profile,
                                   const FiniteRankPerturbation& pert, const StabilityConfig& cfg) {
  return StabilityPipeline(model, profile, pert, cfg).run();
}

ThresholdResult delta_threshold_search(const StabilityPipeline& pipeline, double lo, double hi, double rel_width,
                                       std::size_t rechecks) {
  if (!(lo >= 0.0) || !(hi > lo)) throw Error(ErrorKind::BracketInvalid, "scale bracket must satisfy 0 <= lo < hi");
  if (!(rel_width > 0.0)) throw Error(ErrorKind::InvalidArgument, "relative width must be positive");
  ThresholdResult res;
  res.initial_low = lo;
  res.initial_high = hi;
  auto verdict = [&](double s) {
    const Verdict v = pipeline.run_scaled(s, s).verdict;
    res.history.emplace_back(s, v);
    return v;
  };
  if (verdict(lo) != Verdict::preserved) throw Error(ErrorKind::BracketInvalid, "verdict at the lower scale is not preserved");
  if (verdict(hi) == Verdict::preserved) throw Error(ErrorKind::BracketInvalid, "verdict at the upper scale is preserved");
  const double width = hi - lo;
  while (hi - lo > rel_width * width) {
    const double mid = 0.5 * (lo + hi);
    if (verdict(mid) == Verdict::preserved)
      lo = mid;
    else
      hi = mid;
  }
  res.s_low = lo;
  res.s_high = hi;
  for (std::size_t j = 1; j <= rechecks; ++j) {
    const double s = lo * static_cast<double>(j) / static_cast<double>(rechecks + 1);
    const Verdict v = pipeline.run_scaled(s, s).verdict;
    res.rechecks.emplace_back(s, v);
    res.monotone = res.monotone && v == Verdict::preserved;
  }
  return res;
}

}  // namespace stabpert
