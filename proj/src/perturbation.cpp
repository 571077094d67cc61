#include "stabpert/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <boost/math/quadrature/gauss.hpp>

#include "stabpert/linalg.hpp"

namespace stabpert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSingularRcond = 1e-12;
constexpr int kMaxTailBlocks = 200;
// Dyadic blocks of a convergent sum must shrink at least by this factor.
const double kDivergenceRatio = std::pow(2.0, -0.02);

const std::vector<ColumnRule>& side_rules(const FiniteRankPerturbation& pert, bool adjoint_side) {
  return adjoint_side ? pert.c_columns : pert.b_columns;
}

double side_scale(const FiniteRankPerturbation& pert, bool adjoint_side) {
  return adjoint_side ? pert.scale_c : pert.scale_b;
}

/// 1 - e^{-i phi_k} a for the entry (l, m) of the tail.
Complex tail_gap(const OperatorModel& model, std::size_t k, std::size_t l, double m) {
  if (k == l) return model.defect(m);
  return 1.0 - unit(-model.unit_points()[k]) * model.subsequence_entry(l, m);
}

CMatrix column_matrix(const OperatorModel& model, const std::vector<ColumnRule>& rules, double scale) {
  const auto n = static_cast<Eigen::Index>(model.dim());
  CMatrix m(n, static_cast<Eigen::Index>(rules.size()));
  for (std::size_t j = 0; j < rules.size(); ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      m(i, static_cast<Eigen::Index>(j)) = scale * column_value(model, rules[j], static_cast<std::uint64_t>(i + 1));
  return m;
}

/// Resolvent of A at a fixed lambda: a diagonal of 1/(lambda - a_n) or an LU
/// factorisation of lambda - A.
class LocalResolvent {
 public:
  LocalResolvent(const OperatorModel& model, Complex lambda, double floor) : model_(&model) {
    for (double phi : model.unit_points())
      if (std::abs(lambda - unit(phi)) < floor)
        throw Error(ErrorKind::SpectrumHit, "lambda coincides with a unit-circle spectral point");
    if (model.is_diagonal()) {
      const CVector& a = model.head();
      inv_.resize(a.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        const Complex d = lambda - a(i);
        if (std::norm(d) < floor * floor) throw Error(ErrorKind::SpectrumHit, "lambda coincides with a diagonal entry");
        inv_(i) = reciprocal(d);
      }
    } else {
      const auto n = static_cast<Eigen::Index>(model.dim());
      lu_.compute(lambda * CMatrix::Identity(n, n) - model.matrix());
      if (!(lu_.rcond() > floor)) throw Error(ErrorKind::SpectrumHit, "lambda - A is numerically singular");
      lu_adj_.compute((lambda * CMatrix::Identity(n, n) - model.matrix()).adjoint());
    }
  }

  template <class M>
  CMatrix apply(const M& x) const {
    if (model_->is_diagonal()) return inv_.asDiagonal() * x;
    return lu_.solve(x);
  }
  template <class M>
  CMatrix adjoint_apply(const M& x) const {
    if (model_->is_diagonal()) return inv_.conjugate().asDiagonal() * x;
    return lu_adj_.solve(x);
  }
  const CVector& diagonal() const { return inv_; }

 private:
  const OperatorModel* model_;
  CVector inv_;
  Eigen::PartialPivLU<CMatrix> lu_;
  Eigen::PartialPivLU<CMatrix> lu_adj_;
};

double matrix_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.size() == 1) return std::abs(m(0, 0));
  return linalg::spectral_norm(m);
}

}  // namespace

void validate_perturbation(const OperatorModel& model, const FiniteRankPerturbation& pert) {
  if (pert.b_columns.size() != pert.c_columns.size())
    throw Error(ErrorKind::ValidationError, "perturbation: B and C must have the same number of columns");
  if (!(pert.beta >= 0.0) || !(pert.gamma >= 0.0))
    throw Error(ErrorKind::ValidationError, "perturbation: beta and gamma must be non-negative");
  if (!std::isfinite(pert.scale_b) || !std::isfinite(pert.scale_c))
    throw Error(ErrorKind::ValidationError, "perturbation: scales must be finite");
  for (const auto* side : {&pert.b_columns, &pert.c_columns})
    for (const ColumnRule& r : *side) {
      if (r.id == "smooth") {
        if (!model.is_diagonal()) throw Error(ErrorKind::ValidationError, "perturbation: smooth columns need a diagonal model");
      } else if (r.id == "unit") {
        if (r.index < 1 || r.index > model.dim())
          throw Error(ErrorKind::ValidationError, "perturbation: unit column index outside the truncation");
      } else if (r.id != "explicit") {
        throw Error(ErrorKind::ValidationError, "perturbation: unknown column rule '" + r.id + "'");
      }
    }
}

Complex column_value(const OperatorModel& model, const ColumnRule& rule, std::uint64_t n) {
  if (rule.id == "unit") return n == rule.index ? Complex(1.0) : Complex(0.0);
  if (rule.id == "explicit") return n <= rule.values.size() ? rule.values[n - 1] : Complex(0.0);
  Complex v = std::pow(static_cast<double>(n), -rule.nu);
  if (rule.mu != 0.0)
    for (double phi : model.unit_points()) v *= std::pow(model.gap(n, phi), rule.mu);
  return rule.conjugate ? std::conj(v) : v;
}

Complex column_value_at(const OperatorModel& model, const ColumnRule& rule, std::size_t k, double m) {
  if (rule.id != "smooth") return 0.0;
  const double n = (m - 1.0) * static_cast<double>(model.point_count()) + static_cast<double>(k) + 1.0;
  Complex v = std::pow(n, -rule.nu);
  if (rule.mu != 0.0)
    for (std::size_t l = 0; l < model.point_count(); ++l) v *= std::pow(tail_gap(model, l, k, m), rule.mu);
  return rule.conjugate ? std::conj(v) : v;
}

double smoothed_block_norm(const OperatorModel& model, const FiniteRankPerturbation& pert, std::size_t k,
                           double theta, bool adjoint_side) {
  const auto& rules = side_rules(pert, adjoint_side);
  const double scale = std::abs(side_scale(pert, adjoint_side));
  const auto p = static_cast<Eigen::Index>(rules.size());
  if (p == 0 || scale == 0.0) return 0.0;
  const CMatrix cols = column_matrix(model, rules, 1.0);
  if (theta != 0.0 && k >= model.unit_points().size())
    throw Error(ErrorKind::InvalidArgument, "smoothing point index out of range");

  if (!model.is_diagonal()) {
    if (theta == 0.0) return scale * linalg::column_block_norm(cols);
    return scale * linalg::column_block_norm(fractional_matrix(model, FractionalFactor{k, -theta, adjoint_side}) * cols);
  }

  CMatrix u = cols;
  if (theta != 0.0) {
    const double phi = model.unit_points()[k];
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      Complex f = std::pow(model.gap(static_cast<std::uint64_t>(i + 1), phi), -theta);
      if (adjoint_side) f = std::conj(f);
      u.row(i) *= f;
    }
  }
  CMatrix gram = u.adjoint() * u;

  const bool tail = model.has_tail() &&
                    std::any_of(rules.begin(), rules.end(), [](const ColumnRule& r) { return r.has_tail(); });
  if (tail) {
    using GL = boost::math::quadrature::gauss<double, 8>;
    const auto& nodes = GL::abscissa();
    const auto& weights = GL::weights();
    const double head_trace = gram.trace().real();
    CMatrix tail_gram = CMatrix::Zero(p, p);
    CVector row(p);
    auto add_node = [&](CMatrix& acc, std::size_t l, double m, double w) {
      Complex f = 1.0;
      if (theta != 0.0) {
        f = std::pow(tail_gap(model, k, l, m), -theta);
        if (adjoint_side) f = std::conj(f);
      }
      for (Eigen::Index j = 0; j < p; ++j) row(j) = f * column_value_at(model, rules[static_cast<std::size_t>(j)], l, m);
      acc.noalias() += w * (row.conjugate() * row.transpose());
    };
    for (std::size_t l = 0; l < model.point_count(); ++l) {
      double lo = static_cast<double>(model.head_count(l) + 1);
      double prev = -1.0;
      for (int b = 0; b < kMaxTailBlocks; ++b) {
        // Sum over m in [lo, 2lo - 1] approximated by the integral over
        // [lo - 1/2, 2lo - 1/2], taken in log m.
        const double a = std::log(lo - 0.5), c = std::log(2.0 * lo - 0.5);
        const double half = 0.5 * (c - a), mid = 0.5 * (c + a);
        CMatrix block = CMatrix::Zero(p, p);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          for (double sgn : {-1.0, 1.0}) {
            if (nodes[i] == 0.0 && sgn > 0) continue;
            const double m = std::exp(mid + sgn * half * nodes[i]);
            add_node(block, l, m, weights[i] * half * m);
          }
        }
        const double contrib = block.trace().real();
        tail_gram += block;
        if (contrib <= 0.0) break;
        if (prev > 0.0) {
          const double ratio = contrib / prev;
          if (b >= 6 && ratio > kDivergenceRatio)
            throw Error(ErrorKind::RangeViolation, "smoothed column tail does not converge");
          const double rest = ratio < 1.0 ? contrib * ratio / (1.0 - ratio) : kInf;
          if (b >= 3 && rest <= 1e-15 * (head_trace + tail_gram.trace().real())) {
            tail_gram += block * (ratio / (1.0 - ratio));
            break;
          }
          if (b == kMaxTailBlocks - 1) {
            if (!std::isfinite(rest)) throw Error(ErrorKind::RangeViolation, "smoothed column tail does not converge");
            tail_gram += block * (ratio / (1.0 - ratio));
          }
        }
        prev = contrib;
        lo *= 2.0;
      }
    }
    gram += tail_gram;
  }
  return scale * std::sqrt(linalg::hermitian_max_eigenvalue(gram));
}

SmoothedNorms smoothed_norms(const OperatorModel& model, const FiniteRankPerturbation& pert,
                             const SpectralProfile& profile) {
  SmoothedNorms out;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    out.b.push_back(smoothed_block_norm(model, pert, k, pert.beta, false));
    out.c.push_back(smoothed_block_norm(model, pert, k, pert.gamma, true));
  }
  out.b_plain = smoothed_block_norm(model, pert, 0, 0.0, false);
  out.c_plain = smoothed_block_norm(model, pert, 0, 0.0, true);
  return out;
}

PerturbedSystem::PerturbedSystem(const OperatorModel& model, const FiniteRankPerturbation& pert,
                                 double spectrum_floor)
    : model_(&model), floor_(spectrum_floor), scale_product_(pert.scale_b * pert.scale_c) {
  validate_perturbation(model, pert);
  b_ = column_matrix(model, pert.b_columns, pert.scale_b);
  c_star_ = column_matrix(model, pert.c_columns, pert.scale_c);
  if (model.has_tail()) tail_ = std::make_unique<SpectralSup>(model, SpectralWeight::none(), spectrum_floor);
}

CVector PerturbedSystem::apply(const CVector& x) const {
  CVector y = stabpert::apply(*model_, x);
  if (rank() > 0) y.noalias() += b_ * (c_star_.adjoint() * x);
  return y;
}

CMatrix PerturbedSystem::dense() const {
  CMatrix a = model_->dense_matrix();
  if (rank() > 0) a.noalias() += b_ * c_star_.adjoint();
  return a;
}

CMatrix PerturbedSystem::resolvent_columns(Complex lambda) const {
  return LocalResolvent(*model_, lambda, floor_).apply(b_);
}

CMatrix PerturbedSystem::adjoint_resolvent_columns(Complex lambda) const {
  return LocalResolvent(*model_, lambda, floor_).adjoint_apply(c_star_);
}

TransferMatrix PerturbedSystem::transfer(Complex lambda) const {
  TransferMatrix t;
  t.lambda = lambda;
  const auto p = static_cast<Eigen::Index>(rank());
  if (p == 0) return t;
  t.G = c_star_.adjoint() * resolvent_columns(lambda);
  t.D = CMatrix::Identity(p, p) - t.G;
  Eigen::PartialPivLU<CMatrix> lu(t.D);
  t.rcond = lu.rcond();
  t.invertible = t.rcond > kSingularRcond;
  t.g_norm = matrix_norm(t.G);
  if (t.invertible) {
    t.D_inverse = lu.inverse();
    t.d_inverse_norm = matrix_norm(t.D_inverse);
  } else {
    t.d_inverse_norm = kInf;
  }
  return t;
}

CVector PerturbedSystem::resolvent_apply(Complex lambda, const CVector& x) const {
  if (static_cast<std::size_t>(x.size()) != model_->dim())
    throw Error(ErrorKind::DimensionMismatch, "vector does not match the truncation");
  const LocalResolvent res(*model_, lambda, floor_);
  CVector y = res.apply(x);
  if (rank() == 0) return y;
  const CMatrix rb = res.apply(b_);
  const auto p = static_cast<Eigen::Index>(rank());
  Eigen::PartialPivLU<CMatrix> lu(CMatrix::Identity(p, p) - c_star_.adjoint() * rb);
  if (!(lu.rcond() > kSingularRcond)) throw Error(ErrorKind::SingularD, "I - C R(lambda, A) B is singular");
  const CVector z = lu.solve(c_star_.adjoint() * y);
  y.noalias() += rb * z;
  return y;
}

CVector PerturbedSystem::resolvent_adjoint_apply(Complex lambda, const CVector& y) const {
  if (static_cast<std::size_t>(y.size()) != model_->dim())
    throw Error(ErrorKind::DimensionMismatch, "vector does not match the truncation");
  const LocalResolvent res(*model_, lambda, floor_);
  CVector w = res.adjoint_apply(y);
  if (rank() == 0) return w;
  const auto p = static_cast<Eigen::Index>(rank());
  const CMatrix rb = res.apply(b_);
  const CMatrix rc = res.adjoint_apply(c_star_);
  Eigen::PartialPivLU<CMatrix> lu((CMatrix::Identity(p, p) - c_star_.adjoint() * rb).adjoint());
  if (!(lu.rcond() > kSingularRcond)) throw Error(ErrorKind::SingularD, "I - C R(lambda, A) B is singular");
  const CVector v = lu.solve(b_.adjoint() * w);
  w.noalias() += rc * v;
  return w;
}

double PerturbedSystem::resolvent_norm(Complex lambda) const {
  const LocalResolvent res(*model_, lambda, floor_);
  const auto n = static_cast<Eigen::Index>(model_->dim());
  const auto p = static_cast<Eigen::Index>(rank());
  CMatrix rb, rc;
  Eigen::PartialPivLU<CMatrix> lu, lu_adj;
  if (p > 0) {
    rb = res.apply(b_);
    rc = res.adjoint_apply(c_star_);
    const CMatrix d = CMatrix::Identity(p, p) - c_star_.adjoint() * rb;
    lu.compute(d);
    if (!(lu.rcond() > kSingularRcond)) throw Error(ErrorKind::SingularD, "I - C R(lambda, A) B is singular");
    lu_adj.compute(d.adjoint());
  }
  auto fwd = [&](const CVector& x) -> CVector {
    CVector y = res.apply(x);
    if (p > 0) y.noalias() += rb * lu.solve(c_star_.adjoint() * y);
    return y;
  };
  auto adj = [&](const CVector& y) -> CVector {
    CVector w = res.adjoint_apply(y);
    if (p > 0) w.noalias() += rc * lu_adj.solve(b_.adjoint() * w);
    return w;
  };
  CVector start = CVector::Constant(n, Complex(1e-3 / std::sqrt(static_cast<double>(n))));
  if (model_->is_diagonal()) {
    Eigen::Index arg = 0;
    res.diagonal().cwiseAbs().maxCoeff(&arg);
    start(arg) += 1.0;
  } else {
    start.setOnes();
  }
  double value = linalg::power_iteration_norm(fwd, adj, start);
  if (tail_) {
    const SupResult t = tail_->evaluate_tail(lambda);
    if (!t.converged) throw Error(ErrorKind::TailInconclusive, "tail search did not converge");
    value = std::max(value, t.value);
  }
  return value;
}

CVector smw_resolvent_apply(const PerturbedSystem& sys, Complex lambda, const CVector& x) {
  return sys.resolvent_apply(lambda, x);
}

TransferField transfer_field(const PerturbedSystem& sys, const SpectralProfile& profile, const ScanConfig& cfg) {
  TransferField field;
  field.product = sys.scale_product();
  const GridResolution res[2] = {cfg.resolution, cfg.resolution.refined()};
  for (int l = 0; l < 2; ++l) {
    TransferField::Level& lv = field.levels[l];
    lv.grid = build_grids(profile, res[l]);
    for (const CirclePoint& pt : lv.grid.circle) lv.points.push_back(circle_lambda(profile, pt));
    for (const auto& reg : lv.grid.region_points) {
      lv.region_begin.push_back(lv.points.size());
      lv.points.insert(lv.points.end(), reg.begin(), reg.end());
    }
    lv.complement_begin = lv.points.size();
    lv.region_begin.push_back(lv.complement_begin);
    lv.points.insert(lv.points.end(), lv.grid.complement.begin(), lv.grid.complement.end());
    lv.G = map_indexed<CMatrix>(lv.points.size(), [&](std::size_t i) { return sys.transfer(lv.points[i]).G; },
                                cfg.exec);
    lv.g_norm.resize(lv.G.size());
    for (std::size_t i = 0; i < lv.G.size(); ++i) lv.g_norm[i] = matrix_norm(lv.G[i]);
  }
  return field;
}

namespace {

std::pair<double, std::size_t> scaled_peak(const TransferField::Level& lv, std::size_t lo, std::size_t hi,
                                           double factor) {
  double best = 0.0;
  std::size_t arg = lo;
  for (std::size_t i = lo; i < hi; ++i)
    if (lv.g_norm[i] > best) {
      best = lv.g_norm[i];
      arg = i;
    }
  return {best * factor, arg};
}

}  // namespace

TransferScan transfer_bound_certify(const TransferField& field, double product, const FiniteRankPerturbation& pert,
                                    const SpectralProfile& profile, std::size_t k, const SmoothedNorms& norms,
                                    double M_1, double M_2, const OperatorModel& model, const ScanConfig& cfg) {
  const double factor = field.product == 0.0 ? 0.0 : std::abs(product / field.product);
  const auto& c0 = field.levels[0];
  const auto& c1 = field.levels[1];
  TransferScan out;
  const double smoothed_product = norms.b.at(k) * norms.c.at(k);
  {
    CertificateReport& rep = out.region;
    const auto [sup0, arg0] = scaled_peak(c0, c0.region_begin[k], c0.region_begin[k + 1], factor);
    const double sup1 = scaled_peak(c1, c1.region_begin[k], c1.region_begin[k + 1], factor).first;
    rep.name = "transfer_region_" + std::to_string(k);
    rep.supremum = sup0;
    rep.argmax = c0.points.empty() ? Complex() : c0.points[arg0];
    rep.grid = GridMeta{c0.region_begin[k + 1] - c0.region_begin[k], c0.grid.floor, c0.grid.refinement, c0.grid.hash};
    rep.values["smoothed_product"] = smoothed_product;
    rep.values["refined_sup"] = sup1;
    const double ratio0 = smoothed_product > 0.0 ? sup0 / smoothed_product : 0.0;
    const double ratio1 = smoothed_product > 0.0 ? sup1 / smoothed_product : 0.0;
    rep.values["empirical_M_R"] = ratio0;
    rep.refinement_delta = relative_change(ratio0, ratio1);
    const double excess = pert.beta + pert.gamma - profile.alpha;
    if (excess >= 0.0) {
      const double lam = ResolventNorm(model, SpectralWeight::single(profile.phis[k], excess)).weight_norm();
      rep.values["lemma_constant"] = lam * M_1;
      rep.bound = lam * M_1 * smoothed_product;
    }
    rep.note = "lemma constant taken as ||Lambda_k^{beta+gamma-alpha}|| M_1";
    rep.status = std::isfinite(ratio0) && rep.refinement_delta <= cfg.stability_tol ? Status::certified
                                                                                    : Status::inconclusive;
    if (rep.bound && sup0 > *rep.bound * (1.0 + 1e-9)) {
      rep.status = Status::refuted;
      rep.witness = rep.argmax;
    }
  }
  {
    CertificateReport& rep = out.complement;
    const auto [sup0, arg0] = scaled_peak(c0, c0.complement_begin, c0.points.size(), factor);
    const double sup1 = scaled_peak(c1, c1.complement_begin, c1.points.size(), factor).first;
    rep.name = "transfer_complement";
    rep.supremum = sup0;
    rep.argmax = c0.points.empty() ? Complex() : c0.points[arg0];
    rep.grid = GridMeta{c0.points.size() - c0.complement_begin, c0.grid.floor, c0.grid.refinement, c0.grid.hash};
    rep.refinement_delta = relative_change(sup0, sup1);
    rep.bound = M_2 * norms.b_plain * norms.c_plain;
    rep.values["refined_sup"] = sup1;
    if (sup0 > *rep.bound * (1.0 + 1e-9) + 1e-300) {
      rep.status = Status::refuted;
      rep.witness = rep.argmax;
    } else {
      rep.status = rep.refinement_delta <= cfg.stability_tol ? Status::certified : Status::inconclusive;
    }
  }
  return out;
}

TransferScan transfer_bound_certify(const PerturbedSystem& sys, const FiniteRankPerturbation& pert,
                                    const SpectralProfile& profile, std::size_t k, const SmoothedNorms& norms,
                                    double M_1, double M_2, const ScanConfig& cfg) {
  const TransferField field = transfer_field(sys, profile, cfg);
  return transfer_bound_certify(field, sys.scale_product(), pert, profile, k, norms, M_1, M_2, sys.model(), cfg);
}

std::optional<Complex> singular_d_witness(const PerturbedSystem& sys, Complex start) {
  if (sys.rank() == 0) return std::nullopt;
  const auto p = static_cast<Eigen::Index>(sys.rank());
  Complex lambda = start;
  try {
    for (int it = 0; it < 80; ++it) {
      const LocalResolvent res(sys.model(), lambda, 1e-14);
      const CMatrix rb = res.apply(sys.B());
      const CMatrix d = CMatrix::Identity(p, p) - sys.Cstar().adjoint() * rb;
      Eigen::JacobiSVD<CMatrix> svd(d);
      const double smin = svd.singularValues()(p - 1);
      if (smin < 1e-10 * std::max(1.0, svd.singularValues()(0))) return lambda;
      // d/dlambda det D = det D * tr(D^{-1} C R^2 B)
      const CMatrix dprime = sys.Cstar().adjoint() * res.apply(rb);
      const Complex trace = Eigen::PartialPivLU<CMatrix>(d).solve(dprime).trace();
      if (trace == Complex(0.0)) return std::nullopt;
      lambda -= 1.0 / trace;
      if (!std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()) || std::abs(lambda) > 1e6) return std::nullopt;
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  return std::nullopt;
}

CertificateReport d_inverse_sup(const TransferField& field, const PerturbedSystem& sys, const SpectralProfile& profile,
                                const ScanConfig& cfg) {
  (void)profile;
  const double factor = field.product == 0.0 ? 0.0 : sys.scale_product() / field.product;
  struct Summary {
    double c = 0.0;
    double md = 0.0;
    std::size_t arg = 0;
    std::size_t singular = 0;
  };
  auto summarize = [&](const TransferField::Level& lv) {
    const auto p = static_cast<Eigen::Index>(sys.rank());
    const std::vector<double> dinv = map_indexed<double>(
        lv.G.size(),
        [&](std::size_t i) {
          if (p == 0) return 1.0;
          Eigen::PartialPivLU<CMatrix> lu(CMatrix::Identity(p, p) - factor * lv.G[i]);
          if (!(lu.rcond() > kSingularRcond)) return kInf;
          return matrix_norm(lu.inverse());
        },
        cfg.exec);
    Summary s;
    for (std::size_t i = 0; i < dinv.size(); ++i) {
      s.c = std::max(s.c, std::abs(factor) * lv.g_norm[i]);
      if (!std::isfinite(dinv[i])) ++s.singular;
      if (dinv[i] > s.md) {
        s.md = dinv[i];
        s.arg = i;
      }
    }
    return s;
  };
  const auto& coarse = field.levels[0];
  const auto& fine = field.levels[1];
  const Summary s0 = summarize(coarse), s1 = summarize(fine);

  CertificateReport rep;
  rep.name = "d_inverse";
  rep.supremum = s0.md;
  rep.argmax = coarse.points.empty() ? Complex() : coarse.points[s0.arg];
  rep.grid = GridMeta{coarse.points.size(), coarse.grid.floor, coarse.grid.refinement, coarse.grid.hash};
  rep.refinement_delta = std::isfinite(s0.md) && std::isfinite(s1.md) ? relative_change(s0.md, s1.md) : kInf;
  rep.values["sup_G"] = s0.c;
  rep.values["refined_sup_G"] = s1.c;
  rep.values["refined_sup"] = s1.md;
  rep.values["singular_points"] = static_cast<double>(s0.singular + s1.singular);

  if (s0.c < 1.0 && s1.c < 1.0 && s0.singular + s1.singular == 0) {
    const double neumann = 1.0 / (1.0 - std::max(s0.c, s1.c));
    rep.bound = neumann;
    rep.values["neumann_bound"] = neumann;
    if (std::max(s0.md, s1.md) <= neumann + 1e-9 && rep.refinement_delta <= cfg.stability_tol) {
      rep.status = Status::certified;
    } else {
      rep.status = Status::inconclusive;
      rep.note = "Neumann bound not confirmed pointwise";
    }
    return rep;
  }
  const bool use_coarse = s0.md >= s1.md;
  const Complex start = use_coarse ? coarse.points[s0.arg] : fine.points[s1.arg];
  const std::optional<Complex> root = singular_d_witness(sys, start);
  if (root && std::abs(*root) > 1.0 + 1e-8) {
    rep.status = Status::refuted;
    rep.witness = *root;
    rep.values["witness_modulus"] = std::abs(*root);
    rep.note = "D(lambda) singular outside the closed unit disk";
  } else {
    rep.status = Status::inconclusive;
    rep.note = "sup ||G|| >= 1: Neumann argument unavailable and no singular point located";
  }
  return rep;
}

CertificateReport d_inverse_sup(const PerturbedSystem& sys, const SpectralProfile& profile, const ScanConfig& cfg) {
  return d_inverse_sup(transfer_field(sys, profile, cfg), sys, profile, cfg);
}

SplitExponents proportional_split(double beta, double gamma, double target) {
  const double sum = beta + gamma;
  if (!(sum >= target) || sum <= 0.0)
    throw Error(ErrorKind::SplitInfeasible, "beta + gamma is below the required split sum");
  SplitExponents s;
  s.beta1 = std::clamp(target * beta / sum, 0.0, beta);
  s.gamma1 = std::clamp(target - s.beta1, 0.0, gamma);
  return s;
}

CertificateReport injectivity_factor_check(const PerturbedSystem& sys, const FiniteRankPerturbation& pert,
                                           const SpectralProfile& profile, std::size_t k, std::size_t samples,
                                           std::uint64_t seed, const std::vector<Complex>& truncation_eigs) {
  const SplitExponents split = proportional_split(pert.beta, pert.gamma, 1.0);
  const OperatorModel& model = sys.model();
  const double phi = profile.phis.at(k);
  const Complex e = unit(phi);

  const double mid = smoothed_block_norm(model, pert, k, split.beta1, false) *
                     smoothed_block_norm(model, pert, k, split.gamma1, true);

  const auto n = static_cast<Eigen::Index>(model.dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const FractionalFactor lb{k, split.beta1, false}, lb_inv{k, -split.beta1, false};
  const FractionalFactor lg{k, split.gamma1, false}, lg_inv{k, -split.gamma1, false};
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    CVector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = Complex(gauss(rng), gauss(rng));
    const CVector lhs = e * x - sys.apply(x);
    const CVector y = fractional_apply(model, lg, x);
    CVector inner = y;
    if (sys.rank() > 0) {
      const CVector cy = sys.Cstar().adjoint() * fractional_apply(model, lg_inv, y);
      inner -= unit(-phi) * fractional_apply(model, lb_inv, sys.B() * cy);
    }
    const CVector rhs = e * fractional_apply(model, lb, inner);
    worst = std::max(worst, (lhs - rhs).norm() / x.norm());
  }
  double nearest = kInf;
  for (const Complex& ev : truncation_eigs) nearest = std::min(nearest, std::abs(ev - e));

  CertificateReport rep;
  rep.name = "injectivity_" + std::to_string(k);
  rep.supremum = mid;
  rep.argmax = e;
  rep.bound = 1.0;
  rep.values["beta1"] = split.beta1;
  rep.values["gamma1"] = split.gamma1;
  rep.values["factorization_residual"] = worst;
  rep.values["middle_norm"] = mid;
  rep.values["nearest_truncation_eigenvalue"] = nearest;
  if (worst > 1e-8) {
    rep.status = Status::refuted;
    rep.note = "factorization residual above 1e-8";
  } else if (!(mid < 1.0)) {
    rep.status = Status::inconclusive;
    rep.note = "middle factor perturbation norm >= 1; lemma hypothesis fails";
  } else if (nearest < 1e-6) {
    rep.status = Status::inconclusive;
    rep.note = "truncation eigenvalue within 1e-6 of the spectral point";
  } else {
    rep.status = Status::certified;
    rep.note = "e^{i phi_k} is not an eigenvalue of A + BC";
  }
  return rep;
}

CertificateReport spectrum_inclusion_check(const SpectralProfile& profile, const CertificateReport& d_inverse,
                                           const std::vector<Complex>& truncation_eigs) {
  (void)profile;
  CertificateReport rep;
  rep.name = "spectrum_inclusion";
  double radius = 0.0;
  Complex top{0.0, 0.0};
  for (const Complex& ev : truncation_eigs)
    if (std::abs(ev) > radius) {
      radius = std::abs(ev);
      top = ev;
    }
  rep.supremum = radius;
  rep.argmax = top;
  rep.bound = 1.0 + 1e-8;
  rep.values["spectral_radius"] = radius;
  rep.values["eigenvalue_count"] = static_cast<double>(truncation_eigs.size());
  const bool singular = d_inverse.status == Status::refuted && d_inverse.witness.has_value();
  if (radius > 1.0 + 1e-8) {
    rep.status = Status::refuted;
    rep.witness = top;
    rep.note = "truncation eigenvalue outside the closed unit disk";
  } else if (singular) {
    rep.status = Status::refuted;
    rep.witness = d_inverse.witness;
    rep.note = "D(lambda) singular outside the closed unit disk";
  } else {
    rep.status = d_inverse.status == Status::certified ? Status::certified : Status::inconclusive;
  }
  if (singular) rep.values["d_singular_modulus"] = std::abs(*d_inverse.witness);
  return rep;
}

}  // namespace stabpert
