#include "stabpert/spectral_sup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stabpert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Largest subsequence index handled exactly in double arithmetic.
constexpr double kIndexCap = 4503599627370496.0;  // 2^52
constexpr double kLeafSize = 16.0;
constexpr double kPruneSlack = 1e-12;

}  // namespace

double SpectralSup::block_bound(const Block& b, const Complex* lambda) const {
  const Sector sec = block_sector(b.lo, b.hi);
  const double w = enclosure_weight(b.k, sec);
  if (lambda == nullptr) return w;
  const Complex p = *lambda * unit(-model_->unit_points()[b.k]);
  double d = sec.min_dist(p);
  if (b.hi < 0) return d > 0.0 ? w / d : kInf;

  const CurveJet jet = curve_jet(p, 1.0 / b.hi, 1.0 / b.lo);
  d = std::max(d, jet.min_dist);
  if (d <= 0.0) return kInf;
  return std::min(w / d, ratio_bound(b.k, sec, p, jet, d));
}

SpectralSup::CurveJet SpectralSup::curve_jet(Complex p, double u1, double u2) const {
  const EntryRule& rule = model_->rule();
  const double c = rule.c, s = rule.s, dd = rule.d, q = rule.q;
  CurveJet jet;
  jet.h = 0.5 * (u2 - u1);
  const double uc = 0.5 * (u1 + u2), h = jet.h;
  auto pw = [](double u, double e) { return e == 0.0 ? 1.0 : std::pow(u, e); };
  auto pw_max = [&](double e) { return std::max(pw(u1, e), pw(u2, e)); };

  // P(u) - p formed from small quantities only, so the distance keeps its
  // relative accuracy when p and the curve both sit next to the limit point 1.
  const double theta = dd * pw(uc, q);
  const double def = c * pw(uc, s);
  const double sh = std::sin(0.5 * theta);
  const Complex rot_m1(-2.0 * sh * sh, std::sin(theta));  // e^{i theta} - 1
  const Complex e = unit(theta);
  jet.diff = rot_m1 - def * e - (p - 1.0);
  const double rho = 1.0 - def;
  jet.tangent = Complex(-c * s * pw(uc, s - 1.0), rho * dd * q * pw(uc, q - 1.0)) * e;

  const double d1r = c * s * pw_max(s - 1.0);
  const double d2r = c * s * std::abs(s - 1.0) * (s == 1.0 ? 0.0 : pw_max(s - 2.0));
  const double d1t = dd * q * pw_max(q - 1.0);
  const double d2t = dd * q * std::abs(q - 1.0) * (q == 1.0 ? 0.0 : pw_max(q - 2.0));
  jet.speed = std::sqrt(d1r * d1r + d1t * d1t);
  jet.accel = d2r + 2.0 * d1r * d1t + d1t * d1t + d2t;

  // g = |P - p|^2, g'' = 2 |P'|^2 + 2 Re(conj(P - p) P'')
  const double g = std::norm(jet.diff);
  const double dg = 2.0 * (std::conj(jet.diff) * jet.tangent).real();
  const double reach = std::sqrt(g) + h * jet.speed;
  const double g2 = 2.0 * jet.speed * jet.speed + 2.0 * reach * jet.accel;
  const double lower = g - std::abs(dg) * h - 0.5 * g2 * h * h;
  jet.min_dist = lower > 0.0 ? std::sqrt(lower) : 0.0;
  return jet;
}

// Near a weight point q_j the factor |q_j - P| / |lambda - P| = |1 + eps z|
// with z = 1 / (lambda - P) and eps = q_j - lambda is flat to second order
// along the curves of the other points; bound it through a Taylor model of z.
double SpectralSup::ratio_bound(std::size_t k, const Sector& sec, Complex p, const CurveJet& jet,
                                double dist) const {
  const double rel0 = model_->unit_points()[k];
  int j = -1;
  double best = kInf;
  for (std::size_t l = 0; l < weight_.phis.size(); ++l) {
    if (weight_.exponents[l] == 0.0 || static_cast<int>(l) == own_slot_[k]) continue;
    const double dl = std::abs(p - unit(weight_.phis[l] - rel0));
    if (dl < best) {
      best = dl;
      j = static_cast<int>(l);
    }
  }
  if (j < 0) return kInf;

  double rest = 1.0;
  for (std::size_t l = 0; l < weight_.phis.size(); ++l) {
    const double t = weight_.exponents[l];
    if (t == 0.0) continue;
    const Complex ql = static_cast<int>(l) == own_slot_[k] ? Complex(1.0) : unit(weight_.phis[l] - rel0);
    const double e = static_cast<int>(l) == j ? t - 1.0 : t;
    if (e > 0.0) {
      rest *= std::pow(sec.max_dist(ql), e);
    } else if (e < 0.0) {
      const double m = sec.min_dist(ql);
      if (m <= 0.0) return kInf;
      rest *= std::pow(m, e);
    }
  }

  const Complex eps = unit(weight_.phis[static_cast<std::size_t>(j)] - rel0) - p;
  const Complex zc = -1.0 / jet.diff;
  const Complex dz = jet.tangent * zc * zc;
  const double z2 = jet.accel / (dist * dist) + 2.0 * jet.speed * jet.speed / (dist * dist * dist);
  const Complex base = 1.0 + eps * zc;
  const Complex slope = eps * dz * jet.h;
  const double rho = std::max(std::abs(base + slope), std::abs(base - slope)) + 0.5 * std::abs(eps) * z2 * jet.h * jet.h;
  return rho * rest;
}

bool SpectralWeight::trivial() const {
  return std::all_of(exponents.begin(), exponents.end(), [](double t) { return t == 0.0; });
}

SpectralSup::SpectralSup(const OperatorModel& model, SpectralWeight weight, double spectrum_floor,
                         std::size_t node_budget)
    : model_(&model), weight_(std::move(weight)), floor_(spectrum_floor), budget_(node_budget) {
  if (!model.is_diagonal()) throw Error(ErrorKind::InvalidArgument, "SpectralSup needs a diagonal model");
  if (weight_.phis.size() != weight_.exponents.size())
    throw Error(ErrorKind::InvalidArgument, "weight angles and exponents differ in length");
  for (double t : weight_.exponents)
    if (!(t >= 0.0)) throw Error(ErrorKind::InvalidArgument, "weight exponents must be non-negative");

  const auto& points = model.unit_points();
  own_slot_.assign(points.size(), -1);
  for (std::size_t j = 0; j < points.size(); ++j)
    for (std::size_t l = 0; l < weight_.phis.size(); ++l)
      if (circular_distance(points[j], weight_.phis[l]) == 0.0) own_slot_[j] = static_cast<int>(l);

  const std::size_t dim = model.dim();
  head_weight_sq_.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double w = 1.0;
    for (std::size_t l = 0; l < weight_.phis.size(); ++l)
      if (weight_.exponents[l] != 0.0)
        w *= std::pow(std::abs(model.gap(i + 1, weight_.phis[l])), weight_.exponents[l]);
    head_weight_sq_[i] = w * w;
  }

  limit_weight_.resize(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    double w = 1.0;
    for (std::size_t l = 0; l < weight_.phis.size(); ++l) {
      if (weight_.exponents[l] == 0.0) continue;
      const double g = static_cast<int>(l) == own_slot_[j]
                           ? 0.0
                           : std::abs(1.0 - unit(points[j] - weight_.phis[l]));
      w *= std::pow(g, weight_.exponents[l]);
    }
    limit_weight_[j] = w;
  }
}

double SpectralSup::entry_weight(std::size_t k, double m) const {
  double w = 1.0;
  for (std::size_t l = 0; l < weight_.phis.size(); ++l) {
    if (weight_.exponents[l] == 0.0) continue;
    const double g = static_cast<int>(l) == own_slot_[k]
                         ? std::abs(model_->defect(m))
                         : std::abs(1.0 - unit(-weight_.phis[l]) * model_->subsequence_entry(k, m));
    w *= std::pow(g, weight_.exponents[l]);
  }
  return w;
}

double SpectralSup::enclosure_weight(std::size_t k, const Sector& sector) const {
  double w = 1.0;
  for (std::size_t l = 0; l < weight_.phis.size(); ++l) {
    if (weight_.exponents[l] == 0.0) continue;
    const double rel = static_cast<int>(l) == own_slot_[k] ? 0.0 : weight_.phis[l] - model_->unit_points()[k];
    w *= std::pow(sector.max_dist(unit(rel)), weight_.exponents[l]);
  }
  return w;
}

SpectralSup::Sector SpectralSup::block_sector(double lo, double hi) const {
  const EntryRule& rule = model_->rule();
  Sector sec;
  sec.r1 = 1.0 - rule.c * std::pow(lo, -rule.s);
  sec.r2 = hi < 0 ? 1.0 : 1.0 - rule.c * std::pow(hi, -rule.s);
  const double ta = rule.d * std::pow(lo, -rule.q);
  const double tb = hi < 0 ? 0.0 : rule.d * std::pow(hi, -rule.q);
  sec.t1 = std::min(ta, tb);
  sec.t2 = std::max(ta, tb);
  return sec;
}

double SpectralSup::Sector::min_dist(Complex p) const {
  const double radius = std::abs(p);
  const double psi = std::arg(p);
  if (psi >= t1 && psi <= t2) {
    if (radius < r1) return r1 - radius;
    if (radius > r2) return radius - r2;
    return 0.0;
  }
  auto edge = [&](double theta) {
    const Complex dir = unit(theta);
    const double t = std::clamp((p * std::conj(dir)).real(), r1, r2);
    return std::abs(p - t * dir);
  };
  return std::min(edge(t1), edge(t2));
}

double SpectralSup::Sector::max_dist(Complex p) const {
  double best = 0.0;
  for (double theta : {t1, t2})
    for (double rho : {r1, r2}) best = std::max(best, std::abs(p - std::polar(rho, theta)));
  double anti = std::arg(p) + kPi;
  if (anti > kPi) anti -= kTwoPi;
  if (anti >= t1 && anti <= t2)
    for (double rho : {r1, r2}) best = std::max(best, std::abs(p - std::polar(rho, anti)));
  return best;
}

SupResult SpectralSup::run(const Complex* lambda, bool include_head) const {
  SupResult res;
  double best = 0.0;
  std::uint64_t arg = 0;
  bool found = false;

  auto consider = [&](double value, std::uint64_t index) {
    if (!found || value > best) {
      best = value;
      arg = index;
      found = true;
    }
  };

  if (include_head) {
    const CVector& head = model_->head();
    const std::size_t dim = head_weight_sq_.size();
    double best_sq = -1.0;
    std::size_t best_i = 0;
    const double floor_sq = floor_ * floor_;
    for (std::size_t i = 0; i < dim; ++i) {
      double v;
      if (lambda != nullptr) {
        const double d2 = std::norm(*lambda - head(static_cast<Eigen::Index>(i)));
        if (d2 < floor_sq) throw Error(ErrorKind::SpectrumHit, "lambda coincides with a diagonal entry");
        v = head_weight_sq_[i] / d2;
      } else {
        v = head_weight_sq_[i];
      }
      if (v > best_sq) {
        best_sq = v;
        best_i = i;
      }
    }
    if (dim > 0) consider(std::sqrt(best_sq), best_i + 1);
  }

  // Closure points of the diagonal spectrum.
  const auto& points = model_->unit_points();
  for (std::size_t j = 0; j < points.size(); ++j) {
    double value = limit_weight_[j];
    if (lambda != nullptr) {
      const double d = std::abs(*lambda - unit(points[j]));
      if (d < floor_) throw Error(ErrorKind::SpectrumHit, "lambda coincides with a unit-circle spectral point");
      value /= d;
    }
    consider(value, 0);
  }

  if (model_->has_tail()) {
    std::vector<Block> stack;
    for (std::size_t k = 0; k < points.size(); ++k)
      stack.push_back(Block{k, static_cast<double>(model_->head_count(k) + 1), -1.0});

    std::size_t nodes = 0;
    bool exhausted = false;
    while (!stack.empty()) {
      if (nodes++ >= budget_) {
        exhausted = true;
        break;
      }
      const Block b = stack.back();
      stack.pop_back();
      const bool unbounded = b.hi < 0;
      if (!unbounded && b.hi - b.lo < kLeafSize) {
        for (double m = b.lo; m <= b.hi; m += 1.0) {
          double value = entry_weight(b.k, m);
          if (lambda != nullptr) {
            const double d = std::abs(*lambda - model_->subsequence_entry(b.k, m));
            if (d < floor_) throw Error(ErrorKind::SpectrumHit, "lambda coincides with a diagonal entry");
            value /= d;
          }
          consider(value, model_->global_index(b.k, static_cast<std::uint64_t>(m)));
        }
        continue;
      }
      if (b.lo >= kIndexCap) {
        exhausted = true;
        stack.push_back(b);
        break;
      }

      if (!(block_bound(b, lambda) > best * (1.0 + kPruneSlack))) continue;

      Block first, second;
      if (unbounded) {
        first = Block{b.k, b.lo, 2.0 * b.lo - 1.0};
        second = Block{b.k, 2.0 * b.lo, -1.0};
      } else {
        const double mid = std::floor(0.5 * (b.lo + b.hi));
        first = Block{b.k, b.lo, mid};
        second = Block{b.k, mid + 1.0, b.hi};
      }
      // Depth-first toward lambda so a good incumbent appears early.
      if (lambda != nullptr) {
        const double d1 = std::abs(*lambda - model_->subsequence_entry(b.k, first.lo));
        const double d2 = std::abs(*lambda - (second.hi < 0 ? unit(points[b.k])
                                                            : model_->subsequence_entry(b.k, second.lo)));
        if (d1 < d2) std::swap(first, second);
      }
      stack.push_back(first);
      stack.push_back(second);
    }

    if (exhausted) {
      double upper = best;
      for (const Block& b : stack) {
        upper = std::max(upper, block_bound(b, lambda));
      }
      res.value = best;
      res.upper = upper;
      res.argmax = arg;
      res.converged = upper <= best * (1.0 + 1e-9);
      return res;
    }
  }

  res.value = best;
  res.upper = best;
  res.argmax = arg;
  res.converged = true;
  return res;
}

SupResult SpectralSup::evaluate(Complex lambda) const { return run(&lambda, true); }

SupResult SpectralSup::evaluate_tail(Complex lambda) const {
  if (!model_->has_tail()) return SupResult{};
  return run(&lambda, false);
}

SupResult SpectralSup::weight_sup() const { return run(nullptr, true); }

}  // namespace stabpert
