#include "stabpert/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>

#include "stabpert/linalg.hpp"

namespace stabpert {

namespace {

void require_dim(const OperatorModel& model, const CVector& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) {
    std::ostringstream os;
    os << "vector of length " << x.size() << " for model of dimension " << model.dim();
    throw Error(ErrorKind::DimensionMismatch, os.str());
  }
}

void validation_failure(const std::string& what) { throw Error(ErrorKind::ValidationError, what); }

}  // namespace

OperatorModel OperatorModel::diagonal(EntryRule rule, std::vector<Complex> prefix, std::size_t n_max,
                                      std::vector<double> unit_points) {
  OperatorModel m;
  m.kind_ = Kind::diagonal;
  m.rule_ = std::move(rule);
  m.prefix_ = std::move(prefix);
  m.unit_points_ = std::move(unit_points);
  m.dim_ = m.rule_.id == "explicit" ? m.prefix_.size() : n_max;
  validate_model(m);
  m.build_head();
  return m;
}

OperatorModel OperatorModel::explicit_diagonal(std::vector<Complex> entries,
                                               std::vector<double> unit_points) {
  const std::size_t n = entries.size();
  return diagonal(EntryRule::explicit_entries(), std::move(entries), n, std::move(unit_points));
}

OperatorModel OperatorModel::dense(CMatrix matrix, std::vector<double> unit_points) {
  OperatorModel m;
  m.kind_ = Kind::dense;
  m.matrix_ = std::move(matrix);
  m.unit_points_ = std::move(unit_points);
  m.dim_ = static_cast<std::size_t>(m.matrix_.rows());
  validate_model(m);
  return m;
}

const CMatrix& OperatorModel::matrix() const {
  if (kind_ != Kind::dense) throw Error(ErrorKind::InvalidArgument, "matrix() on a diagonal model");
  return matrix_;
}

OperatorModel OperatorModel::with_dim(std::size_t n_max) const {
  if (!has_tail()) return *this;
  return diagonal(rule_, prefix_, n_max, unit_points_);
}

void OperatorModel::build_head() {
  head_.resize(static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < dim_; ++i) head_(static_cast<Eigen::Index>(i)) = entry(i + 1);
}

const CVector& OperatorModel::head() const {
  if (kind_ != Kind::diagonal) throw Error(ErrorKind::InvalidArgument, "head() on a dense model");
  return head_;
}

Complex OperatorModel::defect(double m) const {
  // 1 - rho e^{i theta} = -2i sin(theta/2) e^{i theta/2} + (1 - rho) e^{i theta}
  const double theta = rule_.d * std::pow(m, -rule_.q);
  const double deficit = rule_.c * std::pow(m, -rule_.s);
  const Complex half = std::polar(1.0, 0.5 * theta);
  return Complex(0.0, -2.0 * std::sin(0.5 * theta)) * half + deficit * half * half;
}

Complex OperatorModel::subsequence_entry(std::size_t k, double m) const {
  return unit(unit_points_[k]) * (1.0 - defect(m));
}

std::uint64_t OperatorModel::head_count(std::size_t k) const {
  const std::size_t n_points = unit_points_.size();
  if (dim_ < k + 1) return 0;
  return (dim_ - k - 1) / n_points + 1;
}

std::uint64_t OperatorModel::global_index(std::size_t k, std::uint64_t m) const {
  return (m - 1) * unit_points_.size() + k + 1;
}

double OperatorModel::arc_bound(double m_lo, double m_hi) const {
  const double rho_gap_lo = rule_.c * std::pow(m_lo, -rule_.s);
  const double theta_lo = rule_.d * std::pow(m_lo, -rule_.q);
  const double rho_gap_hi = m_hi < 0 ? 0.0 : rule_.c * std::pow(m_hi, -rule_.s);
  const double theta_hi = m_hi < 0 ? 0.0 : rule_.d * std::pow(m_hi, -rule_.q);
  // Both polar coordinates are monotone in m and the modulus is at most 1.
  return std::abs(rho_gap_lo - rho_gap_hi) + std::abs(theta_lo - theta_hi);
}

Complex OperatorModel::entry(std::uint64_t n) const {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "entries are 1-based");
  if (n <= prefix_.size()) return prefix_[n - 1];
  if (!has_tail()) throw Error(ErrorKind::InvalidArgument, "entry index beyond explicit entries");
  const std::size_t n_points = unit_points_.size();
  const std::size_t k = (n - 1) % n_points;
  const double m = static_cast<double>((n - 1) / n_points + 1);
  return subsequence_entry(k, m);
}

Complex OperatorModel::gap(std::uint64_t n, double phi) const {
  if (has_tail() && n > prefix_.size()) {
    const std::size_t n_points = unit_points_.size();
    const std::size_t k = (n - 1) % n_points;
    if (circular_distance(phi, unit_points_[k]) == 0.0) {
      const double m = static_cast<double>((n - 1) / n_points + 1);
      return defect(m);
    }
  }
  return 1.0 - unit(-phi) * entry(n);
}

CMatrix OperatorModel::dense_matrix() const {
  if (kind_ == Kind::dense) return matrix_;
  return head_.asDiagonal();
}

void validate_model(const OperatorModel& model) {
  std::set<double> seen;
  for (double phi : model.unit_points()) {
    if (!(phi >= 0.0 && phi < kTwoPi)) validation_failure("unit point outside [0, 2pi)");
    if (!seen.insert(phi).second) validation_failure("duplicate unit point");
  }
  if (model.kind() == OperatorModel::Kind::dense) {
    const CMatrix& a = model.matrix();
    if (a.rows() != a.cols() || a.rows() == 0) validation_failure("dense matrix must be square and non-empty");
    Eigen::ComplexEigenSolver<CMatrix> eig(a, false);
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
      if (std::abs(eig.eigenvalues()(i)) >= 1.0)
        validation_failure("dense model has an eigenvalue on or outside the unit circle");
    return;
  }
  const EntryRule& rule = model.rule();
  for (const Complex& a : model.prefix())
    if (!(std::abs(a) < 1.0)) validation_failure("diagonal entry with |a| >= 1");
  if (rule.id == "explicit") {
    if (model.prefix().empty()) validation_failure("explicit model needs at least one entry");
    return;
  }
  if (rule.id != "polar_power") validation_failure("unknown entry rule '" + rule.id + "'");
  if (model.unit_points().empty()) validation_failure("polar_power rule needs at least one unit point");
  if (!(rule.c > 0.0 && rule.c <= 1.0)) validation_failure("polar_power: c must lie in (0, 1]");
  if (!(rule.s > 0.0) || !(rule.q > 0.0)) validation_failure("polar_power: exponents must be positive");
  if (!(rule.d != 0.0 && std::abs(rule.d) <= kPi / 2)) validation_failure("polar_power: |d| must lie in (0, pi/2]");
  if (model.dim() < model.prefix().size() || model.dim() == 0)
    validation_failure("n_max must be positive and cover the explicit prefix");
}

CVector apply(const OperatorModel& model, const CVector& x) {
  require_dim(model, x);
  if (model.is_diagonal()) return model.head().cwiseProduct(x);
  return model.matrix() * x;
}

CVector adjoint_apply(const OperatorModel& model, const CVector& x) {
  require_dim(model, x);
  if (model.is_diagonal()) return model.head().conjugate().cwiseProduct(x);
  return model.matrix().adjoint() * x;
}

CVector orbit(const OperatorModel& model, const CVector& x, std::uint64_t n) {
  require_dim(model, x);
  CVector y = x;
  for (std::uint64_t i = 0; i < n; ++i) y = stabpert::apply(model, y);
  return y;
}

CVector resolvent_apply(const OperatorModel& model, Complex lambda, const CVector& x,
                        double spectrum_floor) {
  require_dim(model, x);
  for (double phi : model.unit_points())
    if (std::abs(lambda - unit(phi)) < spectrum_floor)
      throw Error(ErrorKind::SpectrumHit, "lambda coincides with a unit-circle spectral point");
  if (model.is_diagonal()) {
    const CVector shifted = (lambda - model.head().array()).matrix();
    for (Eigen::Index i = 0; i < shifted.size(); ++i)
      if (std::abs(shifted(i)) < spectrum_floor)
        throw Error(ErrorKind::SpectrumHit, "lambda coincides with a diagonal entry");
    return x.cwiseQuotient(shifted);
  }
  const auto n = static_cast<Eigen::Index>(model.dim());
  const CMatrix shifted = lambda * CMatrix::Identity(n, n) - model.matrix();
  Eigen::PartialPivLU<CMatrix> lu(shifted);
  if (!(lu.rcond() > spectrum_floor))
    throw Error(ErrorKind::SpectrumHit, "lambda - A is numerically singular");
  CVector y = lu.solve(x);
  const CVector residual = x - shifted * y;
  if (residual.norm() > 1e-10 * x.norm()) y += lu.solve(residual);
  return y;
}

CMatrix fractional_matrix(const OperatorModel& model, const FractionalFactor& factor) {
  if (factor.point_index >= model.unit_points().size())
    throw Error(ErrorKind::InvalidArgument, "fractional factor refers to an undeclared unit point");
  const double phi = model.unit_points()[factor.point_index];
  const auto n = static_cast<Eigen::Index>(model.dim());
  if (model.is_diagonal()) {
    CVector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Complex g = model.gap(static_cast<std::uint64_t>(i + 1), phi);
      const Complex w = factor.exponent == 0.0 ? Complex(1.0) : std::pow(g, factor.exponent);
      d(i) = factor.conjugate ? std::conj(w) : w;
    }
    return d.asDiagonal();
  }
  if (factor.exponent == 0.0) return CMatrix::Identity(n, n);
  const CMatrix lambda_k = CMatrix::Identity(n, n) - unit(-phi) * model.matrix();
  CMatrix power = lambda_k.pow(std::abs(factor.exponent));
  if (factor.exponent < 0.0) {
    Eigen::PartialPivLU<CMatrix> lu(power);
    if (!(lu.rcond() > 1e-12))
      throw Error(ErrorKind::RangeViolation, "negative power of a numerically singular factor");
    power = lu.inverse();
  }
  return factor.conjugate ? CMatrix(power.adjoint()) : power;
}

CVector fractional_apply(const OperatorModel& model, const FractionalFactor& factor, const CVector& x) {
  require_dim(model, x);
  if (factor.exponent == 0.0) return x;
  if (factor.point_index >= model.unit_points().size())
    throw Error(ErrorKind::InvalidArgument, "fractional factor refers to an undeclared unit point");
  if (model.is_diagonal()) {
    const double phi = model.unit_points()[factor.point_index];
    CVector y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Complex w = std::pow(model.gap(static_cast<std::uint64_t>(i + 1), phi), factor.exponent);
      y(i) = (factor.conjugate ? std::conj(w) : w) * x(i);
    }
    return y;
  }
  return fractional_matrix(model, factor) * x;
}

double power_bound(const OperatorModel& model, int n_probe) {
  if (n_probe < 1) throw Error(ErrorKind::InvalidArgument, "n_probe must be at least 1");
  if (model.is_diagonal()) {
    double sup = model.unit_points().empty() ? 0.0 : 1.0;
    for (Eigen::Index i = 0; i < model.head().size(); ++i) sup = std::max(sup, std::abs(model.head()(i)));
    // |a| <= 1 so the n = 1 term dominates every later power.
    return sup;
  }
  const CMatrix& a = model.matrix();
  CMatrix power = a;
  double sup = linalg::spectral_norm(power);
  for (int n = 2; n <= n_probe; ++n) {
    power = a * power;
    const double norm = linalg::spectral_norm(power);
    sup = std::max(sup, norm);
    if (norm < 1e-300) break;
  }
  return sup;
}

}  // namespace stabpert
