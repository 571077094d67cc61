#include "stabpert/oracle.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

namespace stabpert {

namespace {

void check_dim(std::size_t n) {
  if (n == 0 || n > kOracleDimCap)
    throw Error(ErrorKind::InvalidArgument, "oracle dimension must lie in [1, " + std::to_string(kOracleDimCap) + "]");
}

CMatrix shifted(const DenseTruncation& trunc, Complex lambda) {
  const auto n = static_cast<Eigen::Index>(trunc.n);
  return lambda * CMatrix::Identity(n, n) - trunc.active();
}

}  // namespace

DenseTruncation make_truncation(const OperatorModel& model, std::size_t n) {
  check_dim(n);
  DenseTruncation t;
  t.n = n;
  const auto dim = static_cast<Eigen::Index>(n);
  if (model.is_diagonal()) {
    if (!model.has_tail() && n > model.dim())
      throw Error(ErrorKind::DimensionMismatch, "oracle dimension exceeds the explicit entries");
    t.A = CMatrix::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) t.A(i, i) = model.entry(static_cast<std::uint64_t>(i + 1));
  } else {
    if (n > model.dim()) throw Error(ErrorKind::DimensionMismatch, "oracle dimension exceeds the matrix size");
    t.A = model.matrix().topLeftCorner(dim, dim);
  }
  return t;
}

DenseTruncation make_truncation(const OperatorModel& model, const FiniteRankPerturbation& pert, std::size_t n) {
  DenseTruncation t = make_truncation(model, n);
  const auto dim = static_cast<Eigen::Index>(n);
  const auto p = static_cast<Eigen::Index>(pert.rank());
  CMatrix b(dim, p), c(p, dim);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) {
      b(i, j) = pert.scale_b * column_value(model, pert.b_columns[static_cast<std::size_t>(j)], static_cast<std::uint64_t>(i + 1));
      c(j, i) = pert.scale_c *
                std::conj(column_value(model, pert.c_columns[static_cast<std::size_t>(j)], static_cast<std::uint64_t>(i + 1)));
    }
  t.perturbed = t.A + b * c;
  return t;
}

double oracle_resolvent_norm(const DenseTruncation& trunc, Complex lambda) {
  Eigen::JacobiSVD<CMatrix> svd(shifted(trunc, lambda));
  const double smin = svd.singularValues().minCoeff();
  if (!(smin > 0.0) || smin < 1e-300) throw Error(ErrorKind::SpectrumHit, "oracle: lambda - A_n is singular");
  return 1.0 / smin;
}

CVector oracle_solve(const DenseTruncation& trunc, Complex lambda, const CVector& x) {
  if (static_cast<std::size_t>(x.size()) != trunc.n) throw Error(ErrorKind::DimensionMismatch, "oracle: vector size");
  Eigen::ColPivHouseholderQR<CMatrix> qr(shifted(trunc, lambda));
  if (!qr.isInvertible()) throw Error(ErrorKind::SpectrumHit, "oracle: lambda - A_n is singular");
  return qr.solve(x);
}

std::vector<Complex> oracle_eigens(const DenseTruncation& trunc) {
  const CMatrix& m = trunc.active();
  if (m.isDiagonal(0.0)) {
    std::vector<Complex> out(trunc.n);
    for (std::size_t i = 0; i < trunc.n; ++i) out[i] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    return out;
  }
  CMatrix work = m;
  const auto n = static_cast<lapack_int>(trunc.n);
  std::vector<Complex> out(trunc.n);
  Complex dummy;
  const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, work.data(), n, out.data(), &dummy, 1, &dummy, 1);
  if (info != 0) throw Error(ErrorKind::InvalidArgument, "oracle: zgeev failed with info " + std::to_string(info));
  return out;
}

double oracle_spectral_radius(const DenseTruncation& trunc) {
  double r = 0.0;
  for (const Complex& ev : oracle_eigens(trunc)) r = std::max(r, std::abs(ev));
  return r;
}

CVector oracle_orbit(const DenseTruncation& trunc, const CVector& x, std::uint64_t n) {
  if (static_cast<std::size_t>(x.size()) != trunc.n) throw Error(ErrorKind::DimensionMismatch, "oracle: vector size");
  CVector y = x;
  for (std::uint64_t i = 0; i < n; ++i) y = trunc.active() * y;
  return y;
}

std::optional<std::uint64_t> oracle_first_passage(const DenseTruncation& trunc, const CVector& x, double threshold,
                                                  std::uint64_t n_max) {
  if (static_cast<std::size_t>(x.size()) != trunc.n) throw Error(ErrorKind::DimensionMismatch, "oracle: vector size");
  const double target = threshold * x.norm();
  CVector y = x;
  for (std::uint64_t n = 0;; ++n) {
    if (y.norm() <= target) return n;
    if (n == n_max) return std::nullopt;
    y = trunc.active() * y;
  }
}

}  // namespace stabpert
