#include "stabpert/linalg.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace stabpert::linalg {

double power_iteration_norm(const LinearMap& apply, const LinearMap& apply_adjoint,
                            const CVector& start, double tol, int max_iter) {
  CVector v = start;
  double nv = v.norm();
  if (nv == 0.0) return 0.0;
  v /= nv;
  double estimate = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    CVector w = apply_adjoint(apply(v));
    const double rayleigh = std::abs(v.dot(w));
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    const double next = std::sqrt(rayleigh);
    if (it > 0 && std::abs(next - estimate) <= tol * next) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  // One more exact evaluation of ||T v|| for the converged direction.
  return std::max(estimate, apply(v).norm());
}

double spectral_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  const auto small_dim = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  if (small_dim < kSvdCutoff) {
    Eigen::BDCSVD<CMatrix> svd(m);
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  }
  CVector start = CVector::Ones(m.cols());
  return power_iteration_norm([&](const CVector& x) -> CVector { return m * x; },
                              [&](const CVector& y) -> CVector { return m.adjoint() * y; },
                              start);
}

double hermitian_max_eigenvalue(const CMatrix& gram) {
  if (gram.rows() == 0) return 0.0;
  if (gram.rows() == 1) return std::max(0.0, gram(0, 0).real());
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

double column_block_norm(const CMatrix& block) {
  if (block.size() == 0) return 0.0;
  const CMatrix gram = block.adjoint() * block;
  return std::sqrt(hermitian_max_eigenvalue(gram));
}

}  // namespace stabpert::linalg
