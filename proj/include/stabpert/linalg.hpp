#pragma once

#include <cstddef>
#include <functional>

#include "stabpert/core.hpp"

namespace stabpert::linalg {

/// Below this dimension norms come from a full SVD; above it from power
/// iteration on the Gram operator.
inline constexpr std::size_t kSvdCutoff = 512;
inline constexpr double kPowerTol = 1e-8;
inline constexpr int kPowerMaxIter = 500;

using LinearMap = std::function<CVector(const CVector&)>;

/// Largest singular value of the operator given by (apply, apply_adjoint),
/// estimated by power iteration on apply_adjoint(apply(.)).
double power_iteration_norm(const LinearMap& apply, const LinearMap& apply_adjoint,
                            const CVector& start, double tol = kPowerTol,
                            int max_iter = kPowerMaxIter);

double spectral_norm(const CMatrix& m);

/// Operator norm of an n x p block with p small: sqrt of the top eigenvalue
/// of the p x p Gram matrix.
double column_block_norm(const CMatrix& block);

double hermitian_max_eigenvalue(const CMatrix& gram);

}  // namespace stabpert::linalg
