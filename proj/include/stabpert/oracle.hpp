#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "stabpert/model.hpp"
#include "stabpert/perturbation.hpp"

namespace stabpert {

/// Brute-force dense reference. Built from entries and column values only;
/// every solve goes through Eigen's generic dense decompositions.
struct DenseTruncation {
  std::size_t n = 0;
  CMatrix A;
  std::optional<CMatrix> perturbed;  ///< A_n + B_n C_n

  const CMatrix& active() const { return perturbed ? *perturbed : A; }
};

constexpr std::size_t kOracleDimCap = 2000;

DenseTruncation make_truncation(const OperatorModel& model, std::size_t n);
DenseTruncation make_truncation(const OperatorModel& model, const FiniteRankPerturbation& pert, std::size_t n);

/// 1 / sigma_min(lambda - A_n). Throws SpectrumHit when lambda - A_n is singular.
double oracle_resolvent_norm(const DenseTruncation& trunc, Complex lambda);

/// (lambda - A_n)^{-1} x by column-pivoted QR.
CVector oracle_solve(const DenseTruncation& trunc, Complex lambda, const CVector& x);

std::vector<Complex> oracle_eigens(const DenseTruncation& trunc);

double oracle_spectral_radius(const DenseTruncation& trunc);

CVector oracle_orbit(const DenseTruncation& trunc, const CVector& x, std::uint64_t n);

/// First n <= n_max with ||A_n^n x|| <= threshold ||x||.
std::optional<std::uint64_t> oracle_first_passage(const DenseTruncation& trunc, const CVector& x, double threshold,
                                                  std::uint64_t n_max);

}  // namespace stabpert
