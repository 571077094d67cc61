#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "stabpert/geometry.hpp"
#include "stabpert/model.hpp"
#include "stabpert/parallel.hpp"
#include "stabpert/report.hpp"
#include "stabpert/spectral_sup.hpp"

namespace stabpert {

struct ScanConfig {
  GridResolution resolution;
  double stability_tol = 0.1;
  double spectrum_floor = 1e-14;
  Exec exec = Exec::parallel;
};

/// lambda -> ||R(lambda, A) W|| with W = prod_l Lambda_l^{theta_l} (W = 1 for
/// the empty weight). Exact for diagonal models, including the tail; dense
/// models use the truncation. Safe to call concurrently.
class ResolventNorm {
 public:
  ResolventNorm(const OperatorModel& model, SpectralWeight weight = SpectralWeight::none(),
                double spectrum_floor = 1e-14);

  double operator()(Complex lambda) const;
  /// Diagonal models: index of the maximising entry (0 for a limit point).
  SupResult detailed(Complex lambda) const;
  /// sup_n w(a_n), i.e. ||W|| for diagonal models.
  double weight_norm() const;

 private:
  const OperatorModel* model_;
  SpectralWeight weight_;
  double floor_;
  std::unique_ptr<SpectralSup> sup_;
  CMatrix dense_weight_;
};

double resolvent_norm(const OperatorModel& model, Complex lambda, double spectrum_floor = 1e-14);

struct CircleRow {
  double phi = 0.0;
  std::size_t nearest_k = 0;
  double dist = 0.0;
  double resnorm = 0.0;
  double weighted = 0.0;  ///< dist^alpha * resnorm near a point, resnorm elsewhere
};

struct GrowthResult {
  CertificateReport report;
  std::vector<CircleRow> rows;
};

std::vector<CircleRow> circle_scan(const OperatorModel& model, const SpectralProfile& profile,
                                   const ScanGrid& grid, Exec exec, double spectrum_floor = 1e-14);

GrowthResult certify_growth(const OperatorModel& model, const SpectralProfile& profile, const ScanConfig& cfg);

struct AlphaEstimate {
  double left = 0.0;
  double right = 0.0;
  double empirical() const { return std::max(left, right); }
};

/// Slopes of log ||R(e^{i(phi_k -+ psi)})|| against -log psi over psi in the
/// window, left (-) and right (+) of phi_k.
AlphaEstimate estimate_alpha(const OperatorModel& model, double phi_k, std::pair<double, double> window,
                             double pts_per_decade = 10.0);

/// (|lambda| - 1) ||R(lambda, A)|| over radial_r x (circle angles and phi_k).
CertificateReport kreiss_check(const OperatorModel& model, const SpectralProfile& profile, double power_bound_M,
                               const ScanConfig& cfg);

struct RegionRow {
  Complex lambda;
  double resnorm = 0.0;
  double smoothed = 0.0;
};

struct RegionAnalysis {
  CertificateReport plain;     ///< M_0 candidate
  CertificateReport smoothed;  ///< M_1 candidate
  std::vector<RegionRow> rows;
};

RegionAnalysis analyze_region(const OperatorModel& model, const SpectralProfile& profile, std::size_t k,
                              double power_bound_M, const ScanConfig& cfg);

CertificateReport region_sup_plain(const OperatorModel& model, const SpectralProfile& profile, std::size_t k,
                                   double power_bound_M, const ScanConfig& cfg);
CertificateReport region_sup_smoothed(const OperatorModel& model, const SpectralProfile& profile, std::size_t k,
                                      const ScanConfig& cfg);

/// sup ||R|| outside the disk and every Omega_k; M_0 enters only the chain bound.
CertificateReport complement_sup(const OperatorModel& model, const SpectralProfile& profile, double power_bound_M,
                                 double M_0, const ScanConfig& cfg);

/// sup ||R Lambda_1^alpha ... Lambda_N^alpha|| over all region grids and the
/// complement grid.
CertificateReport global_smoothed_sup(const OperatorModel& model, const SpectralProfile& profile,
                                      const ScanConfig& cfg);

/// ||Lambda^{t~} x|| / (||x||^{1 - t~/t} ||Lambda^t x||^{t~/t}).
double moment_ratio(const OperatorModel& model, std::size_t k, double theta_tilde, double theta, const CVector& x);

/// Max of moment_ratio over seeded random samples.
double moment_inequality_probe(const OperatorModel& model, std::size_t k, double theta_tilde, double theta,
                               std::size_t samples, std::uint64_t seed);

}  // namespace stabpert
