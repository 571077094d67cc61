#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stabpert/geometry.hpp"
#include "stabpert/parallel.hpp"
#include "stabpert/report.hpp"

namespace stabpert {

/// Vector-valued integrand on the circle: writes `width` values at lambda.
using CircleIntegrand = std::function<void(Complex lambda, double* out)>;

struct QuadratureConfig {
  double pts_per_decade = 10.0;
  double r_min = 1e-6;  ///< smallest r - 1
  double r_max = 1.0;   ///< largest r - 1
  std::size_t base_panels = 48;
  double rel_tol = 1e-6;
  std::size_t max_panels = 4096;
  double stability_tol = 0.05;
  bool throw_on_unstable = true;
  Exec exec = Exec::parallel;
};

/// 1 + log-spaced r - 1 over [r_min, r_max].
std::vector<double> quadrature_radii(const QuadratureConfig& cfg);

struct CircleIntegral {
  std::vector<double> value;   ///< fine sum (each panel as two halves)
  std::vector<double> coarse;  ///< each panel as a single Gauss-Legendre rule
  std::size_t panels = 0;
  bool converged = false;
};

/// Integral over phi in [0, 2 pi) of f(r e^{i phi}). Panels follow the arcs
/// E_k^r (dyadic toward phi_k) and E^r, then split adaptively where the
/// one-rule and two-halves estimates disagree most.
CircleIntegral integrate_circle(const SpectralProfile& profile, double r, std::size_t width,
                                const CircleIntegrand& f, const QuadratureConfig& cfg);

struct QuadratureResult {
  std::string name;
  std::vector<double> r;
  std::vector<double> value;     ///< max over the primary components at r
  std::vector<double> weighted;  ///< (r - 1) * value
  std::vector<std::vector<double>> components;  ///< [r index][component]
  double sup = 0.0;              ///< max of weighted
  double sup_r = 0.0;
  double refinement_delta = 0.0;
  std::size_t probes = 0;
  Status status = Status::inconclusive;
  std::string note;
};

/// Sweeps the radius grid. Components [0, primary) enter `value`; the rest
/// are carried along in `components`. Never throws on instability.
QuadratureResult radial_quadrature(const std::string& name, const SpectralProfile& profile, std::size_t width,
                                   std::size_t primary, const CircleIntegrand& f, const QuadratureConfig& cfg);

/// Throws QuadratureUnstable when the mesh-halving change exceeds the tolerance.
void require_stable(const QuadratureResult& result, const QuadratureConfig& cfg);

}  // namespace stabpert
