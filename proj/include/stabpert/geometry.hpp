#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stabpert/core.hpp"

namespace stabpert {

/// Angles phi_k of the unit-circle spectral points together with the growth
/// data (alpha, eps_A, M_A). d_A and r_A are derived.
struct SpectralProfile {
  std::vector<double> phis;
  double alpha = 1.0;
  double eps_A = kPi / 8;
  double M_A = 1.0;

  std::size_t size() const { return phis.size(); }
  /// Minimal pairwise circular gap; 2*pi for a single point.
  double d_A() const;
  /// |1 - e^{i eps_A}|.
  double r_A() const;
  /// Index of the point nearest to phi and the circular distance to it.
  std::pair<std::size_t, double> nearest(double phi) const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_profile(const SpectralProfile& profile);

/// Omega_k = {|lambda| >= 1, 0 < |lambda - e^{i phi_k}| <= r_A}.
struct Region {
  std::size_t k = 0;
  double phi = 0.0;
  double r_A = 0.0;
};

Region make_region(const SpectralProfile& profile, std::size_t k);
bool region_contains(const Region& region, Complex lambda);

struct GridResolution {
  double pts_per_decade = 10.0;
  double dphi_min = 1e-5;
  std::size_t uniform_angles = 720;
  std::size_t region_angles = 64;
  std::size_t complement_angles = 360;
  double radial_min = 1e-6;
  /// Each level doubles every grid density; level L+1 contains level L.
  int refinement = 0;

  GridResolution refined(int levels = 1) const {
    GridResolution r = *this;
    r.refinement += levels;
    return r;
  }
};

struct CirclePoint {
  double phi = 0.0;
  std::size_t nearest_k = 0;
  double dist = 0.0;    ///< circular distance to phi_{nearest_k}
  double offset = 0.0;  ///< signed phi - phi_{nearest_k}
  bool near = false;    ///< dist <= eps_A
};

/// e^{i phi} evaluated as e^{i phi_k} e^{i offset}.
Complex circle_lambda(const SpectralProfile& profile, const CirclePoint& pt);

struct ScanGrid {
  std::vector<CirclePoint> circle;
  std::vector<double> radial_r;
  std::vector<std::vector<Complex>> region_points;
  /// Exterior points outside every Omega_k with 1 <= |lambda| <= 3.
  std::vector<Complex> complement;
  double floor = 0.0;
  int refinement = 0;
  std::uint64_t hash = 0;

  std::size_t point_count() const;
};

/// Log-spaced offsets in [dphi_min, eps_A] (both ends included).
std::vector<double> near_offsets(const SpectralProfile& profile, const GridResolution& res);

/// Number of points for a log-spaced sweep over [lo, hi] at the given level.
std::size_t log_count(double lo, double hi, double per_decade, int refinement);
std::vector<double> log_space(double lo, double hi, std::size_t count);

ScanGrid build_grids(const SpectralProfile& profile, const GridResolution& res);

/// r - 1 log-spaced over [radial_min, 1].
std::vector<double> radial_grid(const GridResolution& res);

struct Arc {
  double lo = 0.0;
  double hi = 0.0;  ///< hi > lo, possibly beyond 2*pi (not wrapped)
  double length() const { return hi - lo; }
};

/// E_k^r as arcs centred at phi_k (empty when the circle of radius r misses
/// Omega_k) and the complement E^r as a list of arcs covering the rest of
/// [phi_0 - pi, phi_0 + pi).
struct ArcPartition {
  std::vector<double> half_widths;  ///< per k; negative when E_k^r is empty
  std::vector<Arc> near;            ///< non-empty E_k^r
  std::vector<std::size_t> near_k;
  std::vector<Arc> rest;
};

double arc_half_width(double r, double r_A);
ArcPartition arc_partition(const SpectralProfile& profile, double r);

/// FNV-1a over the raw bytes of a sequence of doubles.
std::uint64_t fnv1a(const double* data, std::size_t count, std::uint64_t seed = 1469598103934665603ull);

}  // namespace stabpert
