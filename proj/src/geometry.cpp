#include "stabpert/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace stabpert {

double SpectralProfile::d_A() const {
  if (phis.size() < 2) return kTwoPi;
  double gap = kTwoPi;
  for (std::size_t i = 0; i < phis.size(); ++i)
    for (std::size_t j = i + 1; j < phis.size(); ++j) gap = std::min(gap, circular_distance(phis[i], phis[j]));
  return gap;
}

double SpectralProfile::r_A() const { return 2.0 * std::sin(0.5 * eps_A); }

std::pair<std::size_t, double> SpectralProfile::nearest(double phi) const {
  std::size_t best = 0;
  double dist = kTwoPi;
  for (std::size_t k = 0; k < phis.size(); ++k) {
    const double d = circular_distance(phi, phis[k]);
    if (d < dist) {
      dist = d;
      best = k;
    }
  }
  return {best, dist};
}

ValidationReport validate_profile(const SpectralProfile& profile) {
  ValidationReport rep;
  if (profile.phis.empty()) rep.violations.push_back("phis: at least one spectral point required");
  for (double phi : profile.phis)
    if (!(phi >= 0.0 && phi < kTwoPi)) rep.violations.push_back("phis: angle outside [0, 2pi)");
  for (std::size_t i = 1; i < profile.phis.size(); ++i) {
    if (profile.phis[i] == profile.phis[i - 1]) rep.violations.push_back("phis: duplicate angle");
    else if (profile.phis[i] < profile.phis[i - 1]) rep.violations.push_back("phis: angles not sorted");
  }
  if (!(profile.alpha >= 1.0)) rep.violations.push_back("alpha: must be >= 1");
  if (!(profile.M_A >= 1.0)) rep.violations.push_back("M_A: must be >= 1");
  if (!(profile.eps_A > 0.0)) {
    rep.violations.push_back("eps_A: must be > 0");
  } else {
    if (profile.eps_A > kPi / 8) rep.violations.push_back("eps_A: exceeds pi/8");
    if (!profile.phis.empty() && profile.eps_A > profile.d_A() / 3.0) {
      std::ostringstream os;
      os << "eps_A: exceeds d_A/3 = " << profile.d_A() / 3.0;
      rep.violations.push_back(os.str());
    }
  }
  return rep;
}

Region make_region(const SpectralProfile& profile, std::size_t k) {
  if (k >= profile.size()) throw Error(ErrorKind::InvalidArgument, "region index out of range");
  return Region{k, profile.phis[k], profile.r_A()};
}

bool region_contains(const Region& region, Complex lambda) {
  const double d = std::abs(lambda - unit(region.phi));
  return std::abs(lambda) >= 1.0 - 1e-14 && d > 0.0 && d <= region.r_A * (1.0 + 1e-14);
}

Complex circle_lambda(const SpectralProfile& profile, const CirclePoint& pt) {
  if (pt.near) return unit(profile.phis[pt.nearest_k]) * unit(pt.offset);
  return unit(pt.phi);
}

std::size_t ScanGrid::point_count() const {
  std::size_t n = circle.size() + radial_r.size() + complement.size();
  for (const auto& r : region_points) n += r.size();
  return n;
}

std::size_t log_count(double lo, double hi, double per_decade, int refinement) {
  const double decades = std::log10(hi / lo);
  const auto base = static_cast<std::size_t>(std::max(2.0, std::floor(per_decade * decades + 1e-9) + 1.0));
  return (base - 1) * (std::size_t{1} << refinement) + 1;
}

std::vector<double> log_space(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo);
  const double step = (std::log(hi) - a) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::exp(a + step * static_cast<double>(i));
  out.front() = lo;
  out.back() = hi;
  return out;
}

namespace {

void check_resolution(const GridResolution& res) {
  if (res.pts_per_decade < 8.0)
    throw Error(ErrorKind::ResolutionTooCoarse, "fewer than 8 points per decade requested");
  if (!(res.dphi_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "dphi_min must be positive");
  if (res.uniform_angles < 8 || res.region_angles < 4 || res.complement_angles < 8)
    throw Error(ErrorKind::ResolutionTooCoarse, "angular resolution too small");
  if (res.refinement < 0 || res.refinement > 8) throw Error(ErrorKind::InvalidArgument, "refinement level out of range");
}

void hash_complex(std::uint64_t& h, const std::vector<Complex>& pts) {
  if (!pts.empty()) h = fnv1a(reinterpret_cast<const double*>(pts.data()), 2 * pts.size(), h);
}

}  // namespace

std::vector<double> near_offsets(const SpectralProfile& profile, const GridResolution& res) {
  check_resolution(res);
  if (!(res.dphi_min < profile.eps_A)) throw Error(ErrorKind::InvalidArgument, "dphi_min must be below eps_A");
  return log_space(res.dphi_min, profile.eps_A,
                   log_count(res.dphi_min, profile.eps_A, res.pts_per_decade, res.refinement));
}

std::vector<double> radial_grid(const GridResolution& res) {
  check_resolution(res);
  std::vector<double> r = log_space(res.radial_min, 1.0, log_count(res.radial_min, 1.0, res.pts_per_decade, res.refinement));
  for (double& v : r) v += 1.0;
  return r;
}

ScanGrid build_grids(const SpectralProfile& profile, const GridResolution& res) {
  check_resolution(res);
  ScanGrid grid;
  grid.floor = res.dphi_min;
  grid.refinement = res.refinement;
  const std::size_t n_points = profile.size();
  const std::vector<double> offsets = near_offsets(profile, res);

  for (std::size_t k = 0; k < n_points; ++k) {
    for (double psi : offsets) {
      for (double sign : {-1.0, 1.0}) {
        CirclePoint pt;
        pt.offset = sign * psi;
        pt.phi = wrap_angle(profile.phis[k] + pt.offset);
        pt.nearest_k = k;
        pt.dist = psi;
        pt.near = true;
        grid.circle.push_back(pt);
      }
    }
  }
  const std::size_t uniform = res.uniform_angles << res.refinement;
  for (std::size_t j = 0; j < uniform; ++j) {
    const double phi = kTwoPi * static_cast<double>(j) / static_cast<double>(uniform);
    const auto [k, dist] = profile.nearest(phi);
    if (dist <= profile.eps_A) continue;
    CirclePoint pt;
    pt.phi = phi;
    pt.nearest_k = k;
    pt.dist = dist;
    pt.offset = signed_offset(phi, profile.phis[k]);
    grid.circle.push_back(pt);
  }
  std::stable_sort(grid.circle.begin(), grid.circle.end(),
                   [](const CirclePoint& a, const CirclePoint& b) { return a.phi < b.phi; });

  grid.radial_r = radial_grid(res);

  const double r_A = profile.r_A();
  const std::vector<double> rhos =
      log_space(res.dphi_min, r_A, log_count(res.dphi_min, r_A, res.pts_per_decade, res.refinement));
  const std::size_t etas = res.region_angles << res.refinement;
  grid.region_points.resize(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    const Complex center = unit(profile.phis[k]);
    auto& pts = grid.region_points[k];
    for (double rho : rhos) {
      for (std::size_t j = 0; j < etas; ++j) {
        const double eta = -kPi + kTwoPi * static_cast<double>(j) / static_cast<double>(etas);
        if (std::cos(eta) < -0.5 * rho) continue;
        const Complex lambda = center * (1.0 + std::polar(rho, eta));
        if (std::abs(lambda) < 1.0) continue;
        pts.push_back(lambda);
      }
    }
    for (double psi : offsets) {
      pts.push_back(center * unit(-psi));
      pts.push_back(center * unit(psi));
    }
  }

  const std::vector<double> radii =
      log_space(res.radial_min, 2.0, log_count(res.radial_min, 2.0, res.pts_per_decade, res.refinement));
  std::vector<double> angles;
  const std::size_t comp = res.complement_angles << res.refinement;
  for (std::size_t j = 0; j < comp; ++j) angles.push_back(kTwoPi * static_cast<double>(j) / static_cast<double>(comp));
  for (std::size_t k = 0; k < n_points; ++k)
    for (double psi : offsets) {
      angles.push_back(wrap_angle(profile.phis[k] - psi));
      angles.push_back(wrap_angle(profile.phis[k] + psi));
    }
  std::sort(angles.begin(), angles.end());
  angles.erase(std::unique(angles.begin(), angles.end()), angles.end());

  std::vector<Region> regions;
  for (std::size_t k = 0; k < n_points; ++k) regions.push_back(make_region(profile, k));
  auto outside_regions = [&](Complex lambda) {
    return std::none_of(regions.begin(), regions.end(),
                        [&](const Region& reg) { return region_contains(reg, lambda); });
  };
  for (const CirclePoint& pt : grid.circle)
    if (!pt.near) grid.complement.push_back(unit(pt.phi));
  for (double t : radii)
    for (double phi : angles) {
      const Complex lambda = std::polar(1.0 + t, phi);
      if (outside_regions(lambda)) grid.complement.push_back(lambda);
    }

  std::uint64_t h = 1469598103934665603ull;
  for (const CirclePoint& pt : grid.circle) h = fnv1a(&pt.phi, 1, h);
  h = fnv1a(grid.radial_r.data(), grid.radial_r.size(), h);
  for (const auto& pts : grid.region_points) hash_complex(h, pts);
  hash_complex(h, grid.complement);
  grid.hash = h;
  return grid;
}

double arc_half_width(double r, double r_A) {
  const double c = (r * r + 1.0 - r_A * r_A) / (2.0 * r);
  if (c > 1.0 + 1e-12) return -1.0;
  if (c <= -1.0) return kPi;
  return std::acos(std::min(c, 1.0));
}

ArcPartition arc_partition(const SpectralProfile& profile, double r) {
  ArcPartition part;
  const std::size_t n = profile.size();
  const double r_A = profile.r_A();
  part.half_widths.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    part.half_widths[k] = r > 1.0 ? arc_half_width(r, r_A) : -1.0;
    if (part.half_widths[k] >= 0.0) {
      part.near.push_back(Arc{profile.phis[k] - part.half_widths[k], profile.phis[k] + part.half_widths[k]});
      part.near_k.push_back(k);
    }
  }
  if (n == 0) {
    part.rest.push_back(Arc{-kPi, kPi});
    return part;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double h_here = std::max(0.0, part.half_widths[k]);
    const std::size_t next = (k + 1) % n;
    const double h_next = std::max(0.0, part.half_widths[next]);
    double end = profile.phis[next] - h_next;
    if (next <= k) end += kTwoPi;
    const double start = profile.phis[k] + h_here;
    if (end > start) part.rest.push_back(Arc{start, end});
  }
  return part;
}

std::uint64_t fnv1a(const double* data, std::size_t count, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < count * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace stabpert
