#include "stabpert/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

namespace stabpert {

namespace {

using GL = boost::math::quadrature::gauss<double, 8>;

struct Panel {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> whole;
  std::vector<double> left;
  std::vector<double> right;
};

class PanelRule {
 public:
  PanelRule(double r, std::size_t width, const CircleIntegrand& f) : r_(r), width_(width), f_(f), buf_(width) {}

  void integrate(double a, double b, std::vector<double>& out) {
    out.assign(width_, 0.0);
    const auto& x = GL::abscissa();
    const auto& w = GL::weights();
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (double sgn : {-1.0, 1.0}) {
        if (x[i] == 0.0 && sgn > 0) continue;
        f_(std::polar(r_, mid + sgn * half * x[i]), buf_.data());
        for (std::size_t j = 0; j < width_; ++j) out[j] += w[i] * half * buf_[j];
      }
    }
  }

  void split(Panel& p) {
    const double m = 0.5 * (p.a + p.b);
    integrate(p.a, m, p.left);
    integrate(m, p.b, p.right);
  }

 private:
  double r_;
  std::size_t width_;
  const CircleIntegrand& f_;
  std::vector<double> buf_;
};

std::vector<std::pair<double, double>> initial_panels(const SpectralProfile& profile, double r,
                                                      const QuadratureConfig& cfg) {
  std::vector<std::pair<double, double>> out;
  const ArcPartition part = arc_partition(profile, r);
  const double w_min = std::max(0.25 * (r - 1.0), 1e-14);
  for (std::size_t i = 0; i < part.near.size(); ++i) {
    const double phi = profile.phis[part.near_k[i]];
    double t = part.half_widths[part.near_k[i]];
    while (0.5 * t >= w_min) {
      out.emplace_back(phi + 0.5 * t, phi + t);
      out.emplace_back(phi - t, phi - 0.5 * t);
      t *= 0.5;
    }
    out.emplace_back(phi - t, phi + t);
  }
  const double max_width = kTwoPi / static_cast<double>(std::max<std::size_t>(cfg.base_panels, 1));
  for (const Arc& arc : part.rest) {
    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(arc.length() / max_width)));
    const double step = arc.length() / static_cast<double>(pieces);
    for (std::size_t j = 0; j < pieces; ++j)
      out.emplace_back(arc.lo + step * static_cast<double>(j),
                       j + 1 == pieces ? arc.hi : arc.lo + step * static_cast<double>(j + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<double> quadrature_radii(const QuadratureConfig& cfg) {
  if (!(cfg.r_min > 0.0) || !(cfg.r_max > cfg.r_min))
    throw Error(ErrorKind::InvalidArgument, "quadrature radius range must satisfy 0 < r_min < r_max");
  std::vector<double> r = log_space(cfg.r_min, cfg.r_max, log_count(cfg.r_min, cfg.r_max, cfg.pts_per_decade, 0));
  for (double& v : r) v += 1.0;
  return r;
}

CircleIntegral integrate_circle(const SpectralProfile& profile, double r, std::size_t width,
                                const CircleIntegrand& f, const QuadratureConfig& cfg) {
  PanelRule rule(r, width, f);
  std::vector<Panel> panels;
  for (const auto& [a, b] : initial_panels(profile, r, cfg)) {
    Panel p{a, b, {}, {}, {}};
    rule.integrate(a, b, p.whole);
    rule.split(p);
    panels.push_back(std::move(p));
  }

  std::vector<double> total(width, 0.0), error(width, 0.0), scale(width, 1.0);
  for (const Panel& p : panels)
    for (std::size_t j = 0; j < width; ++j) {
      total[j] += p.left[j] + p.right[j];
      error[j] += std::abs(p.whole[j] - p.left[j] - p.right[j]);
    }
  for (std::size_t j = 0; j < width; ++j)
    if (std::abs(total[j]) > 0.0) scale[j] = std::abs(total[j]);

  auto panel_error = [&](const Panel& p) {
    double e = 0.0;
    for (std::size_t j = 0; j < width; ++j) e = std::max(e, std::abs(p.whole[j] - p.left[j] - p.right[j]) / scale[j]);
    return e;
  };
  auto done = [&] {
    for (std::size_t j = 0; j < width; ++j)
      if (error[j] > cfg.rel_tol * std::max(std::abs(total[j]), 1e-300) && error[j] > 0.0) return false;
    return true;
  };

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> queue;
  for (std::size_t i = 0; i < panels.size(); ++i) queue.emplace(panel_error(panels[i]), i);

  CircleIntegral out;
  while (!done()) {
    if (panels.size() >= cfg.max_panels || queue.empty()) break;
    const std::size_t idx = queue.top().second;
    queue.pop();
    Panel parent = std::move(panels[idx]);
    const double m = 0.5 * (parent.a + parent.b);
    Panel lo{parent.a, m, std::move(parent.left), {}, {}};
    Panel hi{m, parent.b, std::move(parent.right), {}, {}};
    rule.split(lo);
    rule.split(hi);
    for (std::size_t j = 0; j < width; ++j) {
      error[j] -= std::abs(parent.whole[j] - lo.whole[j] - hi.whole[j]);
      error[j] += std::abs(lo.whole[j] - lo.left[j] - lo.right[j]) + std::abs(hi.whole[j] - hi.left[j] - hi.right[j]);
      error[j] = std::max(error[j], 0.0);
      total[j] += lo.left[j] + lo.right[j] + hi.left[j] + hi.right[j] - lo.whole[j] - hi.whole[j];
    }
    panels[idx] = std::move(lo);
    panels.push_back(std::move(hi));
    queue.emplace(panel_error(panels[idx]), idx);
    queue.emplace(panel_error(panels.back()), panels.size() - 1);
  }
  out.converged = done();

  std::sort(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
  out.value.assign(width, 0.0);
  out.coarse.assign(width, 0.0);
  for (const Panel& p : panels)
    for (std::size_t j = 0; j < width; ++j) {
      out.value[j] += p.left[j] + p.right[j];
      out.coarse[j] += p.whole[j];
    }
  out.panels = panels.size();
  return out;
}

QuadratureResult radial_quadrature(const std::string& name, const SpectralProfile& profile, std::size_t width,
                                   std::size_t primary, const CircleIntegrand& f, const QuadratureConfig& cfg) {
  QuadratureResult res;
  res.name = name;
  res.r = quadrature_radii(cfg);
  res.probes = primary;
  const std::vector<CircleIntegral> parts = map_indexed<CircleIntegral>(
      res.r.size(), [&](std::size_t i) { return integrate_circle(profile, res.r[i], width, f, cfg); }, cfg.exec);

  bool finite = true, converged = true;
  for (std::size_t i = 0; i < res.r.size(); ++i) {
    double fine = 0.0, coarse = 0.0;
    for (std::size_t j = 0; j < std::min(primary, width); ++j) {
      fine = std::max(fine, parts[i].value[j]);
      coarse = std::max(coarse, parts[i].coarse[j]);
    }
    for (double v : parts[i].value) finite = finite && std::isfinite(v);
    converged = converged && parts[i].converged;
    res.value.push_back(fine);
    res.weighted.push_back((res.r[i] - 1.0) * fine);
    res.components.push_back(parts[i].value);
    res.refinement_delta = std::max(res.refinement_delta, relative_change(coarse, fine));
    if (res.weighted.back() > res.sup || i == 0) {
      res.sup = res.weighted.back();
      res.sup_r = res.r[i];
    }
  }
  if (!finite) {
    res.status = Status::inconclusive;
    res.note = "non-finite integral";
    res.refinement_delta = std::numeric_limits<double>::infinity();
  } else if (res.refinement_delta > cfg.stability_tol) {
    res.status = Status::inconclusive;
    res.note = "mesh halving changes the value beyond tolerance";
  } else {
    res.status = Status::certified;
    if (!converged) res.note = "panel budget reached before the requested accuracy";
  }
  return res;
}

void require_stable(const QuadratureResult& result, const QuadratureConfig& cfg) {
  if (!(result.refinement_delta <= cfg.stability_tol)) {
    std::ostringstream msg;
    msg << result.name << ": mesh halving changes the value by " << result.refinement_delta;
    throw Error(ErrorKind::QuadratureUnstable, msg.str());
  }
}

}  // namespace stabpert
