#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stabpert/core.hpp"
#include "stabpert/model.hpp"

namespace stabpert {

/// Weight w(a) = prod_l |1 - e^{-i phi_l} a|^{theta_l}, theta_l >= 0. The
/// empty weight (w = 1) gives the plain resolvent norm.
struct SpectralWeight {
  std::vector<double> phis;
  std::vector<double> exponents;

  static SpectralWeight none() { return {}; }
  static SpectralWeight single(double phi, double theta) { return {{phi}, {theta}}; }
  bool trivial() const;
};

struct SupResult {
  double value = 0.0;         ///< largest value found at an actual entry/limit point
  double upper = 0.0;         ///< proven upper bound; equals value once converged
  std::uint64_t argmax = 0;   ///< entry index, 0 for a limit point
  bool converged = true;
};

/// Exact suprema over the spectrum of a diagonal model:
///   sup_n w(a_n) / |lambda - a_n|
/// over all entries (head and infinite tail) and the limit points. The head
/// is scanned directly; the tail is searched branch-and-bound style over
/// dyadic index blocks, each enclosed in the annular sector spanned by its
/// polar coordinates. Blocks that cannot beat the current best are pruned, so
/// the result is exact whenever the search converges.
///
/// Holds a pointer to the model; the model must outlive this object.
class SpectralSup {
 public:
  SpectralSup(const OperatorModel& model, SpectralWeight weight, double spectrum_floor = 1e-14,
              std::size_t node_budget = 200000);

  SupResult evaluate(Complex lambda) const;
  /// Only entries beyond the truncation (n > dim).
  SupResult evaluate_tail(Complex lambda) const;
  /// sup_n w(a_n) without the resolvent factor.
  SupResult weight_sup() const;

  const SpectralWeight& weight() const { return weight_; }

 private:
  /// Subsequence indices [lo, hi] of point k; hi < 0 means unbounded.
  struct Block {
    std::size_t k;
    double lo;
    double hi;
  };
  /// Annular sector {rho e^{i theta}} in coordinates rotated so the limit
  /// point sits at 1.
  struct Sector {
    double r1, r2, t1, t2;
    double min_dist(Complex p) const;
    double max_dist(Complex p) const;
  };

  SupResult run(const Complex* lambda, bool include_head) const;
  double entry_weight(std::size_t k, double m) const;
  Sector block_sector(double lo, double hi) const;
  double enclosure_weight(std::size_t k, const Sector& sector) const;
  double block_bound(const Block& b, const Complex* lambda) const;
  /// Second-order data of the entry curve P(u), u = 1/m, over [u1, u2].
  struct CurveJet {
    Complex diff;     ///< P(u_c) - p at the midpoint
    Complex tangent;  ///< P'(u_c)
    double h = 0.0;   ///< half width
    double speed = 0.0;  ///< bound on |P'|
    double accel = 0.0;  ///< bound on |P''|
    double min_dist = 0.0;
  };
  CurveJet curve_jet(Complex p, double u1, double u2) const;
  double ratio_bound(std::size_t k, const Sector& sec, Complex p, const CurveJet& jet, double dist) const;

  const OperatorModel* model_;
  SpectralWeight weight_;
  double floor_;
  std::size_t budget_;
  std::vector<double> head_weight_sq_;
  std::vector<double> limit_weight_;
  std::vector<int> own_slot_;  // weight slot matching each unit point, -1 if none
};

}  // namespace stabpert
