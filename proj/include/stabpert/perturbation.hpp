#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stabpert/geometry.hpp"
#include "stabpert/model.hpp"
#include "stabpert/report.hpp"
#include "stabpert/resolvent.hpp"

namespace stabpert {

/// Generator of one column of B or of C^*.
///
/// "smooth":   v_n = prod_l (1 - e^{-i phi_l} a_n)^mu * n^{-nu}, conjugated
///             when `conjugate` is set (diagonal models only)
/// "unit":     e_index
/// "explicit": the listed values, zero beyond them
struct ColumnRule {
  std::string id = "smooth";
  double mu = 1.0;
  double nu = 1.0;
  bool conjugate = false;
  std::size_t index = 1;
  std::vector<Complex> values;

  static ColumnRule smooth(double mu, double nu, bool conjugate = false) {
    ColumnRule r;
    r.mu = mu;
    r.nu = nu;
    r.conjugate = conjugate;
    return r;
  }
  static ColumnRule unit_vector(std::size_t index) {
    ColumnRule r;
    r.id = "unit";
    r.index = index;
    return r;
  }
  static ColumnRule explicit_values(std::vector<Complex> values) {
    ColumnRule r;
    r.id = "explicit";
    r.values = std::move(values);
    return r;
  }
  bool has_tail() const { return id == "smooth"; }
  bool operator==(const ColumnRule&) const = default;
};

/// Rank-p pair: B u = s_B sum_j u_j b_j and C x = s_C (<x, c_i>)_i.
struct FiniteRankPerturbation {
  double beta = 0.0;
  double gamma = 0.0;
  double scale_b = 1.0;
  double scale_c = 1.0;
  std::vector<ColumnRule> b_columns;
  std::vector<ColumnRule> c_columns;

  std::size_t rank() const { return b_columns.size(); }
  FiniteRankPerturbation scaled(double s) const {
    FiniteRankPerturbation p = *this;
    p.scale_b *= s;
    p.scale_c *= s;
    return p;
  }
  bool operator==(const FiniteRankPerturbation&) const = default;
};

void validate_perturbation(const OperatorModel& model, const FiniteRankPerturbation& pert);

/// Unscaled column entry for 1-based n.
Complex column_value(const OperatorModel& model, const ColumnRule& rule, std::uint64_t n);

/// Smooth-rule entry along the subsequence of point k at real index m.
Complex column_value_at(const OperatorModel& model, const ColumnRule& rule, std::size_t k, double m);

/// Operator norm of the p-column block (Lambda_k^{-theta} B) or, with
/// adjoint_side, ((Lambda_k^*)^{-theta} C^*). Exact head Gram plus a
/// dyadic tail sum for smooth columns. Throws RangeViolation on a divergent tail.
double smoothed_block_norm(const OperatorModel& model, const FiniteRankPerturbation& pert, std::size_t k,
                           double theta, bool adjoint_side);

struct SmoothedNorms {
  std::vector<double> b;  ///< ||Lambda_k^{-beta} B||
  std::vector<double> c;  ///< ||(Lambda_k^*)^{-gamma} C^*||
  double b_plain = 0.0;   ///< ||B||
  double c_plain = 0.0;   ///< ||C||
};

SmoothedNorms smoothed_norms(const OperatorModel& model, const FiniteRankPerturbation& pert,
                             const SpectralProfile& profile);

struct TransferMatrix {
  Complex lambda;
  CMatrix G;
  CMatrix D;
  CMatrix D_inverse;
  double rcond = 1.0;
  bool invertible = true;
  double g_norm = 0.0;
  double d_inverse_norm = 1.0;
};

/// A + BC on the model truncation, with the resolvent of A applied exactly
/// and the perturbation through its p columns. Safe for concurrent use.
class PerturbedSystem {
 public:
  PerturbedSystem(const OperatorModel& model, const FiniteRankPerturbation& pert,
                  double spectrum_floor = 1e-14);

  const OperatorModel& model() const { return *model_; }
  std::size_t rank() const { return static_cast<std::size_t>(b_.cols()); }
  const CMatrix& B() const { return b_; }
  const CMatrix& Cstar() const { return c_star_; }
  /// s_B * s_C; C R B scales linearly in it.
  double scale_product() const { return scale_product_; }

  CVector apply(const CVector& x) const;
  CMatrix dense() const;

  /// R(lambda, A) applied to the columns of B (n x p).
  CMatrix resolvent_columns(Complex lambda) const;
  /// R(lambda, A)^* applied to the columns of C^* (n x p).
  CMatrix adjoint_resolvent_columns(Complex lambda) const;
  TransferMatrix transfer(Complex lambda) const;

  /// Sherman-Morrison-Woodbury solve of (lambda - A - BC) y = x.
  CVector resolvent_apply(Complex lambda, const CVector& x) const;
  CVector resolvent_adjoint_apply(Complex lambda, const CVector& y) const;

  /// ||R(lambda, A+BC)|| on the truncation by power iteration, combined with
  /// the exact norm of R(lambda, A) on the entries beyond the truncation.
  double resolvent_norm(Complex lambda) const;

 private:
  const OperatorModel* model_;
  double floor_;
  double scale_product_ = 1.0;
  CMatrix b_;
  CMatrix c_star_;
  std::unique_ptr<SpectralSup> tail_;
};

CVector smw_resolvent_apply(const PerturbedSystem& sys, Complex lambda, const CVector& x);

struct TransferScan {
  CertificateReport region;      ///< sup over Omega_k of ||G||
  CertificateReport complement;  ///< sup over the complement grid
};

/// Transfer matrices G = C R(lambda, A) B on the circle, region and
/// complement grids at levels L and L+1. Reports for any rescaling of
/// (s_B, s_C) follow from G by the product of the scale factors.
struct TransferField {
  struct Level {
    ScanGrid grid;
    std::vector<Complex> points;  ///< circle, then each region, then complement
    std::vector<CMatrix> G;
    std::vector<double> g_norm;
    std::vector<std::size_t> region_begin;  ///< N + 1 offsets into points
    std::size_t complement_begin = 0;
  };
  Level levels[2];
  double product = 1.0;  ///< s_B * s_C of the system the field was built from
};

TransferField transfer_field(const PerturbedSystem& sys, const SpectralProfile& profile, const ScanConfig& cfg);

TransferScan transfer_bound_certify(const TransferField& field, double product, const FiniteRankPerturbation& pert,
                                    const SpectralProfile& profile, std::size_t k, const SmoothedNorms& norms,
                                    double M_1, double M_2, const OperatorModel& model, const ScanConfig& cfg);

/// Empirical M_R = sup_{Omega_k} ||G|| / (||Lambda_k^{-beta}B|| ||(Lambda_k^*)^{-gamma}C^*||).
TransferScan transfer_bound_certify(const PerturbedSystem& sys, const FiniteRankPerturbation& pert,
                                    const SpectralProfile& profile, std::size_t k, const SmoothedNorms& norms,
                                    double M_1, double M_2, const ScanConfig& cfg);

/// Newton iteration on det D(lambda) from `start`. Returns the root when it
/// converges to a point where D is numerically singular.
std::optional<Complex> singular_d_witness(const PerturbedSystem& sys, Complex start);

CertificateReport d_inverse_sup(const PerturbedSystem& sys, const SpectralProfile& profile, const ScanConfig& cfg);
/// Same scan from a precomputed field, rescaled to the products of `sys`.
CertificateReport d_inverse_sup(const TransferField& field, const PerturbedSystem& sys, const SpectralProfile& profile,
                                const ScanConfig& cfg);

struct SplitExponents {
  double beta1 = 0.0;
  double gamma1 = 0.0;
};

/// Proportional split beta1 + gamma1 = target within [0, beta] x [0, gamma].
SplitExponents proportional_split(double beta, double gamma, double target);

CertificateReport injectivity_factor_check(const PerturbedSystem& sys, const FiniteRankPerturbation& pert,
                                           const SpectralProfile& profile, std::size_t k, std::size_t samples,
                                           std::uint64_t seed, const std::vector<Complex>& truncation_eigs);

CertificateReport spectrum_inclusion_check(const SpectralProfile& profile, const CertificateReport& d_inverse,
                                           const std::vector<Complex>& truncation_eigs);

}  // namespace stabpert
