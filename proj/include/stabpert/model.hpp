#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stabpert/core.hpp"

namespace stabpert {

/// Parametric family generating the diagonal entries.
///
/// "polar_power": entries interleave over the declared unit points. Entry n
/// belongs to point k = (n-1) mod N with subsequence index m = (n-1)/N + 1 and
///   a_n = e^{i phi_k} (1 - c m^{-s}) e^{i d m^{-q}}.
/// The radial deficit c m^{-s} and the angular offset d m^{-q} both decrease
/// monotonically in m, which is what the tail enclosures rely on.
///
/// "explicit": only the explicit prefix; no tail.
struct EntryRule {
  std::string id = "explicit";
  double c = 1.0;
  double s = 1.0;
  double d = 1.0;
  double q = 1.0;

  static EntryRule polar_power(double c, double s, double d, double q) {
    return EntryRule{"polar_power", c, s, d, q};
  }
  static EntryRule explicit_entries() { return EntryRule{}; }

  bool operator==(const EntryRule&) const = default;
};

/// A power-bounded operator: an exact diagonal model (entries from a rule,
/// evaluated for any index) or a dense matrix. Immutable after construction.
class OperatorModel {
 public:
  enum class Kind { diagonal, dense };

  static OperatorModel diagonal(EntryRule rule, std::vector<Complex> prefix, std::size_t n_max,
                                std::vector<double> unit_points);
  static OperatorModel explicit_diagonal(std::vector<Complex> entries,
                                         std::vector<double> unit_points = {});
  static OperatorModel dense(CMatrix matrix, std::vector<double> unit_points = {});

  Kind kind() const { return kind_; }
  bool is_diagonal() const { return kind_ == Kind::diagonal; }

  /// Truncation dimension used by every vector-level operation.
  std::size_t dim() const { return dim_; }
  const std::vector<double>& unit_points() const { return unit_points_; }

  const EntryRule& rule() const { return rule_; }
  const std::vector<Complex>& prefix() const { return prefix_; }
  const CMatrix& matrix() const;

  /// Same model with a different truncation index (diagonal rule models).
  OperatorModel with_dim(std::size_t n_max) const;

  // -- diagonal access -----------------------------------------------------

  bool has_tail() const { return is_diagonal() && rule_.id == "polar_power"; }

  /// a_n for any n >= 1 (1-based).
  Complex entry(std::uint64_t n) const;

  /// 1 - e^{-i phi} a_n, computed without cancellation when phi is the limit
  /// angle of entry n.
  Complex gap(std::uint64_t n, double phi) const;

  /// a_1 ... a_dim.
  const CVector& head() const;

  // -- tail geometry (polar_power only) --------------------------------------

  std::size_t point_count() const { return unit_points_.size(); }
  /// Number of subsequence indices m of point k that lie inside the head.
  std::uint64_t head_count(std::size_t k) const;
  std::uint64_t global_index(std::size_t k, std::uint64_t m) const;
  /// delta with a = e^{i phi_k}(1 - delta) for subsequence index m (m may be
  /// any positive real, used for block enclosures).
  Complex defect(double m) const;
  Complex subsequence_entry(std::size_t k, double m) const;
  /// Upper bound on the arc length of the entry curve between m_lo and m_hi
  /// (m_hi < 0 means infinity, i.e. up to the limit point).
  double arc_bound(double m_lo, double m_hi) const;

  /// The truncation as a dense matrix (first n entries for diagonal models).
  CMatrix dense_matrix() const;

 private:
  OperatorModel() = default;
  void build_head();

  Kind kind_ = Kind::diagonal;
  EntryRule rule_;
  std::vector<Complex> prefix_;
  std::vector<double> unit_points_;
  std::size_t dim_ = 0;
  CVector head_;
  CMatrix matrix_;
};

/// Selects Lambda_k^theta = (1 - e^{-i phi_k} A)^theta, or its adjoint power
/// when conjugate is set.
struct FractionalFactor {
  std::size_t point_index = 0;
  double exponent = 0.0;
  bool conjugate = false;
};

CVector apply(const OperatorModel& model, const CVector& x);
CVector adjoint_apply(const OperatorModel& model, const CVector& x);
CVector orbit(const OperatorModel& model, const CVector& x, std::uint64_t n);

/// Solves (lambda - A) y = x. Throws SpectrumHit when lambda is within
/// spectrum_floor of the spectrum closure (diagonal) or the shifted matrix is
/// numerically singular (dense).
CVector resolvent_apply(const OperatorModel& model, Complex lambda, const CVector& x,
                        double spectrum_floor = 1e-14);

CVector fractional_apply(const OperatorModel& model, const FractionalFactor& factor,
                         const CVector& x);

/// Dense matrix of Lambda_k^theta (or its adjoint power) on the truncation.
CMatrix fractional_matrix(const OperatorModel& model, const FractionalFactor& factor);

/// sup over 1 <= n <= n_probe of ||A^n||.
double power_bound(const OperatorModel& model, int n_probe);

/// Raises ValidationError when an OperatorModel invariant fails.
void validate_model(const OperatorModel& model);

}  // namespace stabpert
