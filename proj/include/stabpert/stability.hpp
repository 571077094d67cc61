#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stabpert/geometry.hpp"
#include "stabpert/model.hpp"
#include "stabpert/perturbation.hpp"
#include "stabpert/quadrature.hpp"
#include "stabpert/report.hpp"
#include "stabpert/resolvent.hpp"

namespace stabpert {

// -- orbits ------------------------------------------------------------------

struct DecayTable {
  std::string name;
  std::vector<std::uint64_t> n;
  std::vector<double> norm;
  double initial_norm = 0.0;
  double threshold = 1e-3;
  std::uint64_t n_max = 0;
  std::optional<std::uint64_t> first_passage;
};

/// In-place step x <- T x.
using StepMap = std::function<void(CVector&)>;

/// ||T^n x|| at n = 0..10 and then about ten log-spaced n per decade up to
/// n_max, plus the first n with ||T^n x|| <= threshold ||x||.
DecayTable orbit_decay(const StepMap& step, const CVector& x, std::uint64_t n_max, double threshold);
DecayTable orbit_decay(const OperatorModel& model, const CVector& x, std::uint64_t n_max, double threshold);
DecayTable orbit_decay(const PerturbedSystem& sys, const CVector& x, std::uint64_t n_max, double threshold);

// -- integral criterion -------------------------------------------------------

/// Probe pairs (x_j, y_j), stored as columns supported on the first rows.
struct ProbeSet {
  CMatrix x;
  CMatrix y;
  std::size_t size() const { return static_cast<std::size_t>(x.cols()); }
  std::size_t support() const { return static_cast<std::size_t>(x.rows()); }
};

/// x = y = e_j for j < basis, then `random` seeded unit Gaussian pairs, all
/// supported on the first `support` coordinates.
ProbeSet make_probes(std::size_t basis, std::size_t random, std::size_t support, std::uint64_t seed);

/// Per probe, (r - 1) * integral of ||R(r e^{i phi}) x||^2 + ||R(r e^{i phi})^* y||^2.
QuadratureResult integral_criterion(const OperatorModel& model, const ProbeSet& probes,
                                    const SpectralProfile& profile, const QuadratureConfig& cfg);
QuadratureResult integral_criterion(const PerturbedSystem& sys, const ProbeSet& probes,
                                    const SpectralProfile& profile, const QuadratureConfig& cfg);

/// (r - 1) * integral of sum_j ||R b_j||^2 (or ||R^* b_j||^2 with adjoint).
QuadratureResult finite_rank_integral(const OperatorModel& model, const CMatrix& columns, bool adjoint,
                                      const SpectralProfile& profile, const QuadratureConfig& cfg);

// -- f_k majorant ---------------------------------------------------------------

/// f_k(lambda) = K ||R B_b1||^{1 - b1/alpha} ||R^* C_g1||^{1 - g1/alpha} with
/// B_b1 = Lambda_k^{-b1} B and C_g1 = (Lambda_k^*)^{-g1} C^*, b1 + g1 = alpha.
class FkMajorant {
 public:
  FkMajorant(const PerturbedSystem& sys, const FiniteRankPerturbation& pert, const SpectralProfile& profile,
             std::size_t k, double M_1);

  struct Terms {
    double rb = 0.0;        ///< ||R B||
    double cr = 0.0;        ///< ||C R||
    double rb_tilde = 0.0;  ///< ||R B_b1||
    double rc_tilde = 0.0;  ///< ||R^* C_g1||
    double fk = 0.0;
  };
  Terms terms(Complex lambda) const;
  double operator()(Complex lambda) const { return terms(lambda).fk; }

  std::size_t k() const { return k_; }
  double K() const { return K_; }
  double alpha() const { return alpha_; }
  const SplitExponents& split() const { return split_; }
  double exponent_b() const { return 1.0 - split_.beta1 / alpha_; }
  double exponent_c() const { return 1.0 - split_.gamma1 / alpha_; }
  double b_tilde_norm() const { return b_tilde_norm_; }
  double c_tilde_norm() const { return c_tilde_norm_; }
  double moment_b() const { return moment_b_; }
  double moment_c() const { return moment_c_; }
  double M_1() const { return M_1_; }
  const PerturbedSystem& system() const { return *sys_; }
  const CMatrix& B_tilde() const { return b_tilde_; }
  const CMatrix& C_tilde() const { return c_tilde_; }

 private:
  const PerturbedSystem* sys_;
  std::size_t k_;
  double alpha_;
  double M_1_;
  SplitExponents split_;
  double K_ = 0.0;
  double b_tilde_norm_ = 0.0;
  double c_tilde_norm_ = 0.0;
  double moment_b_ = 1.0;
  double moment_c_ = 1.0;
  CMatrix b_tilde_;
  CMatrix c_tilde_;
};

double fk_evaluate(const FkMajorant& fk, Complex lambda);

struct FkCertificate {
  CertificateReport report;      ///< M_k = sup |phi - phi_k|^alpha f_k(e^{i phi})
  QuadratureResult quadrature;   ///< (r - 1) * integral of f_k^2, plus the Hoelder factors
};

FkCertificate fk_properties_certify(const FkMajorant& fk, const SpectralProfile& profile, const ScanConfig& scan,
                                    const QuadratureConfig& quad);

/// The same certificate for (s_B, s_C) multiplied by (fb, fc).
FkCertificate rescale(const FkCertificate& cert, const SplitExponents& split, double alpha, double fb, double fc);

// -- perturbed growth ---------------------------------------------------------------

struct PerturbedGrowth {
  CertificateReport report;
  std::vector<CircleRow> rows;
};

/// |phi - phi_k|^alpha ||R(e^{i phi}, A+BC)|| near each point against
/// M_A + M_D M_k, and ||R(e^{i phi}, A+BC)|| elsewhere against
/// M_A + M_D ||B|| ||C|| M_A^2.
PerturbedGrowth perturbed_growth_certify(const PerturbedSystem& sys, const SpectralProfile& profile, double M_D,
                                         const std::vector<double>& M_k, const SmoothedNorms& norms,
                                         const ScanConfig& cfg);

// -- verdict --------------------------------------------------------------------------

enum class Verdict { preserved, violated, inconclusive };
const char* to_string(Verdict v);

struct StabilityConfig {
  ScanConfig scan;
  QuadratureConfig quadrature;
  std::uint64_t orbit_max = 100000;
  double orbit_threshold = 1e-3;
  std::size_t oracle_dim = 500;
  std::size_t basis_probes = 20;
  std::size_t random_probes = 20;
  std::size_t injectivity_samples = 8;
  std::uint64_t seed = 12345;
};

struct HypothesisCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct StabilityVerdict {
  Verdict verdict = Verdict::inconclusive;
  std::vector<HypothesisCheck> hypotheses;
  std::vector<CertificateReport> reports;
  std::vector<QuadratureResult> quadratures;
  std::vector<DecayTable> decay;
  std::vector<CircleRow> circle_rows;
  std::vector<CircleRow> perturbed_rows;
  std::vector<std::vector<RegionRow>> region_rows;
  std::map<std::string, double> constants;
  std::vector<std::string> errors;
  std::vector<std::string> reasons;
  std::optional<Complex> witness;

  const CertificateReport* find(const std::string& name) const;
};

/// Runs the full pipeline. The unperturbed certificates and every quantity
/// that scales exactly with (s_B, s_C) are computed once and reused across
/// run_scaled calls.
class StabilityPipeline {
 public:
  StabilityPipeline(OperatorModel model, SpectralProfile profile, FiniteRankPerturbation pert, StabilityConfig cfg);
  ~StabilityPipeline();
  StabilityPipeline(const StabilityPipeline&) = delete;
  StabilityPipeline& operator=(const StabilityPipeline&) = delete;

  StabilityVerdict run() const;
  StabilityVerdict run_scaled(double scale_b, double scale_c) const;

  const OperatorModel& model() const { return model_; }
  const SpectralProfile& profile() const { return profile_; }
  const FiniteRankPerturbation& perturbation() const { return pert_; }
  const StabilityConfig& config() const { return cfg_; }

 private:
  struct Cache;
  OperatorModel model_;
  SpectralProfile profile_;
  FiniteRankPerturbation pert_;
  StabilityConfig cfg_;
  std::unique_ptr<Cache> cache_;
};

StabilityVerdict stability_verdict(const OperatorModel& model, const SpectralProfile& profile,
                                   const FiniteRankPerturbation& pert, const StabilityConfig& cfg);

struct ThresholdResult {
  double initial_low = 0.0;
  double initial_high = 0.0;
  double s_low = 0.0;
  double s_high = 0.0;
  std::vector<std::pair<double, Verdict>> history;
  std::vector<std::pair<double, Verdict>> rechecks;
  bool monotone = true;
};

/// Bisection on s = s_B = s_C until s_high - s_low <= rel_width * (initial
/// width). Throws BracketInvalid unless verdict(lo) is preserved and
/// verdict(hi) is not.
ThresholdResult delta_threshold_search(const StabilityPipeline& pipeline, double lo, double hi,
                                       double rel_width = 1e-3, std::size_t rechecks = 5);

}  // namespace stabpert
