#include "stabpert/core.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "stabpert/parallel.hpp"
#include "stabpert/report.hpp"

namespace stabpert {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SpectrumHit: return "SpectrumHit";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::TailInconclusive: return "TailInconclusive";
    case ErrorKind::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case ErrorKind::WindowTooNarrow: return "WindowTooNarrow";
    case ErrorKind::SingularD: return "SingularD";
    case ErrorKind::SplitInfeasible: return "SplitInfeasible";
    case ErrorKind::QuadratureUnstable: return "QuadratureUnstable";
    case ErrorKind::BracketInvalid: return "BracketInvalid";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

const char* to_string(Status status) {
  switch (status) {
    case Status::certified: return "certified";
    case Status::refuted: return "refuted";
    case Status::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

double wrap_angle(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

double signed_offset(double phi, double center) {
  double d = std::fmod(phi - center, kTwoPi);
  if (d > kPi) d -= kTwoPi;
  if (d <= -kPi) d += kTwoPi;
  return d;
}

double circular_distance(double a, double b) { return std::abs(signed_offset(a, b)); }

int configure_threads_from_env() {
  const char* env = std::getenv("STABPERT_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  const int cap = std::atoi(env);
  if (cap <= 0) return 0;
#ifdef _OPENMP
  omp_set_num_threads(cap);
#endif
  return cap;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace stabpert
