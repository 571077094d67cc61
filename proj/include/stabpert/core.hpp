#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace stabpert {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Error categories surfaced by the engines. Each maps onto one failure mode
/// named in the reports (e.g. a resolvent evaluated on the spectrum).
enum class ErrorKind {
  DimensionMismatch,
  SpectrumHit,
  RangeViolation,
  TailInconclusive,
  ResolutionTooCoarse,
  WindowTooNarrow,
  SingularD,
  SplitInfeasible,
  QuadratureUnstable,
  BracketInvalid,
  ParseError,
  ValidationError,
  IoError,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Reduces an angle to [0, 2*pi).
double wrap_angle(double phi);

/// Distance between two angles measured along the circle, in [0, pi].
double circular_distance(double a, double b);

/// Signed offset phi - center reduced to (-pi, pi].
double signed_offset(double phi, double center);

inline Complex unit(double phi) { return std::polar(1.0, phi); }

/// 1 / z without the overflow guards of the library division.
inline Complex reciprocal(Complex z) {
  const double d = z.real() * z.real() + z.imag() * z.imag();
  return {z.real() / d, -z.imag() / d};
}

}  // namespace stabpert
