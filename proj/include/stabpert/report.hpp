#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "stabpert/core.hpp"

namespace stabpert {

enum class Status { certified, refuted, inconclusive };

const char* to_string(Status status);

struct GridMeta {
  std::size_t points = 0;
  double floor = 0.0;
  int refinement = 0;
  std::uint64_t hash = 0;
};

/// One certified, refuted or inconclusive bound. `bound` is the declared or
/// derived bound the supremum is compared against (absent when the check is
/// finiteness only). Auxiliary numbers go into `values` under stable keys.
struct CertificateReport {
  std::string name;
  double supremum = 0.0;
  Complex argmax{0.0, 0.0};
  std::optional<double> bound;
  GridMeta grid;
  double refinement_delta = 0.0;
  Status status = Status::inconclusive;
  std::string note;
  std::map<std::string, double> values;
  std::optional<Complex> witness;
};

/// Relative change |fine - coarse| / |fine| (0 when both vanish).
inline double relative_change(double coarse, double fine) {
  const double scale = std::max(std::abs(coarse), std::abs(fine));
  return scale == 0.0 ? 0.0 : std::abs(fine - coarse) / scale;
}

}  // namespace stabpert
