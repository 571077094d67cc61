#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stabpert {

/// Execution policy for grid kernels. The serial path is the reference the
/// parallel path is tested against; both write results into index slots so
/// the output never depends on scheduling.
enum class Exec { serial, parallel };

/// Applies the thread cap from STABPERT_THREADS (if set). Returns the cap in
/// effect, or 0 when the runtime default is used.
int configure_threads_from_env();

int max_threads();

namespace detail {

template <class Fn>
void run_indexed_serial(std::size_t count, Fn&& fn) {
  for (std::size_t i = 0; i < count; ++i) fn(i);
}

template <class Fn>
void run_indexed_parallel(std::size_t count, Fn&& fn) {
#ifdef _OPENMP
  // Exceptions may not cross the parallel region; keep the one raised at the
  // lowest index so the rethrown error matches the serial order.
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 16)
  for (long long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
#else
  run_indexed_serial(count, fn);
#endif
}

}  // namespace detail

/// Evaluates fn(i) for i in [0, count) into out[i].
template <class T, class Fn>
std::vector<T> map_indexed(std::size_t count, Fn&& fn, Exec exec) {
  std::vector<T> out(count);
  auto body = [&](std::size_t i) { out[i] = fn(i); };
  if (exec == Exec::parallel)
    detail::run_indexed_parallel(count, body);
  else
    detail::run_indexed_serial(count, body);
  return out;
}

template <class Fn>
void for_indexed(std::size_t count, Fn&& fn, Exec exec) {
  if (exec == Exec::parallel)
    detail::run_indexed_parallel(count, fn);
  else
    detail::run_indexed_serial(count, fn);
}

}  // namespace stabpert
