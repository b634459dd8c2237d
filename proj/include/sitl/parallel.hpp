#pragma once

#include <cstdint>

#ifdef SITL_WITH_OPENMP
#include <omp.h>
#endif

namespace sitl {

/// Data-parallel index loop. The body must write only to slots derived from
/// its own index so the result is bit-identical for any thread count; every
/// kernel in this codebase that goes through here also has a serial
/// reference twin (suffix `_serial`) compared against it in the tests.
template <typename Fn>
void parallel_for(std::int64_t n, const Fn& fn) {
#ifdef SITL_WITH_OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#else
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

template <typename Fn>
void serial_for(std::int64_t n, const Fn& fn) {
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

inline int max_threads() {
#ifdef SITL_WITH_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline double wall_time() {
#ifdef SITL_WITH_OPENMP
  return omp_get_wtime();
#else
  return 0.0;
#endif
}

}  // namespace sitl
