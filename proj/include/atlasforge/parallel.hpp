#pragma once

#include <cstddef>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace atlasforge {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Fixed-size block partition of [0, n). Blocks are processed in parallel but
// every block accumulates serially in index order and block results are merged
// in block order, so reductions built on this are bitwise identical for any
// thread count.
inline constexpr std::size_t kReductionBlock = 512;

inline std::size_t block_count(std::size_t n, std::size_t block = kReductionBlock) {
  return n == 0 ? 0 : (n + block - 1) / block;
}

template <class F>
void parallel_blocks(std::size_t n, F&& fn, std::size_t block = kReductionBlock) {
  const std::size_t nb = block_count(n, block);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long bi = 0; bi < static_cast<long long>(nb); ++bi) {
    const std::size_t begin = static_cast<std::size_t>(bi) * block;
    const std::size_t end = begin + block < n ? begin + block : n;
    fn(static_cast<std::size_t>(bi), begin, end);
  }
}

template <class F>
void parallel_for(std::size_t n, F&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

// Serial left-to-right sum in index order; the deterministic tail of every
// block reduction.
inline double ordered_sum(const double* values, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += values[i];
  return acc;
}

}  // namespace atlasforge
