#pragma once

#include <array>
#include <cstddef>
#include <vector>

#ifdef KODM_HAVE_OPENMP
#include <omp.h>
#endif

namespace kodm::parallel {

/// Active worker count: KODM_THREADS if set (clamped to >= 1), else all cores.
int max_threads();

/// Explicit override for tests; n = 0 restores the environment default.
void set_threads(int n);

/// Fixed block size for deterministic reductions. Partial sums are formed per
/// block and combined in block order, so results are bitwise identical for
/// any thread count.
inline constexpr std::size_t reduce_block = 1024;

template <class F>
void parallel_for(std::size_t n, F&& f) {
  if (n == 0) return;
#ifdef KODM_HAVE_OPENMP
  const int nt = max_threads();
  if (nt > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
      f(static_cast<std::size_t>(i));
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) f(i);
}

/// Deterministic blocked sum of term(i) for i in [0, n).
template <class Term>
double det_sum(std::size_t n, Term&& term) {
  if (n == 0) return 0.0;
  const std::size_t nblocks = (n + reduce_block - 1) / reduce_block;
  std::vector<double> partial(nblocks, 0.0);
  parallel_for(nblocks, [&](std::size_t b) {
    const std::size_t lo = b * reduce_block;
    const std::size_t hi = lo + reduce_block < n ? lo + reduce_block : n;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += term(i);
    partial[b] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Deterministic blocked sum of K accumulators at once; `fill(i, acc)` adds
/// element i's contributions into acc[0..K).
template <std::size_t K, class Fill>
std::array<double, K> det_sums(std::size_t n, Fill&& fill) {
  std::array<double, K> total{};
  if (n == 0) return total;
  const std::size_t nblocks = (n + reduce_block - 1) / reduce_block;
  std::vector<std::array<double, K>> partial(nblocks);
  parallel_for(nblocks, [&](std::size_t b) {
    const std::size_t lo = b * reduce_block;
    const std::size_t hi = lo + reduce_block < n ? lo + reduce_block : n;
    std::array<double, K> acc{};
    for (std::size_t i = lo; i < hi; ++i) fill(i, acc.data());
    partial[b] = acc;
  });
  for (const auto& p : partial)
    for (std::size_t k = 0; k < K; ++k) total[k] += p[k];
  return total;
}

} // namespace kodm::parallel
