// Timings: OpenMP drift kernels vs their serial reference implementations,
// plus forward-chain throughput. Checks agreement before reporting.
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "kodm/kuramoto.hpp"
#include "kodm/parallel.hpp"
#include "kodm/rng.hpp"
#include "kodm/schedule.hpp"

namespace {

using namespace kodm;
namespace chrono = std::chrono;

PhaseField random_flat(std::size_t n, std::uint64_t seed) {
  const auto stream = rng::derive_stream(seed, rng::tag_init);
  std::vector<double> phases(n);
  for (std::size_t i = 0; i < n; ++i)
    phases[i] = wrap(-pi + two_pi * rng::u01(stream, 0, i));
  return PhaseField::flat(std::move(phases));
}

PhaseField random_lattice(int h, int w, std::uint64_t seed) {
  PhaseField f = random_flat(static_cast<std::size_t>(h) * w, seed);
  return PhaseField::lattice(h, w, std::move(f.phases));
}

template <typename F>
double time_ms(int reps, F&& fn) {
  const auto t0 = chrono::high_resolution_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = chrono::high_resolution_clock::now();
  return chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

} // namespace

int main() {
  const Schedule sched = global_preset(100);
  const int t = 50;
  std::cout << "threads " << parallel::max_threads() << "\n";

  {
    const std::size_t n = 100000;
    const PhaseField field = random_flat(n, 11);
    const auto fast = drift_global(field, t, sched);
    // reference is O(n^2); verify on a slice-sized field instead
    const PhaseField small = random_flat(2000, 12);
    const double diff = max_abs_diff(drift_global(small, t, sched),
                                     drift_global_pairwise(small, t, sched));
    const double ms_fast = time_ms(20, [&] { drift_global(field, t, sched); });
    const double ms_ref =
        time_ms(3, [&] { drift_global_pairwise(small, t, sched); });
    std::cout << "drift_global n=" << n << ": " << ms_fast
              << " ms (mean-field), pairwise n=2000: " << ms_ref
              << " ms, max |diff| " << diff << "\n";
    (void)fast;
  }

  {
    const int h = 256, w = 256, radius = 4;
    const PhaseField field = random_lattice(h, w, 13);
    const double diff =
        max_abs_diff(drift_local(field, t, sched, radius),
                     drift_local_reference(field, t, sched, radius));
    const double ms_fast =
        time_ms(10, [&] { drift_local(field, t, sched, radius); });
    const double ms_ref =
        time_ms(2, [&] { drift_local_reference(field, t, sched, radius); });
    std::cout << "drift_local " << h << "x" << w << " r=" << radius << ": "
              << ms_fast << " ms (summed-area), " << ms_ref
              << " ms (naive window), max |diff| " << diff << "\n";
  }

  {
    const std::size_t n = 100000;
    PhaseField field = random_flat(n, 14);
    const auto topo = CouplingTopology::global();
    const double ms =
        time_ms(5, [&] { field = forward_step(field, t, sched, topo, 15); });
    std::cout << "forward_step n=" << n << ": " << ms << " ms\n";
  }

  return 0;
}
