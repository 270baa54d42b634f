#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kodm/phase.hpp"
#include "kodm/schedule.hpp"
#include "kodm/sha256.hpp"

namespace kodm {

struct CouplingTopology {
  enum class Kind { Global, Local, ReferenceOnly };
  Kind kind = Kind::Global;
  int radius = 2;  // Local window is (2*radius+1)^2 minus the center

  static CouplingTopology global() { return {Kind::Global, 0}; }
  static CouplingTopology local(int radius) { return {Kind::Local, radius}; }
  static CouplingTopology reference_only() { return {Kind::ReferenceOnly, 0}; }
};

/// Mean-field drift: K(t) r sin(psi - theta_i) + K_ref(t) sin(psi_ref - theta_i).
/// Equals the pairwise sum to within rounding; O(N).
std::vector<double> drift_global(const PhaseField& field, int t,
                                 const Schedule& sched);

/// O(N^2) pairwise sum, serial. Reference implementation for tests/bench.
std::vector<double> drift_global_pairwise(const PhaseField& field, int t,
                                          const Schedule& sched);

/// Windowed coupling on a Lattice, neighborhoods truncated at borders and
/// renormalized by the live neighbor count. Summed-area-table implementation.
std::vector<double> drift_local(const PhaseField& field, int t,
                                const Schedule& sched, int radius);

/// Naive per-site window loops, serial. Reference implementation.
std::vector<double> drift_local_reference(const PhaseField& field, int t,
                                          const Schedule& sched, int radius);

/// K_ref(t) sin(psi_ref - theta_i) only (the coupling-ablated process).
std::vector<double> drift_reference_only(const PhaseField& field, int t,
                                         const Schedule& sched);

std::vector<double> drift(const PhaseField& field, int t, const Schedule& sched,
                          const CouplingTopology& topology);

/// theta' = wrap(theta + drift + sqrt(noise_var[t]) eps), eps i.i.d. N(0,1).
/// Noise is keyed by (seed, t, site): thread-count independent, and chaining
/// steps reproduces simulate_chain exactly.
PhaseField forward_step(const PhaseField& field, int t, const Schedule& sched,
                        const CouplingTopology& topology, std::uint64_t seed);

/// Compose forward_step over t = 0..t_target-1.
PhaseField simulate_chain(const PhaseField& theta0, int t_target,
                          const Schedule& sched,
                          const CouplingTopology& topology, std::uint64_t seed);

struct SnrPoint {
  int t = 0;
  double r = 0.0;
  double psi = 0.0;
  double snr = 0.0;  // +inf at t = 0
};

/// Per-timestep pooled order parameter and circular correlation with theta_0:
/// c(t) = mean over the batch of |(1/N) sum_i e^{i(theta_t - theta_0)}|,
/// SNR(t) = c^2 / (1 - c^2).
std::vector<SnrPoint> empirical_snr(const std::vector<PhaseField>& theta0_batch,
                                    const Schedule& sched,
                                    const CouplingTopology& topology,
                                    std::uint64_t seed);

struct CacheRecord {
  std::uint64_t sample_id = 0;
  std::uint32_t t = 0;  // the record holds theta_{t-1} for this t
  PhaseField field;
};

struct TrajectoryCache {
  std::vector<CacheRecord> records;
  Sha256Digest fingerprint{};
};

Sha256Digest schedule_fingerprint(const Schedule& sched,
                                  const CouplingTopology& topology);

/// For each dataset item, draw samples_per_item timesteps t ~ U{1..T} and
/// store (id, t, theta_{t-1}) simulated with the item's derived seed.
TrajectoryCache precompute_cache(const std::vector<PhaseField>& dataset,
                                 const Schedule& sched,
                                 const CouplingTopology& topology,
                                 int samples_per_item, std::uint64_t seed);

void write_cache(const TrajectoryCache& cache, const std::string& path);

/// Structural read (magic/version/layout checked, fingerprint returned as-is).
TrajectoryCache read_cache(const std::string& path);

/// Read and reject on fingerprint mismatch against the given schedule+topology.
TrajectoryCache read_cache_checked(const std::string& path,
                                   const Schedule& sched,
                                   const CouplingTopology& topology);

} // namespace kodm
