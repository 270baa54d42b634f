#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace kodm::rng {

/// Counter-based random stream (Philox4x32-10). A draw is a pure function of
/// (key, counter), so any parallel or out-of-order consumption produces the
/// same bits as a serial run. Streams are cheap value types.
struct Stream {
  std::uint64_t key = 0;
};

/// splitmix64 finalizer; good avalanche, used for key derivation.
std::uint64_t mix64(std::uint64_t x);

/// Derive an independent seed from a base seed plus up to three lane indices
/// (sample id, step, replica...). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

/// Derive the stream for one named consumer of a seed. Tags keep independent
/// consumers (chain noise, init, von Mises rejection...) off each other's bits.
Stream derive_stream(std::uint64_t seed, std::uint64_t tag);

/// One 128-bit counter block -> 128 random bits.
std::array<std::uint32_t, 4> philox4x32(const Stream& s, std::uint64_t ctr_hi,
                                        std::uint64_t ctr_lo);

/// Uniform double in [0, 1), 53-bit resolution.
double u01(const Stream& s, std::uint64_t ctr_hi, std::uint64_t ctr_lo);

/// Standard normal via Box-Muller (first variate of the pair).
double normal(const Stream& s, std::uint64_t ctr_hi, std::uint64_t ctr_lo);

/// Both Box-Muller variates from one counter block.
std::pair<double, double> normal_pair(const Stream& s, std::uint64_t ctr_hi,
                                      std::uint64_t ctr_lo);

/// +1 or -1.
int rademacher(const Stream& s, std::uint64_t ctr_hi, std::uint64_t ctr_lo);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(const Stream& s, std::uint64_t ctr_hi,
                            std::uint64_t ctr_lo, std::uint64_t n);

// Stream tags used across the library. Distinct consumers must not share one.
inline constexpr std::uint64_t tag_chain = 1;      // forward-chain noise
inline constexpr std::uint64_t tag_wg = 2;         // wrapped-Gaussian sampling
inline constexpr std::uint64_t tag_von_mises = 3;  // rejection sampler
inline constexpr std::uint64_t tag_init = 4;       // network initialization
inline constexpr std::uint64_t tag_train = 5;      // batch/timestep selection
inline constexpr std::uint64_t tag_reverse = 6;    // reverse-SDE noise
inline constexpr std::uint64_t tag_nll = 7;        // Hutchinson probes
inline constexpr std::uint64_t tag_data = 8;       // toy-dataset generation
inline constexpr std::uint64_t tag_cache = 9;      // cache timestep draws

} // namespace kodm::rng
