#include "kodm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace kodm::rng {

namespace {

constexpr std::uint32_t philox_m0 = 0xD2511F53u;
constexpr std::uint32_t philox_m1 = 0xCD9E8D57u;
constexpr std::uint32_t philox_w0 = 0x9E3779B9u;
constexpr std::uint32_t philox_w1 = 0xBB67AE85u;
constexpr double inv_2p53 = 1.0 / 9007199254740992.0;
constexpr double tau = 6.283185307179586476925286766559;

inline std::uint64_t join(std::uint32_t hi, std::uint32_t lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

inline double to_u01(std::uint32_t hi, std::uint32_t lo) {
  return static_cast<double>(join(hi, lo) >> 11) * inv_2p53;
}

} // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t s = mix64(base);
  s = mix64(s ^ mix64(a ^ 0xD1B54A32D192ED03ull));
  s = mix64(s ^ mix64(b ^ 0x8CB92BA72F3D8DD7ull));
  s = mix64(s ^ mix64(c ^ 0xAEF17502108EF2D9ull));
  return s;
}

Stream derive_stream(std::uint64_t seed, std::uint64_t tag) {
  return Stream{derive_seed(seed, tag, 0x9E6C63D0876A9A35ull)};
}

std::array<std::uint32_t, 4> philox4x32(const Stream& s, std::uint64_t ctr_hi,
                                        std::uint64_t ctr_lo) {
  std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
  std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
  std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
  std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
  std::uint32_t k0 = static_cast<std::uint32_t>(s.key);
  std::uint32_t k1 = static_cast<std::uint32_t>(s.key >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(philox_m0) * c0;
    const std::uint64_t p1 = static_cast<std::uint64_t>(philox_m1) * c2;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += philox_w0;
    k1 += philox_w1;
  }
  return {c0, c1, c2, c3};
}

double u01(const Stream& s, std::uint64_t ctr_hi, std::uint64_t ctr_lo) {
  const auto w = philox4x32(s, ctr_hi, ctr_lo);
  return to_u01(w[0], w[1]);
}

std::pair<double, double> normal_pair(const Stream& s, std::uint64_t ctr_hi,
                                      std::uint64_t ctr_lo) {
  const auto w = philox4x32(s, ctr_hi, ctr_lo);
  const double u1 = to_u01(w[0], w[1]);
  const double u2 = to_u01(w[2], w[3]);
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
  return {radius * std::cos(tau * u2), radius * std::sin(tau * u2)};
}

double normal(const Stream& s, std::uint64_t ctr_hi, std::uint64_t ctr_lo) {
  return normal_pair(s, ctr_hi, ctr_lo).first;
}

int rademacher(const Stream& s, std::uint64_t ctr_hi, std::uint64_t ctr_lo) {
  const auto w = philox4x32(s, ctr_hi, ctr_lo);
  return (w[0] & 1u) ? 1 : -1;
}

std::uint64_t uniform_index(const Stream& s, std::uint64_t ctr_hi,
                            std::uint64_t ctr_lo, std::uint64_t n) {
  if (n == 0) throw std::domain_error("uniform_index: n must be positive");
  const auto w = philox4x32(s, ctr_hi, ctr_lo);
  return join(w[0], w[1]) % n;
}

} // namespace kodm::rng
