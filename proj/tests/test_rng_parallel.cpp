#include "kodm/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "kodm/parallel.hpp"
#include "kodm/sha256.hpp"

using namespace kodm;

namespace {

struct ThreadGuard {
  ~ThreadGuard() { parallel::set_threads(0); }
};

} // namespace

// Published Philox4x32-10 known-answer vectors (Random123 test suite).
TEST_CASE("philox4x32 known-answer vectors", "[rng]") {
  using A4 = std::array<std::uint32_t, 4>;

  const auto zeros = rng::philox4x32(rng::Stream{0}, 0, 0);
  CHECK(zeros == A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

  const auto ones = rng::philox4x32(rng::Stream{0xffffffffffffffffull},
                                    0xffffffffffffffffull,
                                    0xffffffffffffffffull);
  CHECK(ones == A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

  // counter/key from the hex digits of pi
  const auto pi_digits = rng::philox4x32(rng::Stream{0x299f31d0a4093822ull},
                                         0x0370734413198a2eull,
                                         0x85a308d3243f6a88ull);
  CHECK(pi_digits == A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("mix64 matches the splitmix64 finalizer", "[rng]") {
  CHECK(rng::mix64(0) == 0xe220a8397b1dcdafull);   // first splitmix64 output
  CHECK(rng::mix64(rng::mix64(0)) != rng::mix64(1));
}

TEST_CASE("derive_seed separates lanes", "[rng]") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b)
      seen.insert(rng::derive_seed(42, a, b));
  CHECK(seen.size() == 400);  // no collisions over the grid

  // order of lane arguments matters
  CHECK(rng::derive_seed(1, 2, 3) != rng::derive_seed(1, 3, 2));
  CHECK(rng::derive_seed(1, 2) != rng::derive_seed(2, 1));
  // default trailing lanes equal explicit zeros
  CHECK(rng::derive_seed(5, 6) == rng::derive_seed(5, 6, 0, 0));
  // stable across calls
  CHECK(rng::derive_seed(7, 8, 9, 10) == rng::derive_seed(7, 8, 9, 10));
}

TEST_CASE("derive_stream separates consumers", "[rng]") {
  const auto a = rng::derive_stream(123, rng::tag_chain);
  const auto b = rng::derive_stream(123, rng::tag_wg);
  const auto c = rng::derive_stream(124, rng::tag_chain);
  CHECK(a.key != b.key);
  CHECK(a.key != c.key);
  CHECK(rng::derive_stream(123, rng::tag_chain).key == a.key);
}

TEST_CASE("u01 range and determinism", "[rng]") {
  const auto s = rng::derive_stream(3, rng::tag_chain);
  double lo = 1.0, hi = 0.0;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const double u = rng::u01(s, 0, i);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
  CHECK(rng::u01(s, 5, 6) == rng::u01(s, 5, 6));
  CHECK(rng::u01(s, 5, 6) != rng::u01(s, 6, 5));
}

TEST_CASE("u01 mean and variance match uniform", "[rng]") {
  const auto s = rng::derive_stream(4, rng::tag_chain);
  const std::size_t n = 200000;
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng::u01(s, 1, i);
    acc += u;
    acc2 += u * u;
  }
  const double mean = acc / n;
  const double var = acc2 / n - mean * mean;
  CHECK(mean == Catch::Approx(0.5).margin(0.002));
  CHECK(var == Catch::Approx(1.0 / 12.0).margin(0.002));
}

TEST_CASE("normal_pair moments and independence of lanes", "[rng]") {
  const auto s = rng::derive_stream(5, rng::tag_chain);
  const std::size_t n = 100000;
  double m1 = 0.0, m2 = 0.0, m4 = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = rng::normal_pair(s, 2, i);
    m1 += x + y;
    m2 += x * x + y * y;
    m4 += x * x * x * x + y * y * y * y;
    cross += x * y;
  }
  const double nn = 2.0 * n;
  CHECK(m1 / nn == Catch::Approx(0.0).margin(0.01));
  CHECK(m2 / nn == Catch::Approx(1.0).margin(0.01));
  CHECK(m4 / nn == Catch::Approx(3.0).margin(0.08));     // Gaussian kurtosis
  CHECK(cross / n == Catch::Approx(0.0).margin(0.01));   // pair decorrelated
  CHECK(rng::normal(s, 2, 0) == rng::normal_pair(s, 2, 0).first);
  for (std::uint64_t i = 0; i < 1000; ++i)
    REQUIRE(std::isfinite(rng::normal(s, 3, i)));
}

TEST_CASE("rademacher is a fair sign", "[rng]") {
  const auto s = rng::derive_stream(6, rng::tag_nll);
  long sum = 0;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const int v = rng::rademacher(s, 0, i);
    REQUIRE((v == 1 || v == -1));
    sum += v;
  }
  CHECK(std::abs(sum) < 1500);  // ~4.7 sigma
}

TEST_CASE("uniform_index bounds and error", "[rng]") {
  const auto s = rng::derive_stream(7, rng::tag_train);
  std::vector<long> counts(10, 0);
  for (std::uint64_t i = 0; i < 50000; ++i) {
    const auto k = rng::uniform_index(s, 0, i, 10);
    REQUIRE(k < 10);
    counts[k] += 1;
  }
  for (long c : counts) CHECK(std::abs(c - 5000) < 400);
  CHECK_THROWS_AS(rng::uniform_index(s, 0, 0, 0), std::domain_error);
  CHECK(rng::uniform_index(s, 0, 0, 1) == 0);
}

TEST_CASE("parallel_for covers every index once", "[parallel][rng]") {
  ThreadGuard guard;
  for (int nt : {1, 3}) {
    parallel::set_threads(nt);
    std::vector<std::atomic<int>> hits(4097);
    for (auto& h : hits) h.store(0);
    parallel::parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    for (const auto& h : hits) REQUIRE(h.load() == 1);
  }
  parallel::parallel_for(0, [&](std::size_t) { FAIL("must not be called"); });
}

TEST_CASE("det_sum is bitwise thread-count invariant", "[parallel][rng]") {
  ThreadGuard guard;
  const std::size_t n = 100003;  // not a multiple of the block size
  const auto s = rng::derive_stream(8, rng::tag_chain);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i)
    terms[i] = (rng::u01(s, 0, i) - 0.5) * std::pow(10.0, 6.0 * rng::u01(s, 1, i) - 3.0);

  parallel::set_threads(1);
  const double serial = parallel::det_sum(n, [&](std::size_t i) { return terms[i]; });
  const auto serial2 =
      parallel::det_sums<2>(n, [&](std::size_t i, double* acc) {
        acc[0] += terms[i];
        acc[1] += terms[i] * terms[i];
      });
  for (int nt : {2, 3, 8}) {
    parallel::set_threads(nt);
    const double par = parallel::det_sum(n, [&](std::size_t i) { return terms[i]; });
    REQUIRE(par == serial);  // bitwise, not approximate
    const auto par2 =
        parallel::det_sums<2>(n, [&](std::size_t i, double* acc) {
          acc[0] += terms[i];
          acc[1] += terms[i] * terms[i];
        });
    REQUIRE(par2[0] == serial2[0]);
    REQUIRE(par2[1] == serial2[1]);
  }
  CHECK(parallel::det_sum(0, [](std::size_t) { return 1.0; }) == 0.0);
}

TEST_CASE("max_threads override", "[parallel][rng]") {
  ThreadGuard guard;
  parallel::set_threads(5);
  CHECK(parallel::max_threads() == 5);
  parallel::set_threads(0);
  CHECK(parallel::max_threads() >= 1);
}

TEST_CASE("sha256 reference vectors", "[rng]") {
  CHECK(hex_digest(sha256(std::string{})) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(hex_digest(sha256(std::string{"abc"})) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // 56 bytes exercises the two-block padding path
  CHECK(hex_digest(sha256(std::string{
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"})) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  const std::string million(1000000, 'a');
  CHECK(hex_digest(sha256(million)) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}
