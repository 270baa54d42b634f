#include "kodm/kuramoto.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unistd.h>
#include <vector>

#include "kodm/errors.hpp"
#include "kodm/parallel.hpp"
#include "kodm/rng.hpp"
#include "kodm/stats.hpp"
#include "kodm/wrapped_gaussian.hpp"

using Catch::Approx;
using namespace kodm;

namespace {

PhaseField random_field(std::size_t n, std::uint64_t seed) {
  const auto s = rng::derive_stream(seed, 902);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = -pi + two_pi * rng::u01(s, 0, i);
  return PhaseField::flat(std::move(v));
}

PhaseField random_lattice(int h, int w, std::uint64_t seed) {
  const auto s = rng::derive_stream(seed, 903);
  std::vector<double> v(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = -pi + two_pi * rng::u01(s, 0, i);
  return PhaseField::lattice(h, w, std::move(v));
}

Schedule test_schedule(int T = 10) {
  return linear_schedule(T, {0.01, 0.05}, {0.03, 0.03}, {0.045, 0.045}, 0.0);
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("kodm_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

} // namespace

TEST_CASE("drift_global hand-checked values", "[kuramoto]") {
  const auto sched = test_schedule();

  // synchronized at the reference: a fixed point
  const auto zero = drift_global(PhaseField::flat(std::vector<double>(16, 0.0)),
                                 0, sched);
  for (double d : zero) CHECK(d == Approx(0.0).margin(1e-15));

  // single oscillator: only the reference term acts
  const auto single = drift_global(PhaseField::flat({0.7}), 3, sched);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == Approx(0.045 * std::sin(-0.7)).margin(1e-15));

  // two oscillators, worked pairwise sum
  const auto pair = drift_global(PhaseField::flat({0.0, pi / 2.0}), 0, sched);
  REQUIRE(pair.size() == 2);
  CHECK(pair[0] == Approx(0.015).margin(1e-12));
  CHECK(pair[1] == Approx(-0.06).margin(1e-12));

  CHECK_THROWS_AS(drift_global(PhaseField::flat({0.0}), 10, sched),
                  std::domain_error);
  CHECK_THROWS_AS(drift_global(PhaseField::flat({0.0}), -1, sched),
                  std::domain_error);
}

TEST_CASE("mean-field form equals the pairwise sum", "[kuramoto]") {
  const auto sched = test_schedule();
  for (std::size_t n : {2u, 17u, 256u, 4096u}) {
    const auto field = random_field(n, 1000 + n);
    const auto fast = drift_global(field, 2, sched);
    const auto slow = drift_global_pairwise(field, 2, sched);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < n; ++i)
      REQUIRE(fast[i] == Approx(slow[i]).margin(1e-12));
  }
}

TEST_CASE("coupling conserves the phase sum", "[kuramoto]") {
  // K_ref = 0: pairwise antisymmetry makes the drifts sum to zero
  const auto sched = linear_schedule(4, {0.01, 0.01}, {0.5, 0.5}, {0.0, 0.0}, 0.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto field = random_field(333, seed);
    double total_fast = 0.0, total_slow = 0.0;
    for (double d : drift_global(field, 0, sched)) total_fast += d;
    for (double d : drift_global_pairwise(field, 0, sched)) total_slow += d;
    CHECK(std::abs(total_fast) < 1e-12);
    CHECK(std::abs(total_slow) < 1e-12);
  }
}

TEST_CASE("drift_local matches its reference implementation", "[kuramoto]") {
  const auto sched = test_schedule();
  for (int radius : {1, 2, 3}) {
    for (auto [h, w] : {std::pair{4, 4}, std::pair{7, 5}, std::pair{16, 16},
                        std::pair{1, 9}}) {
      const auto field = random_lattice(h, w, 7 * h + w + radius);
      const auto fast = drift_local(field, 1, sched, radius);
      const auto slow = drift_local_reference(field, 1, sched, radius);
      REQUIRE(fast.size() == slow.size());
      for (std::size_t i = 0; i < fast.size(); ++i)
        REQUIRE(fast[i] == Approx(slow[i]).margin(1e-12));
    }
  }
  CHECK_THROWS_AS(drift_local(PhaseField::flat({0.0, 0.1}), 0, sched, 1),
                  std::domain_error);
  CHECK_THROWS_AS(drift_local(random_lattice(4, 4, 9), 0, sched, 0),
                  std::domain_error);
}

TEST_CASE("drift_local hand-checked cases", "[kuramoto]") {
  const auto sched = linear_schedule(4, {0.01, 0.01}, {0.05, 0.05}, {0.0, 0.0}, 0.0);

  // constant field: coupling term vanishes
  const auto flat = drift_local(PhaseField::lattice(3, 3, std::vector<double>(9, 0.4)),
                                0, sched, 1);
  for (double d : flat) CHECK(d == Approx(0.0).margin(1e-15));

  // center 0, ring of pi/2, radius 1
  std::vector<double> ring(9, pi / 2.0);
  ring[4] = 0.0;
  const auto center = drift_local(PhaseField::lattice(3, 3, ring), 0, sched, 1);
  CHECK(center[4] == Approx(0.05).margin(1e-15));

  // checkerboard of {0, pi}: antipodal neighbors contribute sin(pi) = 0
  std::vector<double> board(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) board[r * 4 + c] = ((r + c) % 2) ? pi : 0.0;
  const auto cb = drift_local(PhaseField::lattice(4, 4, board), 0, sched, 1);
  for (double d : cb) CHECK(d == Approx(0.0).margin(1e-14));
}

TEST_CASE("drift dispatch and ReferenceOnly", "[kuramoto]") {
  const auto sched = test_schedule();
  const auto field = random_field(64, 10);

  const auto ref = drift(field, 1, sched, CouplingTopology::reference_only());
  for (std::size_t i = 0; i < field.size(); ++i)
    CHECK(ref[i] == Approx(sched.ref_coupling[1] * std::sin(-field.phases[i]))
                        .margin(1e-15));

  // ReferenceOnly equals Global with K forced to zero
  auto no_coupling = sched;
  std::fill(no_coupling.coupling.begin(), no_coupling.coupling.end(), 0.0);
  const auto global0 = drift(field, 1, no_coupling, CouplingTopology::global());
  for (std::size_t i = 0; i < field.size(); ++i)
    CHECK(ref[i] == Approx(global0[i]).margin(1e-15));

  // Global on a lattice treats it as flat
  const auto lat = random_lattice(8, 8, 11);
  const auto as_lattice = drift(lat, 1, sched, CouplingTopology::global());
  const auto as_flat = drift_global(PhaseField::flat(lat.phases), 1, sched);
  for (std::size_t i = 0; i < lat.size(); ++i)
    CHECK(as_lattice[i] == as_flat[i]);
}

TEST_CASE("joint rotation equivariance of the drift", "[kuramoto]") {
  const double c = 1.3;
  auto sched = test_schedule();
  auto shifted_sched = sched;
  shifted_sched.psi_ref = wrap(sched.psi_ref + c);

  const auto field = random_field(100, 21);
  auto shifted = field;
  for (double& v : shifted.phases) v = wrap(v + c);
  const auto base = drift(field, 2, sched, CouplingTopology::global());
  const auto rot = drift(shifted, 2, shifted_sched, CouplingTopology::global());
  for (std::size_t i = 0; i < field.size(); ++i)
    CHECK(rot[i] == Approx(base[i]).margin(1e-12));

  const auto lat = random_lattice(6, 6, 22);
  auto lat_shifted = lat;
  for (double& v : lat_shifted.phases) v = wrap(v + c);
  const auto lbase = drift(lat, 2, sched, CouplingTopology::local(2));
  const auto lrot = drift(lat_shifted, 2, shifted_sched, CouplingTopology::local(2));
  for (std::size_t i = 0; i < lat.size(); ++i)
    CHECK(lrot[i] == Approx(lbase[i]).margin(1e-12));
}

TEST_CASE("small-angle limit reduces to neighborhood averaging", "[kuramoto]") {
  // theta = eps * u: drift_local -> K * (window mean of theta - theta) + O(eps^3)
  const auto sched = linear_schedule(2, {0.01, 0.01}, {0.04, 0.04}, {0.0, 0.0}, 0.0);
  const int h = 12, w = 12, radius = 1;
  std::vector<double> u(h * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      u[r * w + c] = std::sin(0.6 * r) * std::cos(0.4 * c);

  auto max_error = [&](double eps) {
    std::vector<double> th(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) th[i] = eps * u[i];
    const auto field = PhaseField::lattice(h, w, th);
    const auto d = drift_local(field, 0, sched, radius);
    double worst = 0.0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double acc = 0.0;
        int count = 0;
        for (int dr = -radius; dr <= radius; ++dr)
          for (int dc = -radius; dc <= radius; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            acc += th[rr * w + cc];
            count += 1;
          }
        const double linear = 0.04 * (acc / count - th[r * w + c]);
        worst = std::max(worst, std::abs(d[r * w + c] - linear));
      }
    return worst;
  };

  const double e1 = max_error(0.2);
  const double e2 = max_error(0.1);
  CHECK(e1 / e2 > 6.0);  // cubic error term: halving eps cuts it ~8x
  CHECK(e1 / e2 < 10.0);
}

TEST_CASE("forward_step wraps, is seeded, and obeys the noise-free limit", "[kuramoto]") {
  const auto sched = test_schedule();
  const auto field = random_field(50, 30);

  const auto a = forward_step(field, 2, sched, CouplingTopology::global(), 99);
  const auto b = forward_step(field, 2, sched, CouplingTopology::global(), 99);
  REQUIRE(a.phases == b.phases);
  const auto c = forward_step(field, 2, sched, CouplingTopology::global(), 98);
  CHECK(a.phases != c.phases);
  for (double v : a.phases) {
    REQUIRE(v >= -pi);
    REQUIRE(v < pi);
  }

  // vanishing noise: the update is exactly drift
  auto quiet = sched;
  std::fill(quiet.noise_var.begin(), quiet.noise_var.end(), 1e-300);
  const auto det = forward_step(field, 2, quiet, CouplingTopology::global(), 99);
  const auto f = drift(field, 2, quiet, CouplingTopology::global());
  for (std::size_t i = 0; i < field.size(); ++i)
    CHECK(det.phases[i] == Approx(wrap(field.phases[i] + f[i])).margin(1e-14));
}

TEST_CASE("forward_step is thread-count invariant", "[kuramoto]") {
  const auto sched = test_schedule();
  const auto field = random_field(3000, 31);
  parallel::set_threads(1);
  const auto serial = forward_step(field, 1, sched, CouplingTopology::global(), 5);
  parallel::set_threads(4);
  const auto par = forward_step(field, 1, sched, CouplingTopology::global(), 5);
  parallel::set_threads(0);
  REQUIRE(serial.phases == par.phases);
}

TEST_CASE("forward_step increments follow the wrapped-normal law", "[kuramoto]") {
  // zero drift, one step: increment histogram vs the analytic density
  const double var = 0.5;
  const auto sched = linear_schedule(2, {var, var}, {0.0, 0.0}, {0.0, 0.0}, 0.0);
  const double theta0 = 0.3;
  const auto field = PhaseField::flat(std::vector<double>(100000, theta0));
  const auto stepped = forward_step(field, 0, sched, CouplingTopology::global(), 77);

  const auto emp = stats::histogram_mass(stepped.phases, 60);
  std::vector<double> ref(60);
  double norm = 0.0;
  for (int i = 0; i < 60; ++i) {
    const double theta = -pi + two_pi * (i + 0.5) / 60.0;
    ref[i] = std::exp(wg_log_density(theta, theta0, var));
    norm += ref[i];
  }
  for (double& v : ref) v /= norm;
  CHECK(stats::tv_mass(emp, ref) < 0.02);
}

TEST_CASE("simulate_chain composes forward steps", "[kuramoto]") {
  const auto sched = test_schedule(10);
  const auto theta0 = random_field(40, 40);
  const auto topo = CouplingTopology::global();

  const auto same = simulate_chain(theta0, 0, sched, topo, 3);
  REQUIRE(same.phases == theta0.phases);

  // chain to a, then continue stepwise to b: identical to one call
  const auto at_a = simulate_chain(theta0, 4, sched, topo, 3);
  auto cont = at_a;
  for (int t = 4; t < 9; ++t) cont = forward_step(cont, t, sched, topo, 3);
  const auto at_b = simulate_chain(theta0, 9, sched, topo, 3);
  REQUIRE(cont.phases == at_b.phases);

  CHECK_THROWS_AS(simulate_chain(theta0, 11, sched, topo, 3), std::domain_error);
  CHECK_THROWS_AS(simulate_chain(theta0, -1, sched, topo, 3), std::domain_error);
}

TEST_CASE("terminal synchrony under the 100-step global preset", "[kuramoto]") {
  // Uniform-random initial phases driven to the reference attractor. The
  // published coupling ranges produce partial synchrony at the horizon; the
  // band below pins the measured terminal order (see also the PDE oracle,
  // which lands at r ~ 0.47 from uniform initial mass).
  const auto sched = global_preset(100);
  const auto theta0 = random_field(1024, 50);
  const auto terminal = simulate_chain(theta0, 100, sched,
                                       CouplingTopology::global(), 51);
  const auto op = order_parameter(terminal);
  CHECK(op.r > 0.35);
  CHECK(op.r < 0.60);
  CHECK(circular_distance(op.psi, sched.psi_ref) < 0.15);
}

TEST_CASE("empirical_snr starts at +inf and decays", "[kuramoto]") {
  const auto sched = global_preset(100);
  std::vector<PhaseField> batch;
  for (std::uint64_t b = 0; b < 8; ++b) batch.push_back(random_field(256, 60 + b));
  const auto rows = empirical_snr(batch, sched, CouplingTopology::global(), 61);
  REQUIRE(rows.size() == 101);

  CHECK(rows[0].t == 0);
  CHECK(std::isinf(rows[0].snr));
  CHECK(rows[0].snr > 0.0);
  CHECK(rows[0].r < 0.2);           // uniform start
  CHECK(rows.back().snr < 0.05);    // terminal state forgets theta_0
  CHECK(rows.back().r > 0.3);       // but is partially ordered

  // window-5 smoothed SNR decays monotonically (skip the infinite head;
  // a small slack absorbs Monte-Carlo wiggle once SNR has collapsed)
  std::vector<double> smooth;
  for (std::size_t i = 1; i + 5 <= rows.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = i; j < i + 5; ++j) acc += rows[j].snr;
    smooth.push_back(acc / 5.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i)
    CHECK(smooth[i] <= smooth[i - 1] * 1.05 + 2e-3);

  CHECK_THROWS_AS(empirical_snr({}, sched, CouplingTopology::global(), 0),
                  std::domain_error);
}

TEST_CASE("precompute_cache record structure and determinism", "[kuramoto]") {
  const auto sched = test_schedule(10);
  const auto topo = CouplingTopology::global();
  std::vector<PhaseField> dataset;
  for (std::uint64_t i = 0; i < 5; ++i) dataset.push_back(random_field(12, 70 + i));

  const auto cache = precompute_cache(dataset, sched, topo, 4, 123);
  REQUIRE(cache.records.size() == 20);
  for (const auto& rec : cache.records) {
    REQUIRE(rec.t >= 1);
    REQUIRE(rec.t <= 10);
    REQUIRE(rec.sample_id < 5);
    REQUIRE(rec.field.size() == 12);
  }
  CHECK(cache.fingerprint == schedule_fingerprint(sched, topo));

  const auto again = precompute_cache(dataset, sched, topo, 4, 123);
  REQUIRE(again.records.size() == cache.records.size());
  for (std::size_t i = 0; i < cache.records.size(); ++i)
    REQUIRE(again.records[i].field.phases == cache.records[i].field.phases);

  // a record with t is the state at t-1: check against a direct simulation
  const auto& rec = cache.records[7];
  const auto direct = simulate_chain(dataset[rec.sample_id],
                                     static_cast<int>(rec.t) - 1, sched, topo,
                                     rng::derive_seed(123, rec.sample_id));
  REQUIRE(rec.field.phases == direct.phases);

  const auto empty = precompute_cache(dataset, sched, topo, 0, 123);
  CHECK(empty.records.empty());
  CHECK_THROWS_AS(precompute_cache({}, sched, topo, 4, 123), std::domain_error);
}

TEST_CASE("cache file round-trip is bit-identical", "[kuramoto]") {
  TempDir dir;
  const auto sched = test_schedule(10);
  const auto topo = CouplingTopology::local(2);
  std::vector<PhaseField> dataset;
  for (std::uint64_t i = 0; i < 3; ++i) dataset.push_back(random_lattice(4, 5, 80 + i));

  const auto cache = precompute_cache(dataset, sched, topo, 3, 9);
  const auto path = dir.file("traj.kodc");
  write_cache(cache, path);

  const auto loaded = read_cache(path);
  REQUIRE(loaded.records.size() == cache.records.size());
  CHECK(loaded.fingerprint == cache.fingerprint);
  for (std::size_t i = 0; i < cache.records.size(); ++i) {
    const auto& a = cache.records[i];
    const auto& b = loaded.records[i];
    CHECK(a.sample_id == b.sample_id);
    CHECK(a.t == b.t);
    CHECK(a.field.kind == b.field.kind);
    CHECK(a.field.height == b.field.height);
    CHECK(a.field.width == b.field.width);
    REQUIRE(a.field.phases == b.field.phases);
  }

  // same bytes when written twice
  write_cache(cache, dir.file("traj2.kodc"));
  std::ifstream f1(path, std::ios::binary), f2(dir.file("traj2.kodc"), std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE_FALSE(b1.empty());
  REQUIRE(b1 == b2);

  const auto checked = read_cache_checked(path, sched, topo);
  CHECK(checked.records.size() == cache.records.size());
}

TEST_CASE("stale or corrupt caches are rejected", "[kuramoto]") {
  TempDir dir;
  const auto sched = test_schedule(10);
  const auto topo = CouplingTopology::global();
  std::vector<PhaseField> dataset = {random_field(6, 90)};
  const auto cache = precompute_cache(dataset, sched, topo, 2, 9);
  const auto path = dir.file("traj.kodc");
  write_cache(cache, path);

  // different schedule -> stale
  const auto other = test_schedule(12);
  CHECK_THROWS_AS(read_cache_checked(path, other, topo), DataError);
  // different topology -> stale
  CHECK_THROWS_AS(read_cache_checked(path, sched, CouplingTopology::local(2)),
                  DataError);
  // same inputs -> accepted
  CHECK_NOTHROW(read_cache_checked(path, sched, topo));

  // corrupt magic
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.write("XXXX", 4);
  f.close();
  CHECK_THROWS_AS(read_cache(path), DataError);

  // truncated file
  const auto trunc = dir.file("trunc.kodc");
  write_cache(cache, trunc);
  std::filesystem::resize_file(trunc, std::filesystem::file_size(trunc) - 7);
  CHECK_THROWS_AS(read_cache(trunc), DataError);

  CHECK_THROWS_AS(read_cache(dir.file("missing.kodc")), DataError);
}

TEST_CASE("schedule_fingerprint separates inputs", "[kuramoto]") {
  const auto a = schedule_fingerprint(test_schedule(10), CouplingTopology::global());
  const auto b = schedule_fingerprint(test_schedule(11), CouplingTopology::global());
  const auto c = schedule_fingerprint(test_schedule(10), CouplingTopology::local(2));
  const auto d = schedule_fingerprint(test_schedule(10), CouplingTopology::local(3));
  CHECK(a != b);
  CHECK(a != c);
  CHECK(c != d);
  CHECK(a == schedule_fingerprint(test_schedule(10), CouplingTopology::global()));
}
