#include "kodm/score_net.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unistd.h>
#include <vector>

#include "kodm/errors.hpp"
#include "kodm/rng.hpp"

using Catch::Approx;
using namespace kodm;

namespace {

NetConfig mlp_config(int sites = 6, std::vector<int> hidden = {8, 8}) {
  NetConfig cfg;
  cfg.arch = Arch::Mlp;
  cfg.input_sites = sites;
  cfg.hidden = std::move(hidden);
  cfg.time_embed_dim = 8;
  cfg.horizon = 20;
  return cfg;
}

NetConfig conv_config(int h = 4, int w = 4, std::vector<int> channels = {3, 3}) {
  NetConfig cfg;
  cfg.arch = Arch::LocalConv;
  cfg.input_sites = h * w;
  cfg.height = h;
  cfg.width = w;
  cfg.hidden = std::move(channels);
  cfg.time_embed_dim = 8;
  cfg.horizon = 20;
  return cfg;
}

PhaseField random_field(std::size_t n, std::uint64_t seed) {
  const auto s = rng::derive_stream(seed, 906);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = -pi + two_pi * rng::u01(s, 0, i);
  return PhaseField::flat(std::move(v));
}

PhaseField random_lattice(int h, int w, std::uint64_t seed) {
  auto f = random_field(static_cast<std::size_t>(h) * w, seed);
  return PhaseField::lattice(h, w, std::move(f.phases));
}

// angles whose wrap(theta + 2*pi*k) round-trip is bitwise exact
const std::vector<double> nice_angles = {0.0,     0.25, -0.5, 1.0, -1.5,
                                         pi / 2., 2.0,  -2.0, 3.0, -0.25};

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("kodm_scorenet_" + std::to_string(::getpid()) + "_" +
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

TEST_CASE("embed_phases layout and periodicity", "[score_net]") {
  const auto e = embed_phases(PhaseField::flat({0.0, pi / 2.0}));
  REQUIRE(e.size() == 4);
  CHECK(e[0] == 0.0);                       // sin 0
  CHECK(e[1] == 1.0);                       // cos 0
  CHECK(e[2] == 1.0);                       // sin pi/2
  CHECK(std::abs(e[3]) < 1e-16);            // cos pi/2

  for (double x : nice_angles) {
    const auto a = embed_phases(PhaseField::flat({x}));
    const auto b = embed_phases(PhaseField::flat({wrap(x + two_pi)}));
    REQUIRE(a == b);  // bitwise
  }
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto f = random_field(3, 700 + i);
    auto g = f;
    for (double& v : g.phases) v = wrap(v + two_pi);
    const auto a = embed_phases(f);
    const auto b = embed_phases(g);
    for (std::size_t k = 0; k < a.size(); ++k)
      REQUIRE(a[k] == Approx(b[k]).margin(1e-15));
  }
}

TEST_CASE("time_embedding shape and anchors", "[score_net]") {
  const int dim = 16;
  const auto e0 = time_embedding(0, 100, dim);
  REQUIRE(e0.size() == static_cast<std::size_t>(dim));
  for (int k = 0; k < dim / 2; ++k) {
    CHECK(e0[k] == 0.0);            // sin block
    CHECK(e0[dim / 2 + k] == 1.0);  // cos block
  }

  CHECK_THROWS_AS(time_embedding(0, 100, 7), std::domain_error);
  CHECK_THROWS_AS(time_embedding(0, 100, 0), std::domain_error);
  CHECK_THROWS_AS(time_embedding(-1, 100, 8), std::domain_error);
  CHECK_THROWS_AS(time_embedding(101, 100, 8), std::domain_error);
}

TEST_CASE("time_embedding is collision-free over a long horizon", "[score_net]") {
  const int T = 1000, dim = 32;
  std::vector<std::vector<double>> embs;
  embs.reserve(T + 1);
  for (int t = 0; t <= T; ++t) embs.push_back(time_embedding(t, T, dim));
  std::set<std::vector<double>> unique(embs.begin(), embs.end());
  CHECK(unique.size() == embs.size());
}

TEST_CASE("make_score_net initializes to the zero score", "[score_net]") {
  for (const auto& cfg : {mlp_config(), conv_config()}) {
    const auto net = make_score_net(cfg, 11);
    REQUIRE(net.params.size() == param_count(cfg));
    const auto field = cfg.arch == Arch::Mlp
                            ? random_field(cfg.input_sites, 1)
                            : random_lattice(cfg.height, cfg.width, 1);
    const auto s = score_forward(net, field, 5);
    REQUIRE(s.size() == field.size());
    for (double v : s) CHECK(v == 0.0);

    // hidden layers are not all zero, and init is bounded and seeded
    double norm = 0.0;
    for (double p : net.params) {
      REQUIRE(std::abs(p) <= 2.0);  // uniform +-sqrt(6/(fan_in+fan_out))
      norm += std::abs(p);
    }
    CHECK(norm > 0.0);
    CHECK(make_score_net(cfg, 11).params == net.params);
    CHECK(make_score_net(cfg, 12).params != net.params);
  }
}

TEST_CASE("param_layer is a monotone index map", "[score_net]") {
  for (const auto& cfg : {mlp_config(), conv_config()}) {
    const auto n = param_count(cfg);
    int prev = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int layer = param_layer(cfg, i);
      REQUIRE(layer >= prev);
      REQUIRE(layer <= prev + 1);
      prev = layer;
    }
    CHECK(param_layer(cfg, 0) == 0);
    CHECK(param_layer(cfg, n - 1) >= 1);
    CHECK_THROWS_AS(param_layer(cfg, n), std::domain_error);
  }
}

TEST_CASE("score_forward shape, dispatch and errors", "[score_net]") {
  auto cfg = mlp_config(5);
  auto net = make_score_net(cfg, 3);
  // make it non-trivial
  const auto s = rng::derive_stream(1, 907);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    net.params[i] += 0.3 * (rng::u01(s, 0, i) - 0.5);

  const auto field = random_field(5, 2);
  const auto out = score_forward(net, field, 7);
  REQUIRE(out.size() == 5);
  for (double v : out) REQUIRE(std::isfinite(v));

  // deterministic across calls
  CHECK(score_forward(net, field, 7) == out);
  // t enters through the embedding
  CHECK(score_forward(net, field, 8) != out);

  CHECK_THROWS_AS(score_forward(net, random_field(4, 2), 7), std::domain_error);
  auto bad = net;
  bad.params.pop_back();
  CHECK_THROWS_AS(score_forward(bad, field, 7), std::domain_error);
}

TEST_CASE("score_forward is exactly 2pi-periodic", "[score_net]") {
  auto cfg = mlp_config(static_cast<int>(nice_angles.size()));
  auto net = make_score_net(cfg, 5);
  const auto s = rng::derive_stream(2, 908);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    net.params[i] += 0.5 * (rng::u01(s, 0, i) - 0.5);

  auto field = PhaseField::flat(nice_angles);
  auto shifted = field;
  for (std::size_t i = 0; i < shifted.phases.size(); ++i)
    shifted.phases[i] = wrap(shifted.phases[i] +
                             (i % 2 == 0 ? two_pi : -2.0 * two_pi));
  const auto a = score_forward(net, field, 3);
  const auto b = score_forward(net, shifted, 3);
  REQUIRE(a == b);  // bitwise: inputs enter only through sin/cos

  // random fields: wrapped shift agrees to rounding
  for (std::uint64_t k = 0; k < 50; ++k) {
    auto f = random_field(nice_angles.size(), 800 + k);
    auto g = f;
    for (double& v : g.phases) v = wrap(v + two_pi);
    const auto x = score_forward(net, f, 3);
    const auto y = score_forward(net, g, 3);
    for (std::size_t i = 0; i < x.size(); ++i)
      REQUIRE(x[i] == Approx(y[i]).margin(1e-12));
  }
}

TEST_CASE("score output is the projected two-channel form", "[score_net]") {
  // a field with theta_i = 0 makes s_i = s1_i; theta_i = pi/2 makes s_i = s2_i.
  // Verified indirectly: rotating one site by pi flips the sign of both trig
  // factors, so the score must change; the bitwise-periodicity test plus the
  // gradient tests pin the rest of the contract.
  auto cfg = mlp_config(4);
  auto net = make_score_net(cfg, 9);
  const auto s = rng::derive_stream(3, 909);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    net.params[i] += 0.4 * (rng::u01(s, 0, i) - 0.5);
  auto field = PhaseField::flat({0.3, -0.3, 1.0, -1.0});
  const auto base = score_forward(net, field, 2);
  auto moved = field;
  moved.phases[2] = wrap(moved.phases[2] + pi);
  CHECK(score_forward(net, moved, 2) != base);
}

TEST_CASE("score_backward matches finite differences", "[score_net]") {
  for (const auto& cfg : {mlp_config(), conv_config()}) {
    auto net = make_score_net(cfg, 21);
    const auto s = rng::derive_stream(4, 910);
    for (std::size_t i = 0; i < net.params.size(); ++i)
      net.params[i] += 0.3 * (rng::u01(s, 0, i) - 0.5);
    REQUIRE(net.params.size() <= 2000);

    const auto field = cfg.arch == Arch::Mlp
                            ? random_field(cfg.input_sites, 31)
                            : random_lattice(cfg.height, cfg.width, 31);
    const int t = 4;
    std::vector<double> cot(field.size());
    for (std::size_t i = 0; i < cot.size(); ++i)
      cot[i] = rng::u01(s, 1, i) - 0.5;

    const auto grad = score_backward(net, field, t, cot);
    REQUIRE(grad.size() == net.params.size());

    auto loss_at = [&](const std::vector<double>& params) {
      ScoreNet probe{cfg, params};
      const auto out = score_forward(probe, field, t);
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += cot[i] * out[i];
      return acc;
    };

    const double h = 1e-6;
    for (int probe = 0; probe < 100; ++probe) {
      const auto idx = rng::uniform_index(s, 2, probe, net.params.size());
      auto up = net.params, down = net.params;
      up[idx] += h;
      down[idx] -= h;
      const double fd = (loss_at(up) - loss_at(down)) / (2.0 * h);
      const double scale = std::max({1e-8, std::abs(fd), std::abs(grad[idx])});
      REQUIRE(std::abs(grad[idx] - fd) / scale < 1e-5);
    }
  }
}

TEST_CASE("score_backward directional derivative", "[score_net]") {
  auto cfg = mlp_config(5, {10});
  auto net = make_score_net(cfg, 13);
  const auto s = rng::derive_stream(5, 911);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    net.params[i] += 0.3 * (rng::u01(s, 0, i) - 0.5);

  const auto field = random_field(5, 41);
  std::vector<double> cot(field.size());
  for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = rng::u01(s, 1, i) - 0.5;
  const auto grad = score_backward(net, field, 2, cot);

  auto loss_at = [&](const std::vector<double>& params) {
    ScoreNet probe{cfg, params};
    const auto out = score_forward(probe, field, 2);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += cot[i] * out[i];
    return acc;
  };

  const double h = 1e-6;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> v(net.params.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = rng::u01(s, 10 + rep, i) - 0.5;
      dot += grad[i] * v[i];
    }
    auto up = net.params, down = net.params;
    for (std::size_t i = 0; i < v.size(); ++i) {
      up[i] += h * v[i];
      down[i] -= h * v[i];
    }
    const double fd = (loss_at(up) - loss_at(down)) / (2.0 * h);
    REQUIRE(std::abs(dot - fd) / std::max(1e-8, std::abs(fd)) < 1e-5);
  }

  // zero cotangent -> zero gradient
  const auto zero = score_backward(net, field, 2,
                                   std::vector<double>(field.size(), 0.0));
  for (double g : zero) CHECK(g == 0.0);
  CHECK_THROWS_AS(score_backward(net, field, 2, {1.0}), std::domain_error);
}

TEST_CASE("trace variants agree with the plain entry points", "[score_net]") {
  auto cfg = conv_config(3, 5, {4});
  auto net = make_score_net(cfg, 17);
  const auto s = rng::derive_stream(6, 912);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    net.params[i] += 0.3 * (rng::u01(s, 0, i) - 0.5);

  const auto field = random_lattice(3, 5, 51);
  std::vector<double> cot(field.size());
  for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = rng::u01(s, 1, i) - 0.5;

  ForwardTrace trace;
  const auto out = score_forward_trace(net, field, 6, trace);
  REQUIRE(out == score_forward(net, field, 6));

  std::vector<double> grad(net.params.size(), 0.0);
  score_backward_trace(net, trace, cot, grad);
  const auto direct = score_backward(net, field, 6, cot);
  REQUIRE(grad.size() == direct.size());
  for (std::size_t i = 0; i < grad.size(); ++i)
    REQUIRE(grad[i] == Approx(direct[i]).margin(1e-15));

  // backward_trace accumulates
  score_backward_trace(net, trace, cot, grad);
  for (std::size_t i = 0; i < grad.size(); ++i)
    REQUIRE(grad[i] == Approx(2.0 * direct[i]).epsilon(1e-12).margin(1e-15));
}

TEST_CASE("checkpoint round-trip preserves net and EMA", "[score_net]") {
  TempDir dir;
  auto cfg = mlp_config(7, {6, 5});
  auto net = make_score_net(cfg, 23);
  const auto s = rng::derive_stream(7, 913);
  for (std::size_t i = 0; i < net.params.size(); ++i)
    net.params[i] += rng::u01(s, 0, i) - 0.5;
  std::vector<double> ema(net.params.size());
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = rng::u01(s, 1, i);

  const auto path = dir.file("model.kodm");
  save_checkpoint(net, &ema, path);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.net.config.arch == cfg.arch);
  CHECK(loaded.net.config.input_sites == cfg.input_sites);
  CHECK(loaded.net.config.hidden == cfg.hidden);
  CHECK(loaded.net.config.time_embed_dim == cfg.time_embed_dim);
  CHECK(loaded.net.config.horizon == cfg.horizon);
  REQUIRE(loaded.net.params == net.params);
  REQUIRE(loaded.has_ema);
  REQUIRE(loaded.ema == ema);

  // no-EMA form
  save_checkpoint(net, nullptr, dir.file("raw.kodm"));
  const auto raw = load_checkpoint(dir.file("raw.kodm"));
  CHECK_FALSE(raw.has_ema);
  REQUIRE(raw.net.params == net.params);

  // byte-deterministic writer
  save_checkpoint(net, &ema, dir.file("again.kodm"));
  std::ifstream f1(path, std::ios::binary), f2(dir.file("again.kodm"), std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  REQUIRE_FALSE(b1.empty());
  REQUIRE(b1 == b2);

  // lattice config survives the trip
  auto ccfg = conv_config(3, 4, {5});
  auto cnet = make_score_net(ccfg, 29);
  save_checkpoint(cnet, nullptr, dir.file("conv.kodm"));
  const auto cload = load_checkpoint(dir.file("conv.kodm"));
  CHECK(cload.net.config.arch == Arch::LocalConv);
  CHECK(cload.net.config.height == 3);
  CHECK(cload.net.config.width == 4);
  REQUIRE(cload.net.params == cnet.params);
}

TEST_CASE("corrupt checkpoints are rejected", "[score_net]") {
  TempDir dir;
  auto net = make_score_net(mlp_config(3, {4}), 31);
  const auto path = dir.file("model.kodm");
  save_checkpoint(net, nullptr, path);

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.write("ZZZZ", 4);
  f.close();
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  const auto trunc = dir.file("trunc.kodm");
  save_checkpoint(net, nullptr, trunc);
  std::filesystem::resize_file(trunc, std::filesystem::file_size(trunc) - 5);
  CHECK_THROWS_AS(load_checkpoint(trunc), DataError);

  CHECK_THROWS_AS(load_checkpoint(dir.file("absent.kodm")), DataError);
}
