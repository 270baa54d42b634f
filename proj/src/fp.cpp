#include "kodm/fp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kodm/errors.hpp"
#include "kodm/rng.hpp"
#include "kodm/stats.hpp"

namespace kodm {

namespace {

constexpr long max_substeps = 10'000'000;

void check_grid(const FPGrid& grid, const char* where) {
  if (grid.bins < 8) throw std::domain_error(std::string(where) + ": too few bins");
  if (grid.mass.size() != static_cast<std::size_t>(grid.bins))
    throw std::domain_error(std::string(where) + ": mass size mismatch");
  double total = 0.0;
  for (double m : grid.mass) {
    if (m < 0.0) throw std::domain_error(std::string(where) + ": negative mass");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-8)
    throw std::domain_error(std::string(where) + ": mass does not sum to 1");
}

} // namespace

FPGrid FPGrid::uniform(int bins) {
  if (bins < 8) throw std::domain_error("FPGrid: too few bins");
  FPGrid g;
  g.bins = bins;
  g.mass.assign(bins, 1.0 / bins);
  return g;
}

double FPGrid::bin_center(int i) const {
  return -pi + (i + 0.5) * bin_width();
}

double FPGrid::bin_width() const { return two_pi / bins; }

OrderParameter grid_order_parameter(const FPGrid& grid) {
  double s = 0.0, c = 0.0;
  for (int i = 0; i < grid.bins; ++i) {
    const double th = grid.bin_center(i);
    s += grid.mass[i] * std::sin(th);
    c += grid.mass[i] * std::cos(th);
  }
  OrderParameter op;
  op.r = std::min(1.0, std::hypot(s, c));
  op.psi = op.r == 0.0 ? 0.0 : wrap(std::atan2(s, c));
  return op;
}

FPGrid fp_step(const FPGrid& grid, int t, const Schedule& sched,
               const OrderParameter& r_psi) {
  check_grid(grid, "fp_step");
  if (t < 0 || t >= sched.T)
    throw std::domain_error("fp_step: timestep out of range");
  const int B = grid.bins;
  const double dth = grid.bin_width();
  const double K = sched.coupling[t];
  const double K_ref = sched.ref_coupling[t];
  const double nv = sched.noise_var[t];  // 2 D_t
  const double D = sched.diffusion(t);

  // velocities at cell edges; edge i is the left edge of cell i
  std::vector<double> v(B);
  double vmax = 0.0;
  for (int i = 0; i < B; ++i) {
    const double th = -pi + i * dth;
    v[i] = K * r_psi.r * std::sin(r_psi.psi - th) +
           K_ref * std::sin(sched.psi_ref - th);
    vmax = std::max(vmax, std::abs(v[i]));
  }

  // sub-step so that max|v| dtau/dth < 0.5 and nv dtau/dth^2 < 0.5, plus a
  // joint bound that keeps the explicit update positivity-preserving
  const double need = std::max({2.0 * vmax / dth, 2.0 * nv / (dth * dth),
                                (vmax / dth + nv / (dth * dth)) / 0.9});
  const long n_sub = 1 + static_cast<long>(std::floor(need));
  if (n_sub > max_substeps)
    throw NumericError("fp_step: CFL requires more than " +
                       std::to_string(max_substeps) + " sub-steps at t = " +
                       std::to_string(t));
  const double dtau = 1.0 / static_cast<double>(n_sub);

  std::vector<double> m = grid.mass;
  std::vector<double> flux(B);
  std::vector<double> next(B);
  const double adv = dtau / dth;
  const double dif = dtau * D / (dth * dth);
  for (long s = 0; s < n_sub; ++s) {
    for (int i = 0; i < B; ++i) {
      const int left = i == 0 ? B - 1 : i - 1;
      flux[i] = v[i] > 0.0 ? v[i] * m[left] : v[i] * m[i];
    }
    for (int i = 0; i < B; ++i) {
      const int left = i == 0 ? B - 1 : i - 1;
      const int right = i == B - 1 ? 0 : i + 1;
      next[i] = m[i] + adv * (flux[i] - flux[right]) +
                dif * (m[right] - 2.0 * m[i] + m[left]);
    }
    m.swap(next);
  }

  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    if (m[i] < 0.0) {
      if (m[i] < -1e-12)
        throw NumericError("fp_step: negative mass at t = " + std::to_string(t));
      m[i] = 0.0;
    }
    total += m[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw NumericError("fp_step: mass drifted by more than 1e-9 at t = " +
                       std::to_string(t));
  for (double& mi : m) mi /= total;

  FPGrid out;
  out.bins = B;
  out.mass = std::move(m);
  return out;
}

std::vector<FPGrid> fp_solve(const FPGrid& initial, const Schedule& sched,
                             const CouplingMode& mode) {
  check_grid(initial, "fp_solve");
  if (mode.kind == CouplingMode::Kind::Frozen &&
      (mode.r < 0.0 || mode.r > 1.0))
    throw std::domain_error("fp_solve: frozen r must be in [0, 1]");
  std::vector<FPGrid> out;
  out.reserve(sched.T + 1);
  out.push_back(initial);
  for (int t = 0; t < sched.T; ++t) {
    const OrderParameter rp = mode.kind == CouplingMode::Kind::SelfConsistent
                                  ? grid_order_parameter(out.back())
                                  : OrderParameter{mode.r, wrap(mode.psi)};
    out.push_back(fp_step(out.back(), t, sched, rp));
  }
  return out;
}

FPGrid quasi_stationary_density(const Schedule& sched, int t, double r,
                                int bins) {
  if (t < 0 || t >= sched.T)
    throw std::domain_error("quasi_stationary_density: timestep out of range");
  if (r < 0.0 || r > 1.0)
    throw std::domain_error("quasi_stationary_density: r must be in [0, 1]");
  if (bins < 8) throw std::domain_error("quasi_stationary_density: too few bins");
  const double D = sched.diffusion(t);
  const double kappa = (sched.coupling[t] * r + sched.ref_coupling[t]) / D;
  FPGrid g;
  g.bins = bins;
  g.mass.resize(bins);
  double total = 0.0;
  for (int i = 0; i < bins; ++i) {
    // both cosine terms share psi_ref in the synchronized limit
    g.mass[i] = std::exp(kappa * (std::cos(sched.psi_ref - g.bin_center(i)) - 1.0));
    total += g.mass[i];
  }
  for (double& m : g.mass) m /= total;
  return g;
}

std::vector<TvReportRow> ensemble_vs_fp(std::size_t n_oscillators,
                                        const Schedule& sched,
                                        const CouplingTopology& topology,
                                        std::uint64_t seed, int hist_bins) {
  if (topology.kind != CouplingTopology::Kind::Global)
    throw std::domain_error("ensemble_vs_fp: Global topology required");
  if (n_oscillators < 1) throw std::domain_error("ensemble_vs_fp: empty ensemble");

  const auto init = rng::derive_stream(seed, rng::tag_init);
  std::vector<double> phases(n_oscillators);
  for (std::size_t i = 0; i < n_oscillators; ++i)
    phases[i] = wrap(-pi + two_pi * rng::u01(init, 0, i));
  PhaseField field = PhaseField::flat(std::move(phases));
  FPGrid grid = FPGrid::uniform();
  if (grid.bins % hist_bins != 0)
    throw std::domain_error("ensemble_vs_fp: hist_bins must divide 720");
  const std::uint64_t chain_seed = rng::derive_seed(seed, 1);

  std::vector<TvReportRow> report;
  report.reserve(sched.T + 1);
  for (int t = 0; t <= sched.T; ++t) {
    TvReportRow row;
    row.t = t;
    row.tv = stats::tv_mass(stats::histogram_mass(field.phases, hist_bins),
                            stats::coarsen_mass(grid.mass, hist_bins));
    report.push_back(row);
    if (t < sched.T) {
      field = forward_step(field, t, sched, topology, chain_seed);
      grid = fp_step(grid, t, sched, grid_order_parameter(grid));
    }
  }
  return report;
}

} // namespace kodm
