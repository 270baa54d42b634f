#pragma once

#include <cstdint>
#include <vector>

#include "kodm/kuramoto.hpp"
#include "kodm/phase.hpp"
#include "kodm/schedule.hpp"

namespace kodm {

/// Discretized circular density: per-bin probability mass over `bins` equal
/// cells of [-pi, pi), summing to 1.
struct FPGrid {
  int bins = 720;
  std::vector<double> mass;

  static FPGrid uniform(int bins = 720);
  double bin_center(int i) const;
  double bin_width() const;
};

OrderParameter grid_order_parameter(const FPGrid& grid);

/// One schedule step of conservative upwind advection + central diffusion
/// with periodic boundaries, internally sub-stepped to satisfy
/// max|v| dtau/dtheta < 0.5 and noise_var dtau/dtheta^2 < 0.5.
FPGrid fp_step(const FPGrid& grid, int t, const Schedule& sched,
               const OrderParameter& r_psi);

struct CouplingMode {
  enum class Kind { SelfConsistent, Frozen };
  Kind kind = Kind::SelfConsistent;
  double r = 0.0;
  double psi = 0.0;

  static CouplingMode self_consistent() { return {Kind::SelfConsistent, 0, 0}; }
  static CouplingMode frozen(double r, double psi) {
    return {Kind::Frozen, r, psi};
  }
};

/// Densities over the whole schedule, length T+1 including the initial grid.
/// SelfConsistent recomputes (r, psi) from the current density each step.
std::vector<FPGrid> fp_solve(const FPGrid& initial, const Schedule& sched,
                             const CouplingMode& mode);

/// Analytic quasi-stationary density at slot t:
/// p ~ exp((K r / D) cos(psi_ref - theta) + (K_ref / D) cos(psi_ref - theta)).
FPGrid quasi_stationary_density(const Schedule& sched, int t, double r,
                                int bins = 720);

struct TvReportRow {
  int t = 0;
  double tv = 0.0;
};

/// Simulate an n-oscillator ensemble and the SelfConsistent PDE side by side
/// from uniform initial conditions; per-t TV between the ensemble histogram
/// (hist_bins cells) and the aggregated PDE density.
std::vector<TvReportRow> ensemble_vs_fp(std::size_t n_oscillators,
                                        const Schedule& sched,
                                        const CouplingTopology& topology,
                                        std::uint64_t seed, int hist_bins = 60);

} // namespace kodm
