#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kodm/kuramoto.hpp"
#include "kodm/score_net.hpp"

namespace kodm {

/// Terminal-state prior: von Mises at psi_ref with
/// kappa = (K(T-1) r_assumed + K_ref(T-1)) / D_{T-1}.
struct PriorSpec {
  VonMisesParams vm;

  static PriorSpec from_schedule(const Schedule& sched, double r_assumed = 1.0);
};

/// Score evaluated at a state with label t in [1, T]. Abstracted so oracle
/// scores (analytic densities) can drive the samplers in tests.
using ScoreFn = std::function<std::vector<double>(const PhaseField&, int)>;

/// Wrap a network (EMA parameters when given) as a ScoreFn.
ScoreFn net_score_fn(const ScoreNet& net,
                     const std::vector<double>* ema_params = nullptr);

/// theta_{t-1} = wrap(theta_t - f(theta_t) + noise_var * s(theta_t, t)
///                    + sqrt(noise_var) eps), coefficients at slot t-1.
PhaseField reverse_sde_step(const ScoreFn& score, const PhaseField& field,
                            int t, const Schedule& sched,
                            const CouplingTopology& topology,
                            std::uint64_t seed);

/// Deterministic variant with the halved score coefficient D = noise_var/2.
PhaseField reverse_ode_step(const ScoreFn& score, const PhaseField& field,
                            int t, const Schedule& sched,
                            const CouplingTopology& topology);

enum class SampleMode { Sde, Ode };

struct FieldShape {
  ShapeKind kind = ShapeKind::Flat;
  int height = 1;
  int width = 0;
  std::size_t sites = 0;

  static FieldShape of(const NetConfig& config);
};

/// theta_T ~ prior, then T reverse steps to theta_0. When trajectories is
/// given, it receives per-sample snapshots theta_T..theta_0.
std::vector<PhaseField> generate(
    const ScoreFn& score, const Schedule& sched,
    const CouplingTopology& topology, std::size_t n_samples, SampleMode mode,
    const PriorSpec& prior, const FieldShape& shape, std::uint64_t seed,
    std::vector<std::vector<PhaseField>>* trajectories = nullptr);

std::vector<PhaseField> generate(
    const ScoreNet& net, const std::vector<double>* ema_params,
    const Schedule& sched, const CouplingTopology& topology,
    std::size_t n_samples, SampleMode mode, const PriorSpec& prior,
    std::uint64_t seed,
    std::vector<std::vector<PhaseField>>* trajectories = nullptr);

struct NllConfig {
  int probes = 8;  // Hutchinson probes (Rademacher)
  double jvp_epsilon = 1e-5;
  int max_fixed_point_iters = 20;
  double fixed_point_tol = 1e-10;
};

struct NllResult {
  double nll = 0.0;            // nats, whole field
  long seam_crossings = 0;     // raw updates that left [-pi, pi)
};

/// -log p(theta_0) by mapping data to noise through the inverted reverse ODE
/// and accumulating Hutchinson trace estimates of the reverse drift Jacobian.
NllResult nll(const ScoreFn& score, const PhaseField& theta0,
              const Schedule& sched, const CouplingTopology& topology,
              const PriorSpec& prior, const NllConfig& cfg, std::uint64_t seed);

/// Trace helpers shared by tests: central-difference Jacobian probes of a
/// displacement map b(theta).
using DisplacementFn =
    std::function<std::vector<double>(const PhaseField&)>;

double trace_exact(const DisplacementFn& b, const PhaseField& at, double eps);

/// Returns the probe mean; stderr_out (when non-null) receives the standard
/// error across probes.
double trace_hutchinson(const DisplacementFn& b, const PhaseField& at,
                        int probes, double eps, std::uint64_t seed,
                        double* stderr_out = nullptr);

} // namespace kodm
