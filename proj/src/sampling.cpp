#include "kodm/sampling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kodm/errors.hpp"
#include "kodm/parallel.hpp"
#include "kodm/rng.hpp"

namespace kodm {

namespace {

PhaseField shaped(const FieldShape& shape, std::vector<double> values) {
  if (shape.kind == ShapeKind::Lattice)
    return PhaseField::lattice(shape.height, shape.width, std::move(values));
  return PhaseField::flat(std::move(values));
}

FieldShape shape_of(const PhaseField& field) {
  FieldShape s;
  s.kind = field.kind;
  s.height = field.height;
  s.width = field.width;
  s.sites = field.size();
  return s;
}

void check_reverse_t(int t, const Schedule& sched, const char* where) {
  if (t < 1 || t > sched.T)
    throw std::domain_error(std::string(where) + ": t must be in [1, T]");
}

std::vector<double> checked_score(const ScoreFn& score, const PhaseField& field,
                                  int t, const char* where) {
  auto s = score(field, t);
  if (s.size() != field.size())
    throw std::domain_error(std::string(where) + ": score size mismatch");
  return s;
}

// Displacement of the reverse ODE map at label t: the step is
// wrap(theta + b(theta)).
std::vector<double> ode_displacement(const ScoreFn& score,
                                     const PhaseField& field, int t,
                                     const Schedule& sched,
                                     const CouplingTopology& topology) {
  const auto f = drift(field, t - 1, sched, topology);
  const auto s = checked_score(score, field, t, "reverse_ode_step");
  const double D = sched.diffusion(t - 1);
  std::vector<double> b(field.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = -f[i] + D * s[i];
  return b;
}

} // namespace

PriorSpec PriorSpec::from_schedule(const Schedule& sched, double r_assumed) {
  if (r_assumed < 0.0 || r_assumed > 1.0)
    throw std::domain_error("PriorSpec: r_assumed must be in [0, 1]");
  const int last = sched.T - 1;
  PriorSpec prior;
  prior.vm.mu = sched.psi_ref;
  prior.vm.kappa = (sched.coupling[last] * r_assumed + sched.ref_coupling[last]) /
                   sched.diffusion(last);
  return prior;
}

ScoreFn net_score_fn(const ScoreNet& net, const std::vector<double>* ema_params) {
  ScoreNet snapshot = net;
  if (ema_params) {
    if (ema_params->size() != net.params.size())
      throw std::domain_error("net_score_fn: ema length mismatch");
    snapshot.params = *ema_params;
  }
  return [snapshot = std::move(snapshot)](const PhaseField& field, int t) {
    return score_forward(snapshot, field, t);
  };
}

PhaseField reverse_sde_step(const ScoreFn& score, const PhaseField& field,
                            int t, const Schedule& sched,
                            const CouplingTopology& topology,
                            std::uint64_t seed) {
  check_reverse_t(t, sched, "reverse_sde_step");
  const auto f = drift(field, t - 1, sched, topology);
  const auto s = checked_score(score, field, t, "reverse_sde_step");
  const double nv = sched.noise_var[t - 1];
  const double sigma = std::sqrt(nv);
  const auto stream = rng::derive_stream(seed, rng::tag_reverse);
  std::vector<double> out(field.size());
  parallel::parallel_for(field.size(), [&](std::size_t i) {
    const double eps = rng::normal(stream, static_cast<std::uint64_t>(t), i);
    out[i] = wrap(field.phases[i] - f[i] + nv * s[i] + sigma * eps);
  });
  return shaped(shape_of(field), std::move(out));
}

PhaseField reverse_ode_step(const ScoreFn& score, const PhaseField& field,
                            int t, const Schedule& sched,
                            const CouplingTopology& topology) {
  check_reverse_t(t, sched, "reverse_ode_step");
  const auto b = ode_displacement(score, field, t, sched, topology);
  std::vector<double> out(field.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = wrap(field.phases[i] + b[i]);
  return shaped(shape_of(field), std::move(out));
}

FieldShape FieldShape::of(const NetConfig& config) {
  FieldShape s;
  s.kind = config.arch == Arch::LocalConv ? ShapeKind::Lattice : ShapeKind::Flat;
  s.height = config.height;
  s.width = config.width;
  s.sites = static_cast<std::size_t>(config.input_sites);
  return s;
}

std::vector<PhaseField> generate(
    const ScoreFn& score, const Schedule& sched,
    const CouplingTopology& topology, std::size_t n_samples, SampleMode mode,
    const PriorSpec& prior, const FieldShape& shape, std::uint64_t seed,
    std::vector<std::vector<PhaseField>>* trajectories) {
  if (n_samples < 1) throw std::domain_error("generate: n_samples must be >= 1");
  if (shape.sites < 1) throw std::domain_error("generate: empty field shape");
  std::vector<PhaseField> out(n_samples, PhaseField::flat({0.0}));
  if (trajectories)
    trajectories->assign(n_samples, {});
  parallel::parallel_for(n_samples, [&](std::size_t j) {
    const std::uint64_t sample_seed = rng::derive_seed(seed, j);
    PhaseField terminal = von_mises_sample(prior.vm, shape.sites, sample_seed);
    PhaseField state = shaped(shape, std::move(terminal.phases));
    if (trajectories) {
      (*trajectories)[j].reserve(sched.T + 1);
      (*trajectories)[j].push_back(state);
    }
    for (int t = sched.T; t >= 1; --t) {
      state = mode == SampleMode::Sde
                  ? reverse_sde_step(score, state, t, sched, topology,
                                     sample_seed)
                  : reverse_ode_step(score, state, t, sched, topology);
      if (trajectories) (*trajectories)[j].push_back(state);
    }
    out[j] = std::move(state);
  });
  return out;
}

std::vector<PhaseField> generate(
    const ScoreNet& net, const std::vector<double>* ema_params,
    const Schedule& sched, const CouplingTopology& topology,
    std::size_t n_samples, SampleMode mode, const PriorSpec& prior,
    std::uint64_t seed, std::vector<std::vector<PhaseField>>* trajectories) {
  return generate(net_score_fn(net, ema_params), sched, topology, n_samples,
                  mode, prior, FieldShape::of(net.config), seed, trajectories);
}

double trace_exact(const DisplacementFn& b, const PhaseField& at, double eps) {
  const std::size_t n = at.size();
  const FieldShape shape = shape_of(at);
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> plus = at.phases, minus = at.phases;
    plus[i] += eps;
    minus[i] -= eps;
    const auto bp = b(shaped(shape, std::move(plus)));
    const auto bm = b(shaped(shape, std::move(minus)));
    tr += (bp[i] - bm[i]) / (2.0 * eps);
  }
  return tr;
}

double trace_hutchinson(const DisplacementFn& b, const PhaseField& at,
                        int probes, double eps, std::uint64_t seed,
                        double* stderr_out) {
  if (probes < 1)
    throw std::domain_error("trace_hutchinson: probes must be >= 1");
  const std::size_t n = at.size();
  const FieldShape shape = shape_of(at);
  const auto stream = rng::derive_stream(seed, rng::tag_nll);
  std::vector<double> estimates(probes);
  std::vector<double> dir(n);
  for (int p = 0; p < probes; ++p) {
    std::vector<double> plus = at.phases, minus = at.phases;
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] = rng::rademacher(stream, static_cast<std::uint64_t>(p), i);
      plus[i] += eps * dir[i];
      minus[i] -= eps * dir[i];
    }
    const auto bp = b(shaped(shape, std::move(plus)));
    const auto bm = b(shaped(shape, std::move(minus)));
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      dot += dir[i] * (bp[i] - bm[i]) / (2.0 * eps);
    estimates[p] = dot;
  }
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= probes;
  if (stderr_out) {
    if (probes == 1) {
      *stderr_out = 0.0;
    } else {
      double ss = 0.0;
      for (double e : estimates) ss += (e - mean) * (e - mean);
      *stderr_out = std::sqrt(ss / (static_cast<double>(probes) *
                                    (static_cast<double>(probes) - 1.0)));
    }
  }
  return mean;
}

NllResult nll(const ScoreFn& score, const PhaseField& theta0,
              const Schedule& sched, const CouplingTopology& topology,
              const PriorSpec& prior, const NllConfig& cfg,
              std::uint64_t seed) {
  if (cfg.probes < 1) throw std::domain_error("nll: probes must be >= 1");
  if (theta0.size() == 0) throw std::domain_error("nll: empty field");
  const FieldShape shape = shape_of(theta0);
  const std::size_t n = theta0.size();

  NllResult result;
  PhaseField state = theta0;
  double trace_sum = 0.0;
  for (int t = 1; t <= sched.T; ++t) {
    // invert wrap(theta + b(theta)) = state for theta (= theta_t)
    PhaseField guess = state;
    bool converged = false;
    for (int it = 0; it < cfg.max_fixed_point_iters; ++it) {
      const auto b = ode_displacement(score, guess, t, sched, topology);
      std::vector<double> next(n);
      for (std::size_t i = 0; i < n; ++i)
        next[i] = wrap(state.phases[i] - b[i]);
      double delta = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        delta = std::max(delta, circular_distance(next[i], guess.phases[i]));
      guess = shaped(shape, std::move(next));
      if (delta <= cfg.fixed_point_tol) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw NumericError("nll: fixed-point inversion did not converge at t = " +
                         std::to_string(t));

    const auto b_at = ode_displacement(score, guess, t, sched, topology);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = guess.phases[i] + b_at[i];
      if (raw < -pi || raw >= pi) result.seam_crossings += 1;
    }

    const DisplacementFn b_fn = [&](const PhaseField& field) {
      return ode_displacement(score, field, t, sched, topology);
    };
    trace_sum += trace_hutchinson(b_fn, guess, cfg.probes, cfg.jvp_epsilon,
                                  rng::derive_seed(seed, static_cast<std::uint64_t>(t)));
    state = std::move(guess);
  }

  // theta_{t-1} = g(theta_t) with g = id + b, so each step contributes
  // -log|det dg| ~ -trace(db/dtheta) to log p_0 relative to the prior.
  double prior_logp = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    prior_logp += von_mises_log_density(state.phases[i], prior.vm);
  result.nll = -(prior_logp - trace_sum);
  return result;
}

} // namespace kodm
