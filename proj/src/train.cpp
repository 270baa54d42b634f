#include "kodm/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kodm/errors.hpp"
#include "kodm/io.hpp"
#include "kodm/rng.hpp"
#include "kodm/wrapped_gaussian.hpp"

namespace kodm {

namespace {

// seed-chain tags separating independent random choices within a step
constexpr std::uint64_t pick_chan = 0;
constexpr std::uint64_t chain_chan = 1;
constexpr std::uint64_t dsm_chan = 2;
constexpr std::uint64_t val_chan = 0xA11;

struct ValProbe {
  PhaseField theta_prev;
  int t = 0;
  std::uint64_t seed = 0;
};

double validation_loss(const ScoreNet& ema_net,
                       const std::vector<ValProbe>& probes,
                       const Schedule& sched,
                       const CouplingTopology& topology, int M) {
  double acc = 0.0;
  for (const auto& probe : probes)
    acc += dsm_loss(ema_net, probe.theta_prev, probe.t, sched, topology, M,
                    probe.seed)
               .first;
  return acc / static_cast<double>(probes.size());
}

std::string loss_csv(const std::vector<TrainLogRow>& rows,
                     const std::string& run_record) {
  std::string out;
  if (!run_record.empty()) out += "# " + run_record + "\n";
  out += "step,t,loss,val_loss\n";
  for (const auto& row : rows) {
    out += std::to_string(row.step) + "," + std::to_string(row.t) + ",";
    if (row.step > 0) out += format_double(row.loss);
    out += ",";
    if (row.has_val) out += format_double(row.val_loss);
    out += "\n";
  }
  return out;
}

} // namespace

TrainState make_train_state(const NetConfig& config, std::uint64_t init_seed) {
  TrainState state;
  state.net = make_score_net(config, init_seed);
  state.ema_params = state.net.params;
  state.m.assign(state.net.params.size(), 0.0);
  state.v.assign(state.net.params.size(), 0.0);
  return state;
}

std::pair<double, std::vector<double>> dsm_loss(
    const ScoreNet& net, const PhaseField& theta_prev, int t,
    const Schedule& sched, const CouplingTopology& topology, int M,
    std::uint64_t seed) {
  if (t < 1 || t > sched.T)
    throw std::domain_error("dsm_loss: t must be in [1, T] (no transition into theta_0)");
  if (M < 1) throw std::domain_error("dsm_loss: M must be >= 1");
  const std::size_t n = theta_prev.size();

  const auto f = drift(theta_prev, t - 1, sched, topology);
  WrappedGaussianParams wg;
  wg.mean.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    wg.mean[i] = theta_prev.phases[i] + f[i];
  wg.variance = sched.noise_var[t - 1];
  wg.kind = theta_prev.kind;
  wg.height = theta_prev.height;
  wg.width = theta_prev.width;

  const double weight = sched.noise_var[std::min(t, sched.T - 1)];
  double loss = 0.0;
  std::vector<double> grad(net.params.size(), 0.0);
  std::vector<double> cotangent(n);
  ForwardTrace trace;
  for (int m = 0; m < M; ++m) {
    const PhaseField theta_t =
        wg_sample(wg, rng::derive_seed(seed, static_cast<std::uint64_t>(m)));
    const auto target = wg_score(theta_t, wg);
    const auto s = score_forward_trace(net, theta_t, t, trace);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double res = s[i] - target[i];
      sq += res * res;
      cotangent[i] = 2.0 * weight * res /
                     (static_cast<double>(n) * static_cast<double>(M));
    }
    loss += weight * sq / (static_cast<double>(n) * static_cast<double>(M));
    score_backward_trace(net, trace, cotangent, grad);
  }
  return {loss, std::move(grad)};
}

void optimizer_step(TrainState& state, const std::vector<double>& gradient,
                    const TrainConfig& config) {
  auto& params = state.net.params;
  if (gradient.size() != params.size())
    throw std::domain_error("optimizer_step: gradient size mismatch");
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    if (!std::isfinite(gradient[i]))
      throw NumericError(
          "optimizer_step: non-finite gradient at step " +
          std::to_string(state.step_count + 1) + ", layer " +
          std::to_string(param_layer(state.net.config, i)) +
          " (parameter " + std::to_string(i) + ")");
  }
  state.step_count += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * gradient[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * gradient[i] * gradient[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= config.learning_rate *
                 (mhat / (std::sqrt(vhat) + config.eps) +
                  config.weight_decay * params[i]);
  }
}

void ema_update(TrainState& state, double decay) {
  if (decay < 0.0 || decay >= 1.0)
    throw std::domain_error("ema_update: decay must be in [0, 1)");
  for (std::size_t i = 0; i < state.ema_params.size(); ++i)
    state.ema_params[i] =
        decay * state.ema_params[i] + (1.0 - decay) * state.net.params[i];
}

TrainState train(const std::vector<PhaseField>& dataset, const Schedule& sched,
                 const CouplingTopology& topology, const NetConfig& net_config,
                 const TrainConfig& train_config, const TrajectoryCache* cache,
                 std::vector<TrainLogRow>* log, const std::string& out_dir,
                 const std::string& run_record) {
  if (dataset.empty()) throw std::domain_error("train: empty dataset");
  if (cache) {
    if (cache->fingerprint != schedule_fingerprint(sched, topology))
      throw DataError("train: stale cache (schedule fingerprint mismatch)");
    if (cache->records.empty()) throw DataError("train: empty cache");
  }
  TrainState state = make_train_state(net_config, train_config.seed);
  const std::uint64_t seed = train_config.seed;
  std::vector<TrainLogRow> rows;

  auto flush_outputs = [&](bool final) {
    if (out_dir.empty()) return;
    if (final)
      save_checkpoint(state.net, &state.ema_params, out_dir + "/model.kodm");
    else
      save_checkpoint(state.net, &state.ema_params,
                      out_dir + "/ckpt_" + std::to_string(state.step_count) +
                          ".kodm");
    write_file_atomic(out_dir + "/loss.csv", loss_csv(rows, run_record));
  };

  if (train_config.max_steps <= 0) {
    flush_outputs(true);
    return state;
  }

  // fixed validation probes, evaluated with frozen EMA parameters
  std::vector<ValProbe> probes;
  if (train_config.val_interval > 0 && train_config.val_probes > 0) {
    probes.reserve(train_config.val_probes);
    for (int k = 0; k < train_config.val_probes; ++k) {
      const auto pick = rng::derive_stream(
          rng::derive_seed(seed, k, pick_chan, val_chan), rng::tag_train);
      const std::size_t item =
          rng::uniform_index(pick, 0, 0, dataset.size());
      const int t = 1 + static_cast<int>(rng::uniform_index(
                            pick, 0, 1, static_cast<std::uint64_t>(sched.T)));
      ValProbe probe;
      probe.t = t;
      probe.seed = rng::derive_seed(seed, k, dsm_chan, val_chan);
      probe.theta_prev =
          simulate_chain(dataset[item], t - 1, sched, topology,
                         rng::derive_seed(seed, k, chain_chan, val_chan));
      probes.push_back(std::move(probe));
    }
  }

  auto run_val = [&](long step) {
    if (probes.empty()) return;
    const ScoreNet ema_net{state.net.config, state.ema_params};
    const double val = validation_loss(ema_net, probes, sched, topology,
                                       train_config.mc_samples);
    if (rows.empty() || rows.back().step != step) {
      TrainLogRow row;
      row.step = step;
      rows.push_back(row);
    }
    rows.back().val_loss = val;
    rows.back().has_val = true;
  };

  run_val(0);

  std::vector<double> grad(state.net.params.size());
  for (long step = 1; step <= train_config.max_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    int logged_t = 0;
    for (int b = 0; b < train_config.batch_size; ++b) {
      const std::uint64_t su = static_cast<std::uint64_t>(step);
      const auto pick = rng::derive_stream(
          rng::derive_seed(seed, su, b, pick_chan), rng::tag_train);
      int t;
      PhaseField theta_prev = PhaseField::flat({0.0});
      if (cache) {
        const std::size_t rec =
            rng::uniform_index(pick, 0, 0, cache->records.size());
        t = static_cast<int>(cache->records[rec].t);
        theta_prev = cache->records[rec].field;
      } else {
        const std::size_t item =
            rng::uniform_index(pick, 0, 1, dataset.size());
        t = 1 + static_cast<int>(rng::uniform_index(
                    pick, 0, 2, static_cast<std::uint64_t>(sched.T)));
        theta_prev = simulate_chain(dataset[item], t - 1, sched, topology,
                                    rng::derive_seed(seed, su, b, chain_chan));
      }
      if (b == 0) logged_t = t;
      auto [item_loss, item_grad] =
          dsm_loss(state.net, theta_prev, t, sched, topology,
                   train_config.mc_samples,
                   rng::derive_seed(seed, su, b, dsm_chan));
      loss += item_loss;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += item_grad[i];
    }
    const double inv_b = 1.0 / static_cast<double>(train_config.batch_size);
    loss *= inv_b;
    for (double& g : grad) g *= inv_b;
    if (!std::isfinite(loss))
      throw NumericError("train: non-finite loss at step " +
                         std::to_string(step));

    if (train_config.grad_clip > 0.0) {
      double norm_sq = 0.0;
      for (double g : grad) norm_sq += g * g;
      const double norm = std::sqrt(norm_sq);
      if (norm > train_config.grad_clip) {
        const double scale = train_config.grad_clip / norm;
        for (double& g : grad) g *= scale;
      }
    }

    optimizer_step(state, grad, train_config);
    ema_update(state, train_config.ema_decay);

    TrainLogRow row;
    row.step = step;
    row.t = logged_t;
    row.loss = loss;
    rows.push_back(row);
    if (train_config.val_interval > 0 &&
        (step % train_config.val_interval == 0 ||
         step == train_config.max_steps))
      run_val(step);
    if (train_config.checkpoint_interval > 0 &&
        step % train_config.checkpoint_interval == 0 &&
        step != train_config.max_steps)
      flush_outputs(false);
  }

  flush_outputs(true);
  if (log) *log = std::move(rows);
  return state;
}

} // namespace kodm
