#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kodm/kuramoto.hpp"
#include "kodm/score_net.hpp"

namespace kodm {

struct TrainConfig {
  double learning_rate = 1e-4;
  double ema_decay = 0.995;
  int mc_samples = 5;  // M
  int batch_size = 8;
  long max_steps = 0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 10.0;  // global norm; <= 0 disables
  std::uint64_t seed = 1;
  int val_interval = 500;
  int val_probes = 64;
  long checkpoint_interval = 0;  // 0 = final checkpoint only
};

struct TrainState {
  ScoreNet net;
  std::vector<double> ema_params;
  std::vector<double> m, v;  // optimizer moments
  long step_count = 0;
};

TrainState make_train_state(const NetConfig& config, std::uint64_t init_seed);

/// Draw M transition samples theta_t^m from theta_{t-1} and return the
/// Monte-Carlo DSM loss (weight noise_var, per-site mean) plus its exact
/// parameter gradient. t in [1, T].
std::pair<double, std::vector<double>> dsm_loss(
    const ScoreNet& net, const PhaseField& theta_prev, int t,
    const Schedule& sched, const CouplingTopology& topology, int M,
    std::uint64_t seed);

/// Bias-corrected adaptive moments with decoupled weight decay.
void optimizer_step(TrainState& state, const std::vector<double>& gradient,
                    const TrainConfig& config);

void ema_update(TrainState& state, double decay);

struct TrainLogRow {
  long step = 0;
  int t = 0;
  double loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
};

/// Alg.-style loop: per step, draw a batch of (theta_0, t) pairs, obtain
/// theta_{t-1} from the cache when given (else simulate), take one optimizer
/// step, update EMA. Writes checkpoints under out_dir when non-empty; appends
/// per-step rows to log when given. run_record, when non-empty, is emitted as
/// a leading comment in the loss CSV.
TrainState train(const std::vector<PhaseField>& dataset, const Schedule& sched,
                 const CouplingTopology& topology, const NetConfig& net_config,
                 const TrainConfig& train_config, const TrajectoryCache* cache,
                 std::vector<TrainLogRow>* log, const std::string& out_dir,
                 const std::string& run_record = "");

} // namespace kodm
