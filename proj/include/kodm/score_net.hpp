#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kodm/phase.hpp"

namespace kodm {

enum class Arch { Mlp, LocalConv };

/// Desk-scale score-network shape. Mlp consumes the flattened (sin, cos)
/// embedding concatenated with the time embedding; LocalConv runs 3x3
/// convolutions over a 2-channel (sin, cos) lattice with per-channel affine
/// time modulation. horizon is the T the timestep input is normalized by.
struct NetConfig {
  Arch arch = Arch::Mlp;
  int input_sites = 0;
  int height = 1;
  int width = 0;  // lattice dims when arch == LocalConv
  std::vector<int> hidden;  // layer widths (Mlp) / channel counts (LocalConv)
  int time_embed_dim = 32;  // even
  int horizon = 100;
};

struct ScoreNet {
  NetConfig config;
  std::vector<double> params;
};

std::size_t param_count(const NetConfig& config);

/// 0-based index of the layer owning params[index]; for diagnostics.
int param_layer(const NetConfig& config, std::size_t index);

/// Hidden layers: uniform +-sqrt(6/(fan_in+fan_out)); final layer zero so the
/// initial score is identically 0.
ScoreNet make_score_net(const NetConfig& config, std::uint64_t init_seed);

/// Concatenated per-site (sin theta_i, cos theta_i) pairs, length 2n.
std::vector<double> embed_phases(const PhaseField& field);

/// Sinusoidal embedding of t/T at dim/2 geometric frequencies in [1, 1e4];
/// layout [sin..., cos...].
std::vector<double> time_embedding(int t, int T, int dim);

/// s_i = s1_i cos(theta_i) + s2_i sin(theta_i) where (s1, s2) are the two
/// per-site network outputs.
std::vector<double> score_forward(const ScoreNet& net, const PhaseField& field,
                                  int t);

/// Exact reverse-mode gradient of sum_i cotangent_i * s_i w.r.t. params.
std::vector<double> score_backward(const ScoreNet& net, const PhaseField& field,
                                   int t,
                                   const std::vector<double>& cotangent);

/// Activations retained by a forward pass for reuse in backward. Contents are
/// an implementation detail; treat as opaque.
struct ForwardTrace {
  std::vector<double> sin_t, cos_t;         // per-site input trig
  std::vector<double> temb;                 // time embedding
  std::vector<std::vector<double>> pre;     // per-layer pre-activations
  std::vector<std::vector<double>> post;    // per-layer activations (inputs incl.)
  std::vector<std::vector<double>> film_g;  // conv: per-layer channel scales
};

std::vector<double> score_forward_trace(const ScoreNet& net,
                                        const PhaseField& field, int t,
                                        ForwardTrace& trace);
/// Accumulates into grad (sized param_count).
void score_backward_trace(const ScoreNet& net, const ForwardTrace& trace,
                          const std::vector<double>& cotangent,
                          std::vector<double>& grad);

/// Checkpoint I/O ("KODM"): little-endian, TLV-encoded NetConfig, then raw
/// f64 params and optional EMA params. Writers are byte-deterministic.
void save_checkpoint(const ScoreNet& net, const std::vector<double>* ema,
                     const std::string& path);

struct Checkpoint {
  ScoreNet net;
  bool has_ema = false;
  std::vector<double> ema;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace kodm
