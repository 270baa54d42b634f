#include "kodm/score_net.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "kodm/detail/binio.hpp"
#include "kodm/errors.hpp"
#include "kodm/io.hpp"
#include "kodm/parallel.hpp"
#include "kodm/rng.hpp"

namespace kodm {

namespace {

void validate_config(const NetConfig& cfg) {
  if (cfg.input_sites < 1)
    throw std::domain_error("NetConfig: input_sites must be >= 1");
  if (cfg.hidden.empty())
    throw std::domain_error("NetConfig: hidden widths must be nonempty");
  for (int w : cfg.hidden)
    if (w < 1) throw std::domain_error("NetConfig: hidden width must be >= 1");
  if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0)
    throw std::domain_error("NetConfig: time_embed_dim must be even and >= 2");
  if (cfg.horizon < 1) throw std::domain_error("NetConfig: horizon must be >= 1");
  if (cfg.arch == Arch::LocalConv) {
    if (cfg.height < 1 || cfg.width < 1 ||
        cfg.height * cfg.width != cfg.input_sites)
      throw std::domain_error("NetConfig: lattice dims must match input_sites");
  }
}

// Flat parameter layout, one segment per layer. Mlp: weights (out x in) then
// bias. LocalConv hidden layers add per-channel affine time modulation
// (scale and shift read from the time embedding); the final conv has none.
struct Seg {
  std::size_t w = 0, b = 0, g = 0, s = 0;  // offsets
  int in = 0, out = 0;
  bool film = false;
};

std::vector<Seg> layout(const NetConfig& cfg) {
  std::vector<Seg> segs;
  std::size_t off = 0;
  if (cfg.arch == Arch::Mlp) {
    int in = 2 * cfg.input_sites + cfg.time_embed_dim;
    for (std::size_t l = 0; l <= cfg.hidden.size(); ++l) {
      const int out = l < cfg.hidden.size() ? cfg.hidden[l]
                                            : 2 * cfg.input_sites;
      Seg s;
      s.in = in;
      s.out = out;
      s.w = off;
      off += static_cast<std::size_t>(out) * in;
      s.b = off;
      off += out;
      segs.push_back(s);
      in = out;
    }
  } else {
    int in = 2;
    for (std::size_t l = 0; l <= cfg.hidden.size(); ++l) {
      const int out = l < cfg.hidden.size() ? cfg.hidden[l] : 2;
      Seg s;
      s.in = in;
      s.out = out;
      s.w = off;
      off += static_cast<std::size_t>(out) * in * 9;
      s.b = off;
      off += out;
      if (l < cfg.hidden.size()) {
        s.film = true;
        s.g = off;
        off += static_cast<std::size_t>(out) * cfg.time_embed_dim;
        s.s = off;
        off += static_cast<std::size_t>(out) * cfg.time_embed_dim;
      }
      segs.push_back(s);
      in = out;
    }
  }
  return segs;
}

std::size_t layout_size(const NetConfig& cfg) {
  const auto segs = layout(cfg);
  const Seg& last = segs.back();
  return last.b + last.out;  // final layer never carries modulation params
}

void check_field(const NetConfig& cfg, const PhaseField& field,
                 const char* where) {
  if (field.size() != static_cast<std::size_t>(cfg.input_sites))
    throw std::domain_error(std::string(where) + ": field size mismatch");
  if (cfg.arch == Arch::LocalConv &&
      (!field.is_lattice() || field.height != cfg.height ||
       field.width != cfg.width))
    throw std::domain_error(std::string(where) + ": lattice shape mismatch");
}

// y = W x + b, W row-major (out x in)
void dense_forward(const double* params, const Seg& seg,
                   const std::vector<double>& x, std::vector<double>& y) {
  y.assign(seg.out, 0.0);
  parallel::parallel_for(seg.out, [&](std::size_t r) {
    const double* row = params + seg.w + r * seg.in;
    double acc = params[seg.b + r];
    for (int j = 0; j < seg.in; ++j) acc += row[j] * x[j];
    y[r] = acc;
  });
}

// 3x3 convolution, zero padding, stride 1; channels stored planar (c, y, x).
void conv_forward(const double* params, const Seg& seg, int h, int w,
                  const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  y.assign(seg.out * plane, 0.0);
  parallel::parallel_for(seg.out * plane, [&](std::size_t idx) {
    const int co = static_cast<int>(idx / plane);
    const int p = static_cast<int>(idx % plane);
    const int py = p / w, px = p % w;
    double acc = params[seg.b + co];
    for (int ci = 0; ci < seg.in; ++ci) {
      const double* kn = params + seg.w + (static_cast<std::size_t>(co) * seg.in + ci) * 9;
      const double* in_plane = x.data() + ci * plane;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = py + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = px + dx;
          if (xx < 0 || xx >= w) continue;
          acc += kn[(dy + 1) * 3 + (dx + 1)] * in_plane[yy * w + xx];
        }
      }
    }
    y[idx] = acc;
  });
}

} // namespace

std::size_t param_count(const NetConfig& config) {
  validate_config(config);
  return layout_size(config);
}

int param_layer(const NetConfig& config, std::size_t index) {
  validate_config(config);
  if (index >= layout_size(config))
    throw std::domain_error("param_layer: index out of range");
  const auto segs = layout(config);
  for (std::size_t l = 0; l + 1 < segs.size(); ++l)
    if (index < segs[l + 1].w) return static_cast<int>(l);
  return static_cast<int>(segs.size()) - 1;
}

ScoreNet make_score_net(const NetConfig& config, std::uint64_t init_seed) {
  validate_config(config);
  ScoreNet net;
  net.config = config;
  net.params.assign(layout_size(config), 0.0);
  const auto segs = layout(config);
  const auto stream = rng::derive_stream(init_seed, rng::tag_init);
  for (std::size_t l = 0; l + 1 < segs.size(); ++l) {  // final layer stays 0
    const Seg& seg = segs[l];
    const int fan_in = config.arch == Arch::Mlp ? seg.in : seg.in * 9;
    const int fan_out = config.arch == Arch::Mlp ? seg.out : seg.out * 9;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t n_w = seg.b - seg.w;
    parallel::parallel_for(n_w, [&](std::size_t i) {
      net.params[seg.w + i] = limit * (2.0 * rng::u01(stream, l, i) - 1.0);
    });
    // modulation weights start at zero: scale 1, shift 0 (identity in time)
  }
  return net;
}

std::vector<double> embed_phases(const PhaseField& field) {
  std::vector<double> out(2 * field.size());
  parallel::parallel_for(field.size(), [&](std::size_t i) {
    out[2 * i] = std::sin(field.phases[i]);
    out[2 * i + 1] = std::cos(field.phases[i]);
  });
  return out;
}

std::vector<double> time_embedding(int t, int T, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::domain_error("time_embedding: dim must be even and >= 2");
  if (T < 1) throw std::domain_error("time_embedding: T must be >= 1");
  if (t < 0 || t > T)
    throw std::domain_error("time_embedding: t out of [0, T]");
  const int half = dim / 2;
  const double x = static_cast<double>(t) / static_cast<double>(T);
  std::vector<double> out(dim);
  for (int k = 0; k < half; ++k) {
    const double freq =
        half == 1 ? 1.0
                  : std::exp(std::log(1e4) * static_cast<double>(k) /
                             static_cast<double>(half - 1));
    out[k] = std::sin(freq * x);
    out[half + k] = std::cos(freq * x);
  }
  return out;
}

std::vector<double> score_forward_trace(const ScoreNet& net,
                                        const PhaseField& field, int t,
                                        ForwardTrace& trace) {
  const NetConfig& cfg = net.config;
  validate_config(cfg);
  check_field(cfg, field, "score_forward");
  if (net.params.size() != layout_size(cfg))
    throw std::domain_error("score_forward: params length mismatch");
  const std::size_t n = field.size();

  trace.sin_t.resize(n);
  trace.cos_t.resize(n);
  parallel::parallel_for(n, [&](std::size_t i) {
    trace.sin_t[i] = std::sin(field.phases[i]);
    trace.cos_t[i] = std::cos(field.phases[i]);
  });
  trace.temb = time_embedding(t, cfg.horizon, cfg.time_embed_dim);

  const auto segs = layout(cfg);
  trace.pre.assign(segs.size(), {});
  trace.post.assign(segs.size() + 1, {});
  trace.film_g.assign(segs.size(), {});
  const double* P = net.params.data();

  if (cfg.arch == Arch::Mlp) {
    auto& x0 = trace.post[0];
    x0.resize(2 * n + trace.temb.size());
    for (std::size_t i = 0; i < n; ++i) {
      x0[2 * i] = trace.sin_t[i];
      x0[2 * i + 1] = trace.cos_t[i];
    }
    std::copy(trace.temb.begin(), trace.temb.end(), x0.begin() + 2 * n);
    for (std::size_t l = 0; l < segs.size(); ++l) {
      dense_forward(P, segs[l], trace.post[l], trace.pre[l]);
      if (l + 1 < segs.size()) {
        auto& a = trace.post[l + 1];
        a.resize(trace.pre[l].size());
        parallel::parallel_for(a.size(), [&](std::size_t i) {
          a[i] = std::tanh(trace.pre[l][i]);
        });
      } else {
        trace.post[l + 1] = trace.pre[l];
      }
    }
  } else {
    const int h = cfg.height, w = cfg.width;
    const std::size_t plane = n;
    auto& x0 = trace.post[0];
    x0.resize(2 * plane);
    std::copy(trace.sin_t.begin(), trace.sin_t.end(), x0.begin());
    std::copy(trace.cos_t.begin(), trace.cos_t.end(), x0.begin() + plane);
    const int td = cfg.time_embed_dim;
    for (std::size_t l = 0; l < segs.size(); ++l) {
      const Seg& seg = segs[l];
      conv_forward(P, seg, h, w, trace.post[l], trace.pre[l]);
      if (seg.film) {
        auto& gam = trace.film_g[l];
        gam.resize(seg.out);
        std::vector<double> beta(seg.out);
        for (int c = 0; c < seg.out; ++c) {
          double g = 1.0, b = 0.0;
          for (int k = 0; k < td; ++k) {
            g += P[seg.g + static_cast<std::size_t>(c) * td + k] * trace.temb[k];
            b += P[seg.s + static_cast<std::size_t>(c) * td + k] * trace.temb[k];
          }
          gam[c] = g;
          beta[c] = b;
        }
        auto& a = trace.post[l + 1];
        a.resize(trace.pre[l].size());
        parallel::parallel_for(a.size(), [&](std::size_t i) {
          const int c = static_cast<int>(i / plane);
          a[i] = std::tanh(gam[c] * trace.pre[l][i] + beta[c]);
        });
      } else {
        trace.post[l + 1] = trace.pre[l];
      }
    }
  }

  const auto& out = trace.post.back();
  std::vector<double> score(n);
  if (cfg.arch == Arch::Mlp) {
    parallel::parallel_for(n, [&](std::size_t i) {
      score[i] = out[2 * i] * trace.cos_t[i] + out[2 * i + 1] * trace.sin_t[i];
    });
  } else {
    parallel::parallel_for(n, [&](std::size_t i) {
      score[i] = out[i] * trace.cos_t[i] + out[n + i] * trace.sin_t[i];
    });
  }
  return score;
}

void score_backward_trace(const ScoreNet& net, const ForwardTrace& trace,
                          const std::vector<double>& cotangent,
                          std::vector<double>& grad) {
  const NetConfig& cfg = net.config;
  const std::size_t n = trace.sin_t.size();
  if (cotangent.size() != n)
    throw std::domain_error("score_backward: cotangent size mismatch");
  if (grad.size() != net.params.size())
    throw std::domain_error("score_backward: grad size mismatch");
  const auto segs = layout(cfg);
  const double* P = net.params.data();
  const int td = cfg.time_embed_dim;

  // d(loss)/d(network output) from s_i = s1_i cos + s2_i sin
  std::vector<double> d_out(trace.post.back().size());
  if (cfg.arch == Arch::Mlp) {
    for (std::size_t i = 0; i < n; ++i) {
      d_out[2 * i] = cotangent[i] * trace.cos_t[i];
      d_out[2 * i + 1] = cotangent[i] * trace.sin_t[i];
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      d_out[i] = cotangent[i] * trace.cos_t[i];
      d_out[n + i] = cotangent[i] * trace.sin_t[i];
    }
  }

  std::vector<double> d_post = std::move(d_out);
  for (std::size_t li = segs.size(); li-- > 0;) {
    const Seg& seg = segs[li];
    std::vector<double> d_pre;  // gradient at the raw layer output
    if (li + 1 == segs.size()) {
      d_pre = std::move(d_post);
    } else if (cfg.arch == Arch::Mlp) {
      const auto& a = trace.post[li + 1];
      d_pre.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        d_pre[i] = d_post[i] * (1.0 - a[i] * a[i]);
    } else {
      const auto& a = trace.post[li + 1];
      const auto& gam = trace.film_g[li];
      const std::size_t plane = n;
      std::vector<double> d_mod(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        d_mod[i] = d_post[i] * (1.0 - a[i] * a[i]);
      // scale/shift gradients route into the modulation weight blocks
      for (int c = 0; c < seg.out; ++c) {
        double dg = 0.0, db = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          dg += d_mod[c * plane + p] * trace.pre[li][c * plane + p];
          db += d_mod[c * plane + p];
        }
        for (int k = 0; k < td; ++k) {
          grad[seg.g + static_cast<std::size_t>(c) * td + k] += dg * trace.temb[k];
          grad[seg.s + static_cast<std::size_t>(c) * td + k] += db * trace.temb[k];
        }
      }
      d_pre.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        d_pre[i] = d_mod[i] * gam[i / plane];
    }

    const auto& x = trace.post[li];
    if (cfg.arch == Arch::Mlp) {
      parallel::parallel_for(seg.out, [&](std::size_t r) {
        double* g_row = grad.data() + seg.w + r * seg.in;
        const double d = d_pre[r];
        for (int j = 0; j < seg.in; ++j) g_row[j] += d * x[j];
        grad[seg.b + r] += d;
      });
      if (li > 0) {
        std::vector<double> d_x(seg.in, 0.0);
        parallel::parallel_for(seg.in, [&](std::size_t j) {
          double acc = 0.0;
          for (int r = 0; r < seg.out; ++r)
            acc += P[seg.w + static_cast<std::size_t>(r) * seg.in + j] * d_pre[r];
          d_x[j] = acc;
        });
        d_post = std::move(d_x);
      }
    } else {
      const int h = cfg.height, w = cfg.width;
      const std::size_t plane = n;
      parallel::parallel_for(seg.out, [&](std::size_t co) {
        for (int ci = 0; ci < seg.in; ++ci) {
          double* g_kn = grad.data() + seg.w + (co * seg.in + ci) * 9;
          const double* in_plane = x.data() + ci * plane;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              double acc = 0.0;
              for (int py = 0; py < h; ++py) {
                const int yy = py + dy;
                if (yy < 0 || yy >= h) continue;
                for (int px = 0; px < w; ++px) {
                  const int xx = px + dx;
                  if (xx < 0 || xx >= w) continue;
                  acc += d_pre[co * plane + py * w + px] * in_plane[yy * w + xx];
                }
              }
              g_kn[(dy + 1) * 3 + (dx + 1)] += acc;
            }
          }
        }
        double acc_b = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc_b += d_pre[co * plane + p];
        grad[seg.b + co] += acc_b;
      });
      if (li > 0) {
        std::vector<double> d_x(x.size(), 0.0);
        parallel::parallel_for(seg.in, [&](std::size_t ci) {
          for (int uy = 0; uy < h; ++uy) {
            for (int ux = 0; ux < w; ++ux) {
              double acc = 0.0;
              for (int co = 0; co < seg.out; ++co) {
                const double* kn = P + seg.w + (static_cast<std::size_t>(co) * seg.in + ci) * 9;
                for (int dy = -1; dy <= 1; ++dy) {
                  const int py = uy - dy;
                  if (py < 0 || py >= h) continue;
                  for (int dx = -1; dx <= 1; ++dx) {
                    const int px = ux - dx;
                    if (px < 0 || px >= w) continue;
                    acc += kn[(dy + 1) * 3 + (dx + 1)] * d_pre[co * plane + py * w + px];
                  }
                }
              }
              d_x[ci * plane + uy * w + ux] = acc;
            }
          }
        });
        d_post = std::move(d_x);
      }
    }
  }
}

std::vector<double> score_forward(const ScoreNet& net, const PhaseField& field,
                                  int t) {
  ForwardTrace trace;
  return score_forward_trace(net, field, t, trace);
}

std::vector<double> score_backward(const ScoreNet& net, const PhaseField& field,
                                   int t,
                                   const std::vector<double>& cotangent) {
  ForwardTrace trace;
  score_forward_trace(net, field, t, trace);
  std::vector<double> grad(net.params.size(), 0.0);
  score_backward_trace(net, trace, cotangent, grad);
  return grad;
}

namespace {

constexpr std::uint32_t checkpoint_version = 1;

enum CfgTag : std::uint8_t {
  tag_arch = 1,
  tag_input_sites = 2,
  tag_height = 3,
  tag_width = 4,
  tag_hidden = 5,
  tag_time_embed_dim = 6,
  tag_horizon = 7,
};

void put_tlv_u32(std::string& buf, std::uint8_t tag, std::uint32_t v) {
  detail::put_u8(buf, tag);
  detail::put_u32(buf, 4);
  detail::put_u32(buf, v);
}

} // namespace

void save_checkpoint(const ScoreNet& net, const std::vector<double>* ema,
                     const std::string& path) {
  validate_config(net.config);
  if (net.params.size() != layout_size(net.config))
    throw std::domain_error("save_checkpoint: params length mismatch");
  if (ema && ema->size() != net.params.size())
    throw std::domain_error("save_checkpoint: ema length mismatch");
  const NetConfig& cfg = net.config;
  std::string buf = "KODM";
  detail::put_u32(buf, checkpoint_version);
  detail::put_u32(buf, 7);  // config entry count
  put_tlv_u32(buf, tag_arch, cfg.arch == Arch::Mlp ? 0 : 1);
  put_tlv_u32(buf, tag_input_sites, static_cast<std::uint32_t>(cfg.input_sites));
  put_tlv_u32(buf, tag_height, static_cast<std::uint32_t>(cfg.height));
  put_tlv_u32(buf, tag_width, static_cast<std::uint32_t>(cfg.width));
  detail::put_u8(buf, tag_hidden);
  detail::put_u32(buf, static_cast<std::uint32_t>(4 * cfg.hidden.size()));
  for (int w : cfg.hidden) detail::put_u32(buf, static_cast<std::uint32_t>(w));
  put_tlv_u32(buf, tag_time_embed_dim,
              static_cast<std::uint32_t>(cfg.time_embed_dim));
  put_tlv_u32(buf, tag_horizon, static_cast<std::uint32_t>(cfg.horizon));
  detail::put_u64(buf, net.params.size());
  for (double p : net.params) detail::put_f64(buf, p);
  detail::put_u8(buf, ema ? 1 : 0);
  if (ema)
    for (double p : *ema) detail::put_f64(buf, p);
  write_file_atomic(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  detail::Reader r{buf};
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "KODM", 4) != 0)
    throw DataError(path + ": not a KODM checkpoint (bad magic)");
  if (r.get_u32() != checkpoint_version)
    throw DataError(path + ": unsupported checkpoint version");
  NetConfig cfg;
  const std::uint32_t entries = r.get_u32();
  for (std::uint32_t e = 0; e < entries; ++e) {
    const std::uint8_t tag = r.get_u8();
    const std::uint32_t len = r.get_u32();
    switch (tag) {
      case tag_arch: {
        if (len != 4) throw DataError(path + ": bad arch entry");
        const std::uint32_t a = r.get_u32();
        if (a > 1) throw DataError(path + ": unknown architecture");
        cfg.arch = a == 0 ? Arch::Mlp : Arch::LocalConv;
        break;
      }
      case tag_input_sites:
        if (len != 4) throw DataError(path + ": bad input_sites entry");
        cfg.input_sites = static_cast<int>(r.get_u32());
        break;
      case tag_height:
        if (len != 4) throw DataError(path + ": bad height entry");
        cfg.height = static_cast<int>(r.get_u32());
        break;
      case tag_width:
        if (len != 4) throw DataError(path + ": bad width entry");
        cfg.width = static_cast<int>(r.get_u32());
        break;
      case tag_hidden: {
        if (len % 4 != 0) throw DataError(path + ": bad hidden entry");
        cfg.hidden.clear();
        for (std::uint32_t i = 0; i < len / 4; ++i)
          cfg.hidden.push_back(static_cast<int>(r.get_u32()));
        break;
      }
      case tag_time_embed_dim:
        if (len != 4) throw DataError(path + ": bad time_embed_dim entry");
        cfg.time_embed_dim = static_cast<int>(r.get_u32());
        break;
      case tag_horizon:
        if (len != 4) throw DataError(path + ": bad horizon entry");
        cfg.horizon = static_cast<int>(r.get_u32());
        break;
      default:
        throw DataError(path + ": unknown checkpoint config field");
    }
  }
  try {
    validate_config(cfg);
  } catch (const std::domain_error& ex) {
    throw DataError(path + ": invalid checkpoint config: " + ex.what());
  }
  Checkpoint ck;
  ck.net.config = cfg;
  const std::uint64_t count = r.get_u64();
  if (count != layout_size(cfg))
    throw DataError(path + ": param count does not match architecture");
  ck.net.params.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) ck.net.params[i] = r.get_f64();
  ck.has_ema = r.get_u8() != 0;
  if (ck.has_ema) {
    ck.ema.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) ck.ema[i] = r.get_f64();
  }
  if (!r.at_end()) throw DataError(path + ": trailing bytes");
  for (double p : ck.net.params)
    if (!std::isfinite(p)) throw DataError(path + ": non-finite parameter");
  for (double p : ck.ema)
    if (!std::isfinite(p)) throw DataError(path + ": non-finite EMA parameter");
  return ck;
}

} // namespace kodm
