#include "kodm/kuramoto.hpp"

#include <algorithm>
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

void check_timestep(int t, const Schedule& sched, const char* where) {
  if (t < 0 || t >= sched.T)
    throw std::domain_error(std::string(where) + ": timestep out of range");
}

PhaseField make_like(const PhaseField& proto, std::vector<double> values) {
  if (proto.is_lattice())
    return PhaseField::lattice(proto.height, proto.width, std::move(values));
  return PhaseField::flat(std::move(values));
}

// Summed-area tables of sin/cos over a lattice; S has (h+1) x (w+1) entries.
struct AreaTables {
  int h = 0, w = 0;
  std::vector<double> s, c;

  double rect_s(int y0, int y1, int x0, int x1) const {  // half-open [y0,y1)
    const int W = w + 1;
    return s[y1 * W + x1] - s[y0 * W + x1] - s[y1 * W + x0] + s[y0 * W + x0];
  }
  double rect_c(int y0, int y1, int x0, int x1) const {
    const int W = w + 1;
    return c[y1 * W + x1] - c[y0 * W + x1] - c[y1 * W + x0] + c[y0 * W + x0];
  }
};

AreaTables build_tables(const PhaseField& field) {
  AreaTables tab;
  tab.h = field.height;
  tab.w = field.width;
  const int W = tab.w + 1;
  tab.s.assign(static_cast<std::size_t>(tab.h + 1) * W, 0.0);
  tab.c.assign(static_cast<std::size_t>(tab.h + 1) * W, 0.0);
  parallel::parallel_for(tab.h, [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    double row_s = 0.0, row_c = 0.0;
    for (int x = 0; x < tab.w; ++x) {
      const double th = field.phases[static_cast<std::size_t>(y) * tab.w + x];
      row_s += std::sin(th);
      row_c += std::cos(th);
      tab.s[static_cast<std::size_t>(y + 1) * W + x + 1] = row_s;
      tab.c[static_cast<std::size_t>(y + 1) * W + x + 1] = row_c;
    }
  });
  parallel::parallel_for(W, [&](std::size_t x) {
    for (int y = 1; y <= tab.h; ++y) {
      tab.s[static_cast<std::size_t>(y) * W + x] +=
          tab.s[static_cast<std::size_t>(y - 1) * W + x];
      tab.c[static_cast<std::size_t>(y) * W + x] +=
          tab.c[static_cast<std::size_t>(y - 1) * W + x];
    }
  });
  return tab;
}

} // namespace

std::vector<double> drift_global(const PhaseField& field, int t,
                                 const Schedule& sched) {
  check_timestep(t, sched, "drift_global");
  const std::size_t n = field.size();
  const auto sums = parallel::det_sums<2>(n, [&](std::size_t i, double* acc) {
    acc[0] += std::sin(field.phases[i]);
    acc[1] += std::cos(field.phases[i]);
  });
  const double mean_s = sums[0] / static_cast<double>(n);
  const double mean_c = sums[1] / static_cast<double>(n);
  const double K = sched.coupling[t];
  const double K_ref = sched.ref_coupling[t];
  const double psi_ref = sched.psi_ref;
  std::vector<double> out(n);
  parallel::parallel_for(n, [&](std::size_t i) {
    const double th = field.phases[i];
    // K r sin(psi - th) expanded through the mean phasor components
    out[i] = K * (mean_s * std::cos(th) - mean_c * std::sin(th)) +
             K_ref * std::sin(psi_ref - th);
  });
  return out;
}

std::vector<double> drift_global_pairwise(const PhaseField& field, int t,
                                          const Schedule& sched) {
  check_timestep(t, sched, "drift_global_pairwise");
  const std::size_t n = field.size();
  const double K = sched.coupling[t];
  const double K_ref = sched.ref_coupling[t];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      acc += std::sin(field.phases[j] - field.phases[i]);
    out[i] = K * acc / static_cast<double>(n) +
             K_ref * std::sin(sched.psi_ref - field.phases[i]);
  }
  return out;
}

std::vector<double> drift_local(const PhaseField& field, int t,
                                const Schedule& sched, int radius) {
  check_timestep(t, sched, "drift_local");
  if (!field.is_lattice())
    throw std::domain_error("drift_local: Lattice field required");
  if (radius < 1) throw std::domain_error("drift_local: radius must be >= 1");
  const int h = field.height, w = field.width;
  const double K = sched.coupling[t];
  const double K_ref = sched.ref_coupling[t];
  const double psi_ref = sched.psi_ref;
  const AreaTables tab = build_tables(field);
  std::vector<double> out(field.size());
  parallel::parallel_for(field.size(), [&](std::size_t idx) {
    const int y = static_cast<int>(idx) / w;
    const int x = static_cast<int>(idx) % w;
    const int y0 = std::max(0, y - radius), y1 = std::min(h, y + radius + 1);
    const int x0 = std::max(0, x - radius), x1 = std::min(w, x + radius + 1);
    const double th = field.phases[idx];
    const double sin_i = std::sin(th), cos_i = std::cos(th);
    const double win_s = tab.rect_s(y0, y1, x0, x1) - sin_i;
    const double win_c = tab.rect_c(y0, y1, x0, x1) - cos_i;
    const int neighbors = (y1 - y0) * (x1 - x0) - 1;
    // sum_j sin(th_j - th_i) = cos th_i * sum sin th_j - sin th_i * sum cos th_j
    const double coupling_term =
        neighbors > 0 ? K * (cos_i * win_s - sin_i * win_c) / neighbors : 0.0;
    out[idx] = coupling_term + K_ref * std::sin(psi_ref - th);
  });
  return out;
}

std::vector<double> drift_local_reference(const PhaseField& field, int t,
                                          const Schedule& sched, int radius) {
  check_timestep(t, sched, "drift_local_reference");
  if (!field.is_lattice())
    throw std::domain_error("drift_local_reference: Lattice field required");
  if (radius < 1)
    throw std::domain_error("drift_local_reference: radius must be >= 1");
  const int h = field.height, w = field.width;
  const double K = sched.coupling[t];
  const double K_ref = sched.ref_coupling[t];
  std::vector<double> out(field.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      const double th = field.phases[idx];
      double acc = 0.0;
      int neighbors = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          acc += std::sin(field.phases[static_cast<std::size_t>(ny) * w + nx] -
                          th);
          ++neighbors;
        }
      }
      out[idx] = (neighbors > 0 ? K * acc / neighbors : 0.0) +
                 K_ref * std::sin(sched.psi_ref - th);
    }
  }
  return out;
}

std::vector<double> drift_reference_only(const PhaseField& field, int t,
                                         const Schedule& sched) {
  check_timestep(t, sched, "drift_reference_only");
  const double K_ref = sched.ref_coupling[t];
  const double psi_ref = sched.psi_ref;
  std::vector<double> out(field.size());
  parallel::parallel_for(field.size(), [&](std::size_t i) {
    out[i] = K_ref * std::sin(psi_ref - field.phases[i]);
  });
  return out;
}

std::vector<double> drift(const PhaseField& field, int t, const Schedule& sched,
                          const CouplingTopology& topology) {
  switch (topology.kind) {
    case CouplingTopology::Kind::Global:
      return drift_global(field, t, sched);
    case CouplingTopology::Kind::Local:
      return drift_local(field, t, sched, topology.radius);
    case CouplingTopology::Kind::ReferenceOnly:
      return drift_reference_only(field, t, sched);
  }
  throw std::domain_error("drift: unknown topology");
}

PhaseField forward_step(const PhaseField& field, int t, const Schedule& sched,
                        const CouplingTopology& topology, std::uint64_t seed) {
  check_timestep(t, sched, "forward_step");
  const auto f = drift(field, t, sched, topology);
  const double sigma = std::sqrt(sched.noise_var[t]);
  const auto stream = rng::derive_stream(seed, rng::tag_chain);
  std::vector<double> next(field.size());
  parallel::parallel_for(field.size(), [&](std::size_t i) {
    const double eps = rng::normal(stream, static_cast<std::uint64_t>(t), i);
    next[i] = wrap(field.phases[i] + f[i] + sigma * eps);
  });
  return make_like(field, std::move(next));
}

PhaseField simulate_chain(const PhaseField& theta0, int t_target,
                          const Schedule& sched,
                          const CouplingTopology& topology,
                          std::uint64_t seed) {
  if (t_target < 0 || t_target > sched.T)
    throw std::domain_error("simulate_chain: t_target out of range");
  PhaseField field = theta0;
  for (int t = 0; t < t_target; ++t)
    field = forward_step(field, t, sched, topology, seed);
  return field;
}

std::vector<SnrPoint> empirical_snr(const std::vector<PhaseField>& theta0_batch,
                                    const Schedule& sched,
                                    const CouplingTopology& topology,
                                    std::uint64_t seed) {
  if (theta0_batch.empty())
    throw std::domain_error("empirical_snr: empty batch");
  const std::size_t batch = theta0_batch.size();
  std::vector<PhaseField> fields = theta0_batch;
  std::vector<SnrPoint> rows;
  rows.reserve(sched.T + 1);
  std::vector<double> corr(batch);

  for (int t = 0; t <= sched.T; ++t) {
    double pooled_s = 0.0, pooled_c = 0.0;
    std::size_t pooled_n = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t n = fields[b].size();
      const auto sums =
          parallel::det_sums<4>(n, [&](std::size_t i, double* acc) {
            const double th = fields[b].phases[i];
            const double d = th - theta0_batch[b].phases[i];
            acc[0] += std::sin(th);
            acc[1] += std::cos(th);
            acc[2] += std::sin(d);
            acc[3] += std::cos(d);
          });
      pooled_s += sums[0];
      pooled_c += sums[1];
      pooled_n += n;
      corr[b] = std::hypot(sums[2], sums[3]) / static_cast<double>(n);
    }
    double c_mean = 0.0;
    for (double c : corr) c_mean += c;
    c_mean /= static_cast<double>(batch);

    SnrPoint row;
    row.t = t;
    const double ms = pooled_s / static_cast<double>(pooled_n);
    const double mc = pooled_c / static_cast<double>(pooled_n);
    row.r = std::min(1.0, std::hypot(ms, mc));
    row.psi = row.r == 0.0 ? 0.0 : wrap(std::atan2(ms, mc));
    row.snr = c_mean * c_mean / (1.0 - c_mean * c_mean);
    rows.push_back(row);

    if (t < sched.T) {
      parallel::parallel_for(batch, [&](std::size_t b) {
        fields[b] = forward_step(fields[b], t, sched, topology,
                                 rng::derive_seed(seed, b));
      });
    }
  }
  return rows;
}

Sha256Digest schedule_fingerprint(const Schedule& sched,
                                  const CouplingTopology& topology) {
  std::string buf = "KODM-SCHED-1";
  detail::put_u32(buf, static_cast<std::uint32_t>(sched.T));
  detail::put_f64(buf, sched.psi_ref);
  for (double v : sched.noise_var) detail::put_f64(buf, v);
  for (double v : sched.coupling) detail::put_f64(buf, v);
  for (double v : sched.ref_coupling) detail::put_f64(buf, v);
  detail::put_u8(buf, static_cast<std::uint8_t>(topology.kind));
  detail::put_u32(buf, static_cast<std::uint32_t>(
                           topology.kind == CouplingTopology::Kind::Local
                               ? topology.radius
                               : 0));
  return sha256(buf);
}

TrajectoryCache precompute_cache(const std::vector<PhaseField>& dataset,
                                 const Schedule& sched,
                                 const CouplingTopology& topology,
                                 int samples_per_item, std::uint64_t seed) {
  if (dataset.empty())
    throw std::domain_error("precompute_cache: empty dataset");
  if (samples_per_item < 0)
    throw std::domain_error("precompute_cache: negative samples_per_item");
  TrajectoryCache cache;
  cache.fingerprint = schedule_fingerprint(sched, topology);
  const std::size_t spi = static_cast<std::size_t>(samples_per_item);
  cache.records.resize(dataset.size() * spi);
  parallel::parallel_for(dataset.size(), [&](std::size_t id) {
    const std::uint64_t item_seed = rng::derive_seed(seed, id);
    const auto pick = rng::derive_stream(item_seed, rng::tag_cache);
    std::vector<std::pair<int, std::size_t>> wanted(spi);  // (t, slot)
    for (std::size_t k = 0; k < spi; ++k) {
      const int t = 1 + static_cast<int>(rng::uniform_index(
                            pick, k, 0, static_cast<std::uint64_t>(sched.T)));
      wanted[k] = {t, id * spi + k};
    }
    std::vector<std::pair<int, std::size_t>> order = wanted;
    std::sort(order.begin(), order.end());
    // one trajectory per item; snapshot theta_{t-1} at each requested t
    PhaseField field = dataset[id];
    int cur = 0;
    for (const auto& [t, slot] : order) {
      while (cur < t - 1) {
        field = forward_step(field, cur, sched, topology, item_seed);
        ++cur;
      }
      cache.records[slot] =
          CacheRecord{id, static_cast<std::uint32_t>(t), field};
    }
  });
  return cache;
}

namespace {

constexpr std::uint32_t cache_version = 1;

void put_field(std::string& buf, const PhaseField& field) {
  detail::put_u8(buf, field.is_lattice() ? 1 : 0);
  detail::put_u32(buf, static_cast<std::uint32_t>(field.height));
  detail::put_u32(buf, static_cast<std::uint32_t>(field.width));
  for (double p : field.phases) detail::put_f64(buf, p);
}

PhaseField get_field(detail::Reader& r) {
  const std::uint8_t tag = r.get_u8();
  const std::uint32_t h = r.get_u32();
  const std::uint32_t w = r.get_u32();
  if (tag > 1) throw DataError("cache: bad shape tag");
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (n == 0) throw DataError("cache: empty field record");
  std::vector<double> phases(n);
  for (std::size_t i = 0; i < n; ++i) phases[i] = r.get_f64();
  if (tag == 1)
    return PhaseField::lattice(static_cast<int>(h), static_cast<int>(w),
                               std::move(phases));
  return PhaseField::flat(std::move(phases));
}

} // namespace

void write_cache(const TrajectoryCache& cache, const std::string& path) {
  std::string buf = "KODC";
  detail::put_u32(buf, cache_version);
  buf.append(reinterpret_cast<const char*>(cache.fingerprint.data()),
             cache.fingerprint.size());
  detail::put_u64(buf, cache.records.size());
  for (const auto& rec : cache.records) {
    detail::put_u64(buf, rec.sample_id);
    detail::put_u32(buf, rec.t);
    put_field(buf, rec.field);
  }
  write_file_atomic(path, buf);
}

TrajectoryCache read_cache(const std::string& path) {
  const std::string buf = read_file(path);
  detail::Reader r{buf};
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "KODC", 4) != 0)
    throw DataError(path + ": not a KODC cache (bad magic)");
  const std::uint32_t version = r.get_u32();
  if (version != cache_version)
    throw DataError(path + ": unsupported cache version");
  TrajectoryCache cache;
  r.get_bytes(cache.fingerprint.data(), cache.fingerprint.size());
  const std::uint64_t count = r.get_u64();
  cache.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    CacheRecord rec;
    rec.sample_id = r.get_u64();
    rec.t = r.get_u32();
    rec.field = get_field(r);
    cache.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw DataError(path + ": trailing bytes");
  return cache;
}

TrajectoryCache read_cache_checked(const std::string& path,
                                   const Schedule& sched,
                                   const CouplingTopology& topology) {
  TrajectoryCache cache = read_cache(path);
  if (cache.fingerprint != schedule_fingerprint(sched, topology))
    throw DataError(path + ": stale cache (schedule fingerprint mismatch)");
  for (const auto& rec : cache.records)
    if (rec.t < 1 || rec.t > static_cast<std::uint32_t>(sched.T))
      throw DataError(path + ": cache record timestep out of range");
  return cache;
}

} // namespace kodm
