// kodm — Kuramoto orientation diffusion CLI: training, sampling, forward
// diagnostics, Fokker-Planck verification, NLL evaluation, caching, toy data.
#include <cstdint>
#include <exception>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kodm/errors.hpp"
#include "kodm/fp.hpp"
#include "kodm/io.hpp"
#include "kodm/kuramoto.hpp"
#include "kodm/rng.hpp"
#include "kodm/sampling.hpp"
#include "kodm/schedule.hpp"
#include "kodm/score_net.hpp"
#include "kodm/train.hpp"

namespace {

using namespace kodm;

Schedule schedule_from_config(const Config& cfg) {
  const std::string preset = cfg.get_string("schedule", "preset", "");
  if (!preset.empty()) {
    if (preset == "global100") return global_preset(100);
    if (preset == "global300") return global_preset(300);
    if (preset == "global1000") return global_preset(1000);
    if (preset == "local100") return local_preset(100);
    if (preset == "local300") return local_preset(300);
    if (preset == "local1000") return local_preset(1000);
    throw ConfigError("[schedule] preset: unknown preset `" + preset + "`");
  }
  const long T = cfg.get_long("schedule", "t", 0);
  if (T < 1)
    throw ConfigError("[schedule]: need `preset` or a full custom schedule");
  const Schedule sched = linear_schedule(
      static_cast<int>(T),
      {cfg.get_double("schedule", "noise_var_start", 0.0),
       cfg.get_double("schedule", "noise_var_end", 0.0)},
      {cfg.get_double("schedule", "coupling_start", 0.0),
       cfg.get_double("schedule", "coupling_end", 0.0)},
      {cfg.get_double("schedule", "ref_coupling_start", 0.0),
       cfg.get_double("schedule", "ref_coupling_end", 0.0)},
      cfg.get_double("schedule", "psi_ref", 0.0));
  for (const auto& warning : schedule_warnings(sched))
    std::cerr << "warning: " << warning << "\n";
  return sched;
}

CouplingTopology topology_from_config(const Config& cfg) {
  const std::string kind = cfg.get_string("topology", "kind", "global");
  if (kind == "global") return CouplingTopology::global();
  if (kind == "reference_only") return CouplingTopology::reference_only();
  if (kind == "local") {
    const long radius = cfg.get_long("topology", "radius", 2);
    if (radius < 1) throw ConfigError("[topology] radius must be >= 1");
    return CouplingTopology::local(static_cast<int>(radius));
  }
  throw ConfigError("[topology] kind: unknown kind `" + kind + "`");
}

NetConfig net_config_from_config(const Config& cfg, const Schedule& sched,
                                 const PhaseField& sample) {
  NetConfig net;
  const std::string arch = cfg.get_string("net", "arch", "mlp");
  if (arch == "mlp") {
    net.arch = Arch::Mlp;
  } else if (arch == "conv") {
    net.arch = Arch::LocalConv;
    if (!sample.is_lattice())
      throw ConfigError("[net] arch = conv requires a lattice dataset");
  } else {
    throw ConfigError("[net] arch: unknown arch `" + arch + "`");
  }
  net.input_sites = static_cast<int>(sample.size());
  net.height = sample.is_lattice() ? sample.height : 1;
  net.width = sample.is_lattice() ? sample.width
                                  : static_cast<int>(sample.size());
  if (cfg.has("net", "hidden")) {
    net.hidden.clear();
    for (double w : cfg.get_doubles("net", "hidden")) {
      if (w < 1 || w != static_cast<long>(w))
        throw ConfigError("[net] hidden: widths must be positive integers");
      net.hidden.push_back(static_cast<int>(w));
    }
  } else {
    net.hidden = {128, 128, 128};
  }
  net.time_embed_dim =
      static_cast<int>(cfg.get_long("net", "time_embed_dim", 32));
  net.horizon = sched.T;
  return net;
}

TrainConfig train_config_from_config(const Config& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.get_double("train", "learning_rate", tc.learning_rate);
  tc.ema_decay = cfg.get_double("train", "ema_decay", tc.ema_decay);
  tc.mc_samples = static_cast<int>(cfg.get_long("train", "mc_samples", tc.mc_samples));
  tc.batch_size = static_cast<int>(cfg.get_long("train", "batch_size", tc.batch_size));
  tc.max_steps = cfg.get_long("train", "max_steps", tc.max_steps);
  tc.weight_decay = cfg.get_double("train", "weight_decay", tc.weight_decay);
  tc.grad_clip = cfg.get_double("train", "grad_clip", tc.grad_clip);
  tc.seed = cfg.get_seed("train", "seed", tc.seed);
  tc.val_interval = static_cast<int>(cfg.get_long("train", "val_interval", tc.val_interval));
  tc.val_probes = static_cast<int>(cfg.get_long("train", "val_probes", tc.val_probes));
  tc.checkpoint_interval = cfg.get_long("train", "checkpoint_interval", tc.checkpoint_interval);
  if (tc.learning_rate <= 0.0) throw ConfigError("[train] learning_rate must be positive");
  if (tc.ema_decay < 0.0 || tc.ema_decay >= 1.0)
    throw ConfigError("[train] ema_decay must be in [0, 1)");
  if (tc.mc_samples < 1) throw ConfigError("[train] mc_samples must be >= 1");
  if (tc.batch_size < 1) throw ConfigError("[train] batch_size must be >= 1");
  if (tc.max_steps < 0) throw ConfigError("[train] max_steps must be >= 0");
  return tc;
}

std::vector<PhaseField> dataset_from_config(const Config& cfg) {
  const std::string path = cfg.get_string("data", "path", "");
  if (path.empty()) throw ConfigError("[data] path: missing (dataset file)");
  const auto dataset = load_dataset(path);
  for (const auto& field : dataset)
    if (field.size() != dataset.front().size() ||
        field.kind != dataset.front().kind)
      throw DataError(path + ": dataset fields have mixed shapes");
  return dataset;
}

ToyDatasetSpec dataset_spec_from_config(const Config& cfg) {
  ToyDatasetSpec spec;
  const std::string kind = cfg.get_string("dataset", "kind", "von_mises_mixture");
  if (kind == "von_mises_mixture") {
    spec.kind = ToyDatasetSpec::Kind::VonMisesMixture;
  } else if (kind == "oriented_stripes") {
    spec.kind = ToyDatasetSpec::Kind::OrientedStripes;
  } else {
    throw ConfigError("[dataset] kind: unknown kind `" + kind + "`");
  }
  const long count = cfg.get_long("dataset", "count", 1024);
  if (count < 1) throw ConfigError("[dataset] count must be >= 1");
  spec.count = static_cast<std::size_t>(count);
  spec.seed = cfg.get_seed("dataset", "seed", 7);
  spec.n_sites = static_cast<int>(cfg.get_long("dataset", "n_sites", 64));
  spec.size = static_cast<int>(cfg.get_long("dataset", "size", 16));
  spec.freq_min = cfg.get_double("dataset", "freq_min", 0.5);
  spec.freq_max = cfg.get_double("dataset", "freq_max", 2.0);
  if (spec.kind == ToyDatasetSpec::Kind::VonMisesMixture) {
    const auto mu = cfg.get_doubles("mixture", "mu");
    const auto kappa = cfg.get_doubles("mixture", "kappa");
    const auto weight = cfg.get_doubles("mixture", "weight");
    if (mu.size() != kappa.size() || mu.size() != weight.size())
      throw ConfigError("[mixture]: mu, kappa, weight need equal lengths");
    for (std::size_t i = 0; i < mu.size(); ++i)
      spec.components.push_back({mu[i], kappa[i], weight[i]});
  } else {
    spec.angles = cfg.get_doubles("stripes", "angles");
  }
  return spec;
}

ScoreNet checkpoint_net(const Checkpoint& ck, const Config& cfg,
                        bool default_ema) {
  ScoreNet net = ck.net;
  const bool use_ema = cfg.get_bool("nll", "use_ema", default_ema);
  if (use_ema && ck.has_ema) net.params = ck.ema;
  return net;
}

void write_samples_kodc(const std::vector<PhaseField>& samples,
                        const Sha256Digest& fingerprint,
                        const std::string& path) {
  TrajectoryCache out;
  out.fingerprint = fingerprint;
  out.records.reserve(samples.size());
  for (std::size_t j = 0; j < samples.size(); ++j)
    out.records.push_back(CacheRecord{j, 0, samples[j]});
  write_cache(out, path);
}

int cmd_train(const std::string& config_path, const std::string& cache_path,
              const std::string& out_dir) {
  const Config cfg = Config::from_file(config_path);
  const Schedule sched = schedule_from_config(cfg);
  const CouplingTopology topology = topology_from_config(cfg);
  const auto dataset = dataset_from_config(cfg);
  const NetConfig net_config = net_config_from_config(cfg, sched, dataset.front());
  const TrainConfig train_config = train_config_from_config(cfg);

  TrajectoryCache cache;
  const TrajectoryCache* cache_ptr = nullptr;
  if (!cache_path.empty()) {
    cache = read_cache_checked(cache_path, sched, topology);
    cache_ptr = &cache;
  }
  std::vector<TrainLogRow> log;
  const TrainState state =
      train(dataset, sched, topology, net_config, train_config, cache_ptr, &log,
            out_dir, run_record(cfg, train_config.seed));
  double final_loss = 0.0;
  for (const auto& row : log)
    if (row.step > 0) final_loss = row.loss;
  std::cout << "trained " << state.step_count << " steps, final loss "
            << format_double(final_loss) << "\n";
  std::cout << "wrote " << out_dir << "/model.kodm and " << out_dir
            << "/loss.csv\n";
  return 0;
}

int cmd_sample(const std::string& checkpoint_path,
               const std::string& config_path, long n, const std::string& mode,
               bool dump_trajectory, const std::string& out_dir) {
  if (n < 1) throw ConfigError("--n must be >= 1");
  const Config cfg = Config::from_file(config_path);
  const Schedule sched = schedule_from_config(cfg);
  const CouplingTopology topology = topology_from_config(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.net.config.horizon != sched.T)
    throw ConfigError(checkpoint_path + ": checkpoint horizon " +
                      std::to_string(ck.net.config.horizon) +
                      " does not match schedule T " + std::to_string(sched.T));
  SampleMode sample_mode;
  if (mode == "sde") {
    sample_mode = SampleMode::Sde;
  } else if (mode == "ode") {
    sample_mode = SampleMode::Ode;
  } else {
    throw ConfigError("--mode must be sde or ode");
  }
  const std::uint64_t seed = cfg.get_seed("sample", "seed", 1);
  const PriorSpec prior = PriorSpec::from_schedule(
      sched, cfg.get_double("sample", "r_assumed", 1.0));
  const ScoreNet net = checkpoint_net(ck, cfg, true);

  std::vector<std::vector<PhaseField>> trajectories;
  const auto samples =
      generate(net, nullptr, sched, topology, static_cast<std::size_t>(n),
               sample_mode, prior, seed,
               dump_trajectory ? &trajectories : nullptr);
  const Sha256Digest fp = schedule_fingerprint(sched, topology);
  write_samples_kodc(samples, fp, out_dir + "/samples.kodc");
  if (dump_trajectory) {
    TrajectoryCache traj;
    traj.fingerprint = fp;
    for (std::size_t j = 0; j < trajectories.size(); ++j)
      for (std::size_t k = 0; k < trajectories[j].size(); ++k)
        traj.records.push_back(CacheRecord{
            j, static_cast<std::uint32_t>(sched.T - k), trajectories[j][k]});
    write_cache(traj, out_dir + "/trajectory.kodc");
  }
  std::cout << "wrote " << n << " samples to " << out_dir << "/samples.kodc\n";
  return 0;
}

int cmd_forward_diag(const std::string& config_path, long n,
                     const std::string& out_csv) {
  if (n < 1) throw ConfigError("--n must be >= 1");
  const Config cfg = Config::from_file(config_path);
  const Schedule sched = schedule_from_config(cfg);
  const CouplingTopology topology = topology_from_config(cfg);
  const std::uint64_t seed = cfg.get_seed("diag", "seed", 1);

  std::vector<PhaseField> batch;
  if (cfg.has("data", "path")) {
    auto dataset = dataset_from_config(cfg);
    if (dataset.size() > static_cast<std::size_t>(n)) dataset.resize(n);
    batch = std::move(dataset);
  } else {
    const long sites = cfg.get_long("diag", "n_sites", 64);
    if (sites < 1) throw ConfigError("[diag] n_sites must be >= 1");
    const auto init = rng::derive_stream(seed, rng::tag_init);
    for (long j = 0; j < n; ++j) {
      std::vector<double> phases(sites);
      for (long i = 0; i < sites; ++i)
        phases[i] = wrap(-pi + two_pi * rng::u01(init, static_cast<std::uint64_t>(j),
                                                 static_cast<std::uint64_t>(i)));
      batch.push_back(PhaseField::flat(std::move(phases)));
    }
  }
  const auto rows = empirical_snr(batch, sched, topology, rng::derive_seed(seed, 1));
  std::string csv = "# " + run_record(cfg, seed) + "\nt,r,psi,snr\n";
  for (const auto& row : rows)
    csv += std::to_string(row.t) + "," + format_double(row.r) + "," +
           format_double(row.psi) + "," + format_double(row.snr) + "\n";
  write_file_atomic(out_csv, csv);
  std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
  return 0;
}

int cmd_fp_verify(const std::string& config_path, long n,
                  const std::string& out_csv) {
  if (n < 1) throw ConfigError("--n must be >= 1");
  const Config cfg = Config::from_file(config_path);
  const Schedule sched = schedule_from_config(cfg);
  const CouplingTopology topology = topology_from_config(cfg);
  const std::uint64_t seed = cfg.get_seed("diag", "seed", 1);
  const auto report =
      ensemble_vs_fp(static_cast<std::size_t>(n), sched, topology, seed);
  std::string csv = "# " + run_record(cfg, seed) + "\nt,tv\n";
  for (const auto& row : report)
    csv += std::to_string(row.t) + "," + format_double(row.tv) + "\n";
  write_file_atomic(out_csv, csv);
  std::cout << "wrote " << report.size() << " rows to " << out_csv << "\n";
  return 0;
}

int cmd_nll(const std::string& checkpoint_path, const std::string& config_path,
            const std::string& data_path, int probes,
            const std::string& out_csv) {
  const Config cfg = Config::from_file(config_path);
  const Schedule sched = schedule_from_config(cfg);
  const CouplingTopology topology = topology_from_config(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.net.config.horizon != sched.T)
    throw ConfigError(checkpoint_path + ": checkpoint horizon " +
                      std::to_string(ck.net.config.horizon) +
                      " does not match schedule T " + std::to_string(sched.T));
  const auto dataset = load_dataset(data_path);
  for (const auto& field : dataset)
    if (field.size() != static_cast<std::size_t>(ck.net.config.input_sites))
      throw DataError(data_path + ": field size does not match checkpoint");
  NllConfig nll_cfg;
  nll_cfg.probes = probes;
  nll_cfg.jvp_epsilon = cfg.get_double("nll", "jvp_epsilon", nll_cfg.jvp_epsilon);
  const std::uint64_t seed = cfg.get_seed("nll", "seed", 1);
  const PriorSpec prior = PriorSpec::from_schedule(
      sched, cfg.get_double("sample", "r_assumed", 1.0));
  const ScoreNet net = checkpoint_net(ck, cfg, true);
  const ScoreFn score = net_score_fn(net);

  std::string csv = "# " + run_record(cfg, seed) + "\nindex,nll,seam_crossings\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const NllResult res = nll(score, dataset[i], sched, topology, prior,
                              nll_cfg, rng::derive_seed(seed, i));
    csv += std::to_string(i) + "," + format_double(res.nll) + "," +
           std::to_string(res.seam_crossings) + "\n";
  }
  write_file_atomic(out_csv, csv);
  std::cout << "wrote " << dataset.size() << " rows to " << out_csv << "\n";
  return 0;
}

int cmd_cache(const std::string& config_path, const std::string& data_path,
              const std::string& out_path) {
  const Config cfg = Config::from_file(config_path);
  const Schedule sched = schedule_from_config(cfg);
  const CouplingTopology topology = topology_from_config(cfg);
  const auto dataset = load_dataset(data_path);
  const long spi = cfg.get_long("cache", "samples_per_item", 4);
  if (spi < 1) throw ConfigError("[cache] samples_per_item must be >= 1");
  const std::uint64_t seed = cfg.get_seed("cache", "seed", 1);
  const TrajectoryCache cache =
      precompute_cache(dataset, sched, topology, static_cast<int>(spi), seed);
  write_cache(cache, out_path);
  std::cout << "wrote " << cache.records.size() << " records to " << out_path
            << "\n";
  return 0;
}

int cmd_make_data(const std::string& spec_path, const std::string& out_dir) {
  const Config cfg = Config::from_file(spec_path);
  const ToyDatasetSpec spec = dataset_spec_from_config(cfg);
  const auto dataset = make_toy_dataset(spec);
  write_dataset(dataset, dataset_fingerprint(spec), out_dir + "/dataset.kodc");
  std::cout << "wrote " << dataset.size() << " samples to " << out_dir
            << "/dataset.kodc\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kuramoto orientation diffusion models"};
  app.require_subcommand(1);

  std::string config_path, cache_path, out_dir = ".", checkpoint_path;
  std::string data_path, mode = "sde", out_csv, spec_path, out_path;
  long n = 1;
  int probes = 8;
  bool dump_trajectory = false;

  auto* train_cmd = app.add_subcommand("train", "Train a score network");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--cache", cache_path);
  train_cmd->add_option("--out", out_dir);

  auto* sample_cmd = app.add_subcommand("sample", "Generate samples");
  sample_cmd->add_option("--checkpoint", checkpoint_path)->required();
  sample_cmd->add_option("--config", config_path)->required();
  sample_cmd->add_option("--n", n)->required();
  sample_cmd->add_option("--mode", mode)->required();
  sample_cmd->add_flag("--dump-trajectory", dump_trajectory);
  sample_cmd->add_option("--out", out_dir);

  auto* diag_cmd = app.add_subcommand("forward-diag", "Forward-chain diagnostics");
  diag_cmd->add_option("--config", config_path)->required();
  diag_cmd->add_option("--n", n)->required();
  diag_cmd->add_option("--out", out_csv)->required();

  auto* fp_cmd = app.add_subcommand("fp-verify", "Ensemble vs Fokker-Planck");
  fp_cmd->add_option("--config", config_path)->required();
  fp_cmd->add_option("--n", n)->required();
  fp_cmd->add_option("--out", out_csv)->required();

  auto* nll_cmd = app.add_subcommand("nll", "Negative log-likelihood");
  nll_cmd->add_option("--checkpoint", checkpoint_path)->required();
  nll_cmd->add_option("--config", config_path)->required();
  nll_cmd->add_option("--data", data_path)->required();
  nll_cmd->add_option("--probes", probes);
  nll_cmd->add_option("--out", out_csv)->required();

  auto* cache_cmd = app.add_subcommand("cache", "Precompute a trajectory cache");
  cache_cmd->add_option("--config", config_path)->required();
  cache_cmd->add_option("--data", data_path)->required();
  cache_cmd->add_option("--out", out_path)->required();

  auto* data_cmd = app.add_subcommand("make-data", "Generate a toy dataset");
  data_cmd->add_option("--spec", spec_path)->required();
  data_cmd->add_option("--out", out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, cache_path, out_dir);
    if (sample_cmd->parsed())
      return cmd_sample(checkpoint_path, config_path, n, mode, dump_trajectory,
                        out_dir);
    if (diag_cmd->parsed()) return cmd_forward_diag(config_path, n, out_csv);
    if (fp_cmd->parsed()) return cmd_fp_verify(config_path, n, out_csv);
    if (nll_cmd->parsed())
      return cmd_nll(checkpoint_path, config_path, data_path, probes, out_csv);
    if (cache_cmd->parsed()) return cmd_cache(config_path, data_path, out_path);
    if (data_cmd->parsed()) return cmd_make_data(spec_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
