#include "kodm/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "kodm/detail/binio.hpp"
#include "kodm/errors.hpp"
#include "kodm/kuramoto.hpp"
#include "kodm/rng.hpp"

namespace kodm {

namespace {

constexpr double phase_span = 0.9 * pi;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

} // namespace

PhaseField pixel_to_phase(const PixelPatch& patch) {
  if (patch.height < 1 || patch.width < 1 ||
      patch.values.size() !=
          static_cast<std::size_t>(patch.height) * patch.width)
    throw std::domain_error("pixel_to_phase: bad patch shape");
  std::vector<double> phases(patch.values.size());
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const double x = patch.values[i];
    if (!(x >= -1.0 && x <= 1.0))
      throw std::domain_error("pixel_to_phase: pixel outside [-1, 1]");
    phases[i] = phase_span * x;
  }
  return PhaseField::lattice(patch.height, patch.width, std::move(phases));
}

PixelizeResult phase_to_pixel(const PhaseField& field) {
  PixelizeResult out;
  out.patch.height = field.is_lattice() ? field.height : 1;
  out.patch.width = field.is_lattice() ? field.width
                                       : static_cast<int>(field.size());
  out.patch.values.resize(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double raw = field.phases[i] / phase_span;
    const double x = std::clamp(raw, -1.0, 1.0);
    if (raw != x) out.clamped += 1;
    out.patch.values[i] = x;
  }
  return out;
}

namespace {

// token scanner for the PGM header: whitespace-separated, '#' comments
struct PgmScanner {
  const std::string& buf;
  std::size_t off = 0;

  std::string token(const std::string& path) {
    while (off < buf.size()) {
      const char c = buf[off];
      if (c == '#') {
        while (off < buf.size() && buf[off] != '\n') ++off;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++off;
      } else {
        break;
      }
    }
    const std::size_t start = off;
    while (off < buf.size() && !std::isspace(static_cast<unsigned char>(buf[off])) )
      ++off;
    if (start == off)
      throw DataError(path + ": truncated PGM header at byte " +
                      std::to_string(start));
    return buf.substr(start, off - start);
  }

  int number(const std::string& path) {
    const std::size_t at = off;
    const std::string tok = token(path);
    int value = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw DataError(path + ": bad PGM header number at byte " +
                      std::to_string(at));
    return value;
  }
};

} // namespace

PixelPatch load_pgm(const std::string& path) {
  const std::string buf = read_file(path);
  PgmScanner sc{buf};
  if (sc.token(path) != "P5")
    throw DataError(path + ": not a binary PGM (expected P5 at byte 0)");
  const int width = sc.number(path);
  const int height = sc.number(path);
  const int maxval = sc.number(path);
  if (width < 1 || height < 1)
    throw DataError(path + ": bad PGM dimensions");
  if (maxval != 255)
    throw DataError(path + ": unsupported PGM maxval " + std::to_string(maxval) +
                    " (need 255)");
  if (sc.off >= buf.size() ||
      !std::isspace(static_cast<unsigned char>(buf[sc.off])))
    throw DataError(path + ": malformed PGM header at byte " +
                    std::to_string(sc.off));
  sc.off += 1;  // single whitespace byte separates header from payload
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (buf.size() - sc.off < need)
    throw DataError(path + ": truncated PGM payload at byte " +
                    std::to_string(buf.size()) + " (need " +
                    std::to_string(sc.off + need) + " bytes)");
  if (buf.size() - sc.off > need)
    throw DataError(path + ": trailing bytes after PGM payload");
  PixelPatch patch;
  patch.width = width;
  patch.height = height;
  patch.values.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    const auto v = static_cast<unsigned char>(buf[sc.off + i]);
    patch.values[i] = 2.0 * (static_cast<double>(v) / 255.0) - 1.0;
  }
  return patch;
}

void save_pgm(const PixelPatch& patch, const std::string& path) {
  if (patch.height < 1 || patch.width < 1 ||
      patch.values.size() !=
          static_cast<std::size_t>(patch.height) * patch.width)
    throw std::domain_error("save_pgm: bad patch shape");
  std::string buf = "P5\n" + std::to_string(patch.width) + " " +
                    std::to_string(patch.height) + "\n255\n";
  buf.reserve(buf.size() + patch.values.size());
  for (double x : patch.values) {
    if (!(x >= -1.0 && x <= 1.0))
      throw std::domain_error("save_pgm: pixel outside [-1, 1]");
    const double v = std::nearbyint(255.0 * (x + 1.0) / 2.0);
    buf.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  write_file_atomic(path, buf);
}

namespace {

void check_dataset_spec(const ToyDatasetSpec& spec) {
  if (spec.count < 1) throw std::domain_error("ToyDatasetSpec: count must be >= 1");
  if (spec.kind == ToyDatasetSpec::Kind::VonMisesMixture) {
    if (spec.components.empty())
      throw std::domain_error("ToyDatasetSpec: mixture needs components");
    if (spec.n_sites < 1)
      throw std::domain_error("ToyDatasetSpec: n_sites must be >= 1");
    double total = 0.0;
    for (const auto& c : spec.components) {
      if (!(c.weight > 0.0))
        throw std::domain_error("ToyDatasetSpec: weights must be positive");
      if (c.kappa < 0.0)
        throw std::domain_error("ToyDatasetSpec: kappa must be >= 0");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::domain_error("ToyDatasetSpec: weights must sum to 1");
  } else {
    if (spec.size < 2) throw std::domain_error("ToyDatasetSpec: size must be >= 2");
    if (spec.angles.empty())
      throw std::domain_error("ToyDatasetSpec: stripes need angles");
    for (double a : spec.angles)
      if (a < 0.0 || a >= pi)
        throw std::domain_error("ToyDatasetSpec: angles must lie in [0, pi)");
    if (!(spec.freq_min > 0.0) || spec.freq_max < spec.freq_min)
      throw std::domain_error("ToyDatasetSpec: bad frequency range");
  }
}

} // namespace

std::vector<PhaseField> make_toy_dataset(const ToyDatasetSpec& spec) {
  check_dataset_spec(spec);
  std::vector<PhaseField> out;
  out.reserve(spec.count);
  if (spec.kind == ToyDatasetSpec::Kind::VonMisesMixture) {
    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& c : spec.components) {
      acc += c.weight;
      cumulative.push_back(acc);
    }
    cumulative.back() = 1.0;
    for (std::size_t id = 0; id < spec.count; ++id) {
      const auto pick =
          rng::derive_stream(rng::derive_seed(spec.seed, id), rng::tag_data);
      std::vector<double> phases(spec.n_sites);
      for (int i = 0; i < spec.n_sites; ++i) {
        const double u = rng::u01(pick, 0, static_cast<std::uint64_t>(i));
        std::size_t comp = 0;
        while (comp + 1 < cumulative.size() && u >= cumulative[comp]) ++comp;
        const VonMisesParams vm{spec.components[comp].mu,
                                spec.components[comp].kappa};
        phases[i] = von_mises_sample(
                        vm, 1,
                        rng::derive_seed(spec.seed, id,
                                         static_cast<std::uint64_t>(i)))
                        .phases[0];
      }
      out.push_back(PhaseField::flat(std::move(phases)));
    }
  } else {
    for (std::size_t id = 0; id < spec.count; ++id) {
      const auto pick =
          rng::derive_stream(rng::derive_seed(spec.seed, id), rng::tag_data);
      const std::size_t ai = rng::uniform_index(pick, 1, 0, spec.angles.size());
      const double alpha = spec.angles[ai];
      const double freq =
          spec.freq_min + (spec.freq_max - spec.freq_min) * rng::u01(pick, 1, 1);
      PixelPatch patch;
      patch.height = spec.size;
      patch.width = spec.size;
      patch.values.resize(static_cast<std::size_t>(spec.size) * spec.size);
      for (int row = 0; row < spec.size; ++row) {
        for (int col = 0; col < spec.size; ++col) {
          const double x = static_cast<double>(row) / spec.size;
          const double y = static_cast<double>(col) / spec.size;
          patch.values[static_cast<std::size_t>(row) * spec.size + col] =
              std::sin(two_pi * freq * (x * std::cos(alpha) + y * std::sin(alpha)));
        }
      }
      out.push_back(pixel_to_phase(patch));
    }
  }
  return out;
}

Sha256Digest dataset_fingerprint(const ToyDatasetSpec& spec) {
  check_dataset_spec(spec);
  std::string buf = "KODM-DATA-1";
  detail::put_u8(buf, spec.kind == ToyDatasetSpec::Kind::VonMisesMixture ? 0 : 1);
  detail::put_u64(buf, spec.count);
  detail::put_u64(buf, spec.seed);
  detail::put_u32(buf, static_cast<std::uint32_t>(spec.n_sites));
  detail::put_u32(buf, static_cast<std::uint32_t>(spec.size));
  detail::put_f64(buf, spec.freq_min);
  detail::put_f64(buf, spec.freq_max);
  detail::put_u32(buf, static_cast<std::uint32_t>(spec.components.size()));
  for (const auto& c : spec.components) {
    detail::put_f64(buf, c.mu);
    detail::put_f64(buf, c.kappa);
    detail::put_f64(buf, c.weight);
  }
  detail::put_u32(buf, static_cast<std::uint32_t>(spec.angles.size()));
  for (double a : spec.angles) detail::put_f64(buf, a);
  return sha256(buf);
}

void write_dataset(const std::vector<PhaseField>& fields,
                   const Sha256Digest& fingerprint, const std::string& path) {
  TrajectoryCache cache;
  cache.fingerprint = fingerprint;
  cache.records.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i)
    cache.records.push_back(CacheRecord{i, 0, fields[i]});
  write_cache(cache, path);
}

std::vector<PhaseField> load_dataset(const std::string& path) {
  const TrajectoryCache cache = read_cache(path);
  if (cache.records.empty()) throw DataError(path + ": empty dataset");
  std::vector<PhaseField> out;
  out.reserve(cache.records.size());
  for (const auto& rec : cache.records) out.push_back(rec.field);
  return out;
}

namespace {

// every recognized section/key; anything else in a config file is an error
const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"schedule",
       {"preset", "t", "noise_var_start", "noise_var_end", "coupling_start",
        "coupling_end", "ref_coupling_start", "ref_coupling_end", "psi_ref"}},
      {"topology", {"kind", "radius"}},
      {"net", {"arch", "hidden", "time_embed_dim"}},
      {"train",
       {"learning_rate", "ema_decay", "mc_samples", "batch_size", "max_steps",
        "weight_decay", "grad_clip", "seed", "val_interval", "val_probes",
        "checkpoint_interval"}},
      {"data", {"path"}},
      {"sample", {"seed", "r_assumed"}},
      {"diag", {"seed", "n_sites"}},
      {"nll", {"seed", "probes", "jvp_epsilon", "use_ema"}},
      {"cache", {"samples_per_item", "seed"}},
      {"dataset",
       {"kind", "count", "seed", "n_sites", "size", "freq_min", "freq_max"}},
      {"mixture", {"mu", "kappa", "weight"}},
      {"stripes", {"angles"}},
  };
  return schema;
}

} // namespace

Config Config::from_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& ex) {
    throw ConfigError(ex.what());
  }
  return from_text(text, path);
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  cfg.digest_ = hex_digest(sha256(text));
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string line = eol == std::string::npos ? text.substr(pos)
                                                : text.substr(pos, eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    line_no += 1;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": empty section name");
      cfg.sections_[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected `key = value`");
    if (section.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": key before any [section]");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    auto& sec = cfg.sections_[section];
    if (sec.count(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": duplicate key `" + key + "`");
    sec[key] = value;
  }
  cfg.validate();
  return cfg;
}

void Config::validate() const {
  const auto& schema = config_schema();
  for (const auto& [section, keys] : sections_) {
    const auto it = schema.find(section);
    if (it == schema.end())
      throw ConfigError(origin_ + ": unknown section [" + section + "]");
    for (const auto& [key, value] : keys)
      if (!it->second.count(key))
        throw ConfigError(origin_ + ": unknown key `" + key + "` in [" +
                          section + "]");
  }
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto sec = sections_.find(section);
  return sec != sections_.end() && sec->second.count(key) > 0;
}

std::string Config::get_string(const std::string& section,
                               const std::string& key,
                               const std::string& fallback) const {
  const auto sec = sections_.find(section);
  if (sec == sections_.end()) return fallback;
  const auto it = sec->second.find(key);
  return it == sec->second.end() ? fallback : it->second;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty())
    throw ConfigError(origin_ + ": [" + section + "] " + key +
                      ": not a number: `" + raw + "`");
  return v;
}

long Config::get_long(const std::string& section, const std::string& key,
                      long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(raw.c_str(), &end, 10);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty())
    throw ConfigError(origin_ + ": [" + section + "] " + key +
                      ": not an integer: `" + raw + "`");
  return v;
}

std::uint64_t Config::get_seed(const std::string& section,
                               const std::string& key,
                               std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty() ||
      raw.front() == '-')
    throw ConfigError(origin_ + ": [" + section + "] " + key +
                      ": not a seed: `" + raw + "`");
  return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  if (raw == "true" || raw == "yes" || raw == "1") return true;
  if (raw == "false" || raw == "no" || raw == "0") return false;
  throw ConfigError(origin_ + ": [" + section + "] " + key +
                    ": not a boolean: `" + raw + "`");
}

std::vector<double> Config::get_doubles(const std::string& section,
                                        const std::string& key) const {
  if (!has(section, key))
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": missing");
  const std::string raw = get_string(section, key, "");
  std::vector<double> out;
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t' || raw[i] == ','))
      ++i;
    if (i >= raw.size()) break;
    std::size_t j = i;
    while (j < raw.size() && raw[j] != ' ' && raw[j] != '\t' && raw[j] != ',')
      ++j;
    const std::string tok = raw.substr(i, j - i);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (errno != 0 || end != tok.c_str() + tok.size())
      throw ConfigError(origin_ + ": [" + section + "] " + key +
                        ": not a number: `" + tok + "`");
    out.push_back(v);
    i = j;
  }
  if (out.empty())
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": empty list");
  return out;
}

std::string run_record(const Config& cfg, std::uint64_t seed) {
  return "run: config_sha256=" + cfg.digest() + " seed=" + std::to_string(seed);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(tmp + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError(tmp + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError(path + ": rename failed: " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError(path + ": read failed");
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::domain_error("format_double: overflow");
  return std::string(buf, end);
}

} // namespace kodm
