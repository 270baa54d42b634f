#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kodm/phase.hpp"
#include "kodm/sha256.hpp"

namespace kodm {

struct PixelPatch {
  std::vector<double> values;  // grayscale in [-1, 1]
  int height = 0;
  int width = 0;
};

/// theta = 0.9 pi x elementwise; Lattice shape preserved.
PhaseField pixel_to_phase(const PixelPatch& patch);

struct PixelizeResult {
  PixelPatch patch;
  std::size_t clamped = 0;  // sites found in the dead zone (0.9 pi, pi)
};

/// x = clamp(theta / 0.9 pi, -1, 1).
PixelizeResult phase_to_pixel(const PhaseField& field);

/// Binary P5, maxval 255; v -> 2 v/255 - 1 on load, round-half-even inverse
/// on save. Canonical header, byte-stable writer.
PixelPatch load_pgm(const std::string& path);
void save_pgm(const PixelPatch& patch, const std::string& path);

struct MixtureComponent {
  double mu = 0.0;
  double kappa = 0.0;
  double weight = 1.0;
};

struct ToyDatasetSpec {
  enum class Kind { VonMisesMixture, OrientedStripes };
  Kind kind = Kind::VonMisesMixture;
  std::size_t count = 1024;
  std::uint64_t seed = 7;
  // VonMisesMixture
  std::vector<MixtureComponent> components;
  int n_sites = 64;
  // OrientedStripes
  int size = 16;
  std::vector<double> angles;  // in [0, pi)
  double freq_min = 0.5;
  double freq_max = 2.0;
};

std::vector<PhaseField> make_toy_dataset(const ToyDatasetSpec& spec);

Sha256Digest dataset_fingerprint(const ToyDatasetSpec& spec);

/// Datasets and generated samples reuse the trajectory-cache container
/// (records carry t = 0); loads check structure only.
void write_dataset(const std::vector<PhaseField>& fields,
                   const Sha256Digest& fingerprint, const std::string& path);
std::vector<PhaseField> load_dataset(const std::string& path);

/// INI-style configuration: [section] headers, key = value lines, #-comments.
/// Any section or key outside the registered schema is a hard error.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text, const std::string& origin);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long get_long(const std::string& section, const std::string& key,
                long fallback) const;
  std::uint64_t get_seed(const std::string& section, const std::string& key,
                         std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key) const;

  /// SHA-256 of the raw file text, hex.
  const std::string& digest() const { return digest_; }

 private:
  void validate() const;

  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::string digest_;
  std::string origin_;
};

/// "# run: config_sha256=<hex> seed=<n>" — embedded at the top of every CSV.
std::string run_record(const Config& cfg, std::uint64_t seed);

/// Write via temp file + rename so readers never see partial output.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

std::string format_double(double v);  // shortest round-trip-stable form used in CSVs

} // namespace kodm
