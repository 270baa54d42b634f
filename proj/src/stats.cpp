#include "kodm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kodm/phase.hpp"

namespace kodm::stats {

std::vector<std::uint64_t> histogram_counts(const std::vector<double>& phases,
                                            int bins) {
  if (bins < 1) throw std::domain_error("histogram: bins must be positive");
  std::vector<std::uint64_t> counts(bins, 0);
  const double scale = bins / two_pi;
  for (double p : phases) {
    int idx = static_cast<int>((p + pi) * scale);
    if (idx < 0) idx = 0;
    if (idx >= bins) idx = bins - 1;
    ++counts[idx];
  }
  return counts;
}

std::vector<double> histogram_mass(const std::vector<double>& phases,
                                   int bins) {
  const auto counts = histogram_counts(phases, bins);
  std::vector<double> mass(counts.size());
  const double inv = phases.empty() ? 0.0 : 1.0 / phases.size();
  for (std::size_t i = 0; i < counts.size(); ++i) mass[i] = counts[i] * inv;
  return mass;
}

std::vector<double> coarsen_mass(const std::vector<double>& fine, int coarse) {
  if (coarse < 1 || fine.size() % coarse != 0)
    throw std::domain_error("coarsen_mass: incompatible bin counts");
  const std::size_t ratio = fine.size() / coarse;
  std::vector<double> out(coarse, 0.0);
  for (std::size_t i = 0; i < fine.size(); ++i) out[i / ratio] += fine[i];
  return out;
}

double tv_mass(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::domain_error("tv_mass: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(a[i] - b[i]);
  return 0.5 * sum;
}

double ks_vs_uniform(std::vector<double> phases) {
  if (phases.empty()) throw std::domain_error("ks_vs_uniform: empty sample");
  std::sort(phases.begin(), phases.end());
  const double n = static_cast<double>(phases.size());
  double d = 0.0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const double cdf = (phases[i] + pi) / two_pi;
    d = std::max(d, std::fabs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - cdf));
  }
  return d;
}

double circular_w1_mass(const std::vector<double>& a,
                        const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::domain_error("circular_w1_mass: length mismatch");
  std::vector<double> diff(a.size());
  double running = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    running += a[i] - b[i];
    diff[i] = running;
  }
  std::vector<double> sorted = diff;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double width = two_pi / static_cast<double>(a.size());
  double total = 0.0;
  for (double d : diff) total += std::fabs(d - median);
  return width * total;
}

double circular_w1(const std::vector<double>& a, const std::vector<double>& b,
                   int bins) {
  return circular_w1_mass(histogram_mass(a, bins), histogram_mass(b, bins));
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::domain_error("mean: empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? s / static_cast<double>(v.size() - 1) : 0.0;
}

} // namespace kodm::stats
