#pragma once

#include <cstdint>
#include <vector>

namespace kodm::stats {

/// Counts over `bins` equal cells of [-pi, pi). Inputs must be wrapped.
std::vector<std::uint64_t> histogram_counts(const std::vector<double>& phases,
                                            int bins);

/// Histogram normalized to total mass 1.
std::vector<double> histogram_mass(const std::vector<double>& phases, int bins);

/// Aggregate a fine mass vector onto `coarse` bins; fine size must be a
/// multiple of coarse.
std::vector<double> coarsen_mass(const std::vector<double>& fine, int coarse);

/// Total variation distance between two mass vectors of equal length.
double tv_mass(const std::vector<double>& a, const std::vector<double>& b);

/// Kolmogorov-Smirnov statistic of wrapped phases against Uniform[-pi, pi).
double ks_vs_uniform(std::vector<double> phases);

/// Circular Wasserstein-1 distance (radians) between two samples, computed on
/// a fine common grid: min over rotations of the CDF-difference L1 norm.
double circular_w1(const std::vector<double>& a, const std::vector<double>& b,
                   int bins = 4096);

/// Same, between two mass vectors on the uniform circular grid.
double circular_w1_mass(const std::vector<double>& a,
                        const std::vector<double>& b);

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);

} // namespace kodm::stats
