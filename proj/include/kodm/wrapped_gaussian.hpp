#pragma once

#include <cstdint>
#include <vector>

#include "kodm/phase.hpp"

namespace kodm {

/// Truncated wrapped-normal transition parameters. The mean is kept pre-wrap
/// (theta_{t-1} + drift may leave [-pi, pi)); the density wraps internally.
struct WrappedGaussianParams {
  std::vector<double> mean;
  double variance = 0.0;  // 2 D of the step
  int truncation = 3;     // wraps each side
  ShapeKind kind = ShapeKind::Flat;
  int height = 1;
  int width = 0;

  static WrappedGaussianParams from_mean(const PhaseField& mean_field,
                                         double variance, int truncation = 3);
};

/// log sum_{k=-K..K} exp(-(delta + 2 pi k)^2 / (2 var)) - 0.5 log(2 pi var),
/// delta = wrap(theta - mean); log-sum-exp stabilized.
double wg_log_density(double theta, double mean, double variance,
                      int truncation = 3);

/// d/dtheta of the log-density: -(1/var) sum_k w_k (delta + 2 pi k) with
/// softmax weights w_k.
double wg_score(double theta, double mean, double variance, int truncation = 3);

/// Elementwise sum of per-site log-densities.
double wg_log_density(const PhaseField& theta, const WrappedGaussianParams& p);

/// Elementwise score field.
std::vector<double> wg_score(const PhaseField& theta,
                             const WrappedGaussianParams& p);

/// wrap(mean + sqrt(var) eps); the forward_step construction.
PhaseField wg_sample(const WrappedGaussianParams& p, std::uint64_t seed);

/// wrap(mean - sqrt(var) eps) with the same eps as wg_sample(p, seed);
/// antithetic partner for variance-reduced Monte Carlo.
PhaseField wg_sample_antithetic(const WrappedGaussianParams& p,
                                std::uint64_t seed);

} // namespace kodm
