#include "kodm/wrapped_gaussian.hpp"

#include <cmath>
#include <stdexcept>

#include "kodm/parallel.hpp"
#include "kodm/rng.hpp"

namespace kodm {

namespace {

void check_params(double variance, int truncation, const char* where) {
  if (!(variance > 0.0))
    throw std::domain_error(std::string(where) + ": variance must be positive");
  if (truncation < 0)
    throw std::domain_error(std::string(where) + ": negative truncation");
}

constexpr double log_2pi = 1.8378770664093454836;

} // namespace

WrappedGaussianParams WrappedGaussianParams::from_mean(const PhaseField& mean,
                                                       double variance,
                                                       int truncation) {
  check_params(variance, truncation, "WrappedGaussianParams");
  WrappedGaussianParams p;
  p.mean = mean.phases;
  p.variance = variance;
  p.truncation = truncation;
  p.kind = mean.kind;
  p.height = mean.height;
  p.width = mean.width;
  return p;
}

double wg_log_density(double theta, double mean, double variance,
                      int truncation) {
  check_params(variance, truncation, "wg_log_density");
  const double d0 = wrap(theta - mean);
  // |d0| <= pi, so the k = 0 branch dominates; use it as the log-sum-exp pivot.
  const double lead = -d0 * d0 / (2.0 * variance);
  double tail = 0.0;
  for (int k = 1; k <= truncation; ++k) {
    const double dp = d0 + two_pi * k;
    const double dm = d0 - two_pi * k;
    tail += std::exp(-dp * dp / (2.0 * variance) - lead) +
            std::exp(-dm * dm / (2.0 * variance) - lead);
  }
  return lead + std::log1p(tail) - 0.5 * (log_2pi + std::log(variance));
}

double wg_score(double theta, double mean, double variance, int truncation) {
  check_params(variance, truncation, "wg_score");
  const double d0 = wrap(theta - mean);
  const double lead = -d0 * d0 / (2.0 * variance);
  double wsum = 1.0;
  double dsum = d0;
  for (int k = 1; k <= truncation; ++k) {
    const double dp = d0 + two_pi * k;
    const double dm = d0 - two_pi * k;
    const double wp = std::exp(-dp * dp / (2.0 * variance) - lead);
    const double wm = std::exp(-dm * dm / (2.0 * variance) - lead);
    wsum += wp + wm;
    dsum += wp * dp + wm * dm;
  }
  // d/dtheta log q = -(softmax-weighted displacement) / variance
  return -dsum / (wsum * variance);
}

double wg_log_density(const PhaseField& theta,
                      const WrappedGaussianParams& params) {
  if (theta.size() != params.mean.size())
    throw std::domain_error("wg_log_density: size mismatch");
  return parallel::det_sum(theta.size(), [&](std::size_t i) {
    return wg_log_density(theta.phases[i], params.mean[i], params.variance,
                          params.truncation);
  });
}

std::vector<double> wg_score(const PhaseField& theta,
                             const WrappedGaussianParams& params) {
  if (theta.size() != params.mean.size())
    throw std::domain_error("wg_score: size mismatch");
  std::vector<double> out(theta.size());
  parallel::parallel_for(theta.size(), [&](std::size_t i) {
    out[i] = wg_score(theta.phases[i], params.mean[i], params.variance,
                      params.truncation);
  });
  return out;
}

PhaseField wg_sample(const WrappedGaussianParams& params, std::uint64_t seed) {
  check_params(params.variance, params.truncation, "wg_sample");
  const double sigma = std::sqrt(params.variance);
  const auto stream = rng::derive_stream(seed, rng::tag_wg);
  std::vector<double> out(params.mean.size());
  parallel::parallel_for(params.mean.size(), [&](std::size_t i) {
    out[i] = wrap(params.mean[i] + sigma * rng::normal(stream, 0, i));
  });
  if (params.kind == ShapeKind::Lattice)
    return PhaseField::lattice(params.height, params.width, std::move(out));
  return PhaseField::flat(std::move(out));
}

} // namespace kodm
