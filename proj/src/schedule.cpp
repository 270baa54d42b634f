#include "kodm/schedule.hpp"

#include <cstdio>
#include <stdexcept>

#include "kodm/errors.hpp"

namespace kodm {

namespace {

std::vector<double> interpolate(int T, std::pair<double, double> range) {
  std::vector<double> v(T);
  if (T == 1) {
    v[0] = range.first;
    return v;
  }
  const double step = (range.second - range.first) / (T - 1);
  for (int i = 0; i < T; ++i) v[i] = range.first + step * i;
  return v;
}

void warn_once_ref_below_diffusion() {
  static bool warned = false;
  if (!warned) {
    warned = true;
    std::fprintf(stderr,
                 "warning: global preset has K_ref(t) <= D_t; the published "
                 "ranges keep K_ref at 0.9 D\n");
  }
}

} // namespace

Schedule linear_schedule(int T, std::pair<double, double> noise_range,
                         std::pair<double, double> coupling_range,
                         std::pair<double, double> ref_range, double psi_ref) {
  if (T < 1) throw std::domain_error("linear_schedule: T must be >= 1");
  if (noise_range.first <= 0.0 || noise_range.second <= 0.0)
    throw std::domain_error("linear_schedule: noise endpoints must be positive");
  if (coupling_range.first < 0.0 || coupling_range.second < 0.0 ||
      ref_range.first < 0.0 || ref_range.second < 0.0)
    throw std::domain_error("linear_schedule: couplings must be nonnegative");
  Schedule s;
  s.T = T;
  s.noise_var = interpolate(T, noise_range);
  s.coupling = interpolate(T, coupling_range);
  s.ref_coupling = interpolate(T, ref_range);
  s.psi_ref = wrap(psi_ref);
  return s;
}

Schedule global_preset(int T, double psi_ref) {
  Schedule s;
  switch (T) {
    case 100:
      s = linear_schedule(T, {1e-4, 0.1}, {3e-5, 0.03}, {4.5e-5, 0.045},
                          psi_ref);
      break;
    case 300:
      s = linear_schedule(T, {1e-4, 0.07}, {3e-5, 0.02}, {4.5e-5, 0.03},
                          psi_ref);
      break;
    case 1000:
      s = linear_schedule(T, {1e-4, 0.015}, {3e-5, 0.0045}, {4.5e-5, 0.00675},
                          psi_ref);
      break;
    default:
      throw ConfigError("global_preset: T must be 100, 300 or 1000");
  }
  bool ref_below = false;
  for (int t = 0; t < T; ++t) {
    if (!(s.diffusion(t) > s.coupling[t]))
      throw ConfigError("global_preset: D_t > K(t) violated");
    if (s.ref_coupling[t] <= s.diffusion(t)) ref_below = true;
  }
  if (ref_below) warn_once_ref_below_diffusion();
  return s;
}

Schedule local_preset(int T, double psi_ref) {
  switch (T) {
    case 100:
      return linear_schedule(T, {1e-4, 0.1}, {5e-5, 0.05}, {5e-5, 0.05},
                             psi_ref);
    case 300:
      return linear_schedule(T, {1e-4, 0.07}, {5e-5, 0.03}, {5e-5, 0.03},
                             psi_ref);
    case 1000:
      return linear_schedule(T, {1e-4, 0.025}, {5e-5, 0.01}, {5e-5, 0.01},
                             psi_ref);
    default:
      throw ConfigError("local_preset: T must be 100, 300 or 1000");
  }
}

std::vector<std::string> schedule_warnings(const Schedule& sched) {
  std::vector<std::string> out;
  if (sched.T < 1 || sched.noise_var.size() != static_cast<std::size_t>(sched.T) ||
      sched.coupling.size() != static_cast<std::size_t>(sched.T) ||
      sched.ref_coupling.size() != static_cast<std::size_t>(sched.T)) {
    out.push_back("schedule sequences do not all have length T");
    return out;
  }
  bool bad_noise = false, k_above_d = false, ref_below_d = false;
  for (int t = 0; t < sched.T; ++t) {
    if (sched.noise_var[t] <= 0.0) bad_noise = true;
    if (sched.coupling[t] >= sched.diffusion(t)) k_above_d = true;
    if (sched.ref_coupling[t] <= sched.diffusion(t)) ref_below_d = true;
  }
  if (bad_noise) out.push_back("noise_var is not strictly positive");
  if (k_above_d) out.push_back("K(t) >= D_t at some t (expected D_t > K)");
  if (ref_below_d) out.push_back("K_ref(t) <= D_t at some t (expected K_ref > D)");
  return out;
}

} // namespace kodm
