#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kodm/phase.hpp"

namespace kodm {

/// Per-timestep forward-process coefficients. noise_var holds 2*D_t; the
/// diffusion coefficient proper is noise_var/2. Slot t (0-based) governs the
/// transition out of state t.
struct Schedule {
  int T = 0;
  std::vector<double> noise_var;      // 2 D_t, strictly positive
  std::vector<double> coupling;       // K(t) >= 0
  std::vector<double> ref_coupling;   // K_ref(t) >= 0
  double psi_ref = 0.0;

  double diffusion(int t) const { return 0.5 * noise_var[t]; }
};

/// Linear interpolation from range.first to range.second inclusive over T
/// steps (T = 1 yields the start value).
Schedule linear_schedule(int T, std::pair<double, double> noise_range,
                         std::pair<double, double> coupling_range,
                         std::pair<double, double> ref_range, double psi_ref);

/// Canonical presets; T must be one of 100, 300, 1000. Global presets check
/// D_t > K(t) elementwise on construction and warn (once, to stderr) that the
/// published ranges place K_ref below D.
Schedule global_preset(int T, double psi_ref = 0.0);
Schedule local_preset(int T, double psi_ref = 0.0);

/// Consistency warnings for user-supplied schedules (never throws).
std::vector<std::string> schedule_warnings(const Schedule& sched);

} // namespace kodm
