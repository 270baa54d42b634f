#pragma once

#include <cstdint>
#include <vector>

namespace kodm {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

/// Map any finite angle into [-pi, pi) via ((theta + pi) mod 2pi) - pi.
/// Throws std::domain_error on non-finite input.
double wrap(double theta);

enum class ShapeKind { Flat, Lattice };

/// Oscillator state: a vector of wrapped phases, either an unstructured
/// Flat(n) field or a Lattice(height, width) with row-major storage.
struct PhaseField {
  std::vector<double> phases;
  ShapeKind kind = ShapeKind::Flat;
  int height = 1;
  int width = 0;

  static PhaseField flat(std::vector<double> values);
  static PhaseField lattice(int height, int width, std::vector<double> values);

  std::size_t size() const { return phases.size(); }
  bool is_lattice() const { return kind == ShapeKind::Lattice; }
  /// Re-wrap every element (factories already do; for post-arithmetic use).
  void rewrap();
};

struct OrderParameter {
  double r = 0.0;
  double psi = 0.0;
};

/// r e^{i psi} = (1/N) sum_j e^{i theta_j}; psi := 0 when r = 0 exactly.
OrderParameter order_parameter(const PhaseField& field);

/// Shorter arc length between two angles, in [0, pi].
double circular_distance(double a, double b);

struct VonMisesParams {
  double mu = 0.0;
  double kappa = 0.0;  // 0 means uniform on the circle
};

/// Modified Bessel I0 by power series, relative error < 1e-10 for x <= 50.
double bessel_i0(double x);

double von_mises_density(double theta, const VonMisesParams& params);
double von_mises_log_density(double theta, const VonMisesParams& params);

/// n i.i.d. draws by the Best-Fisher wrapped-Cauchy envelope rejection
/// method; deterministic given seed.
PhaseField von_mises_sample(const VonMisesParams& params, std::size_t n,
                            std::uint64_t seed);

} // namespace kodm
