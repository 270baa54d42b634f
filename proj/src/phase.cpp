#include "kodm/phase.hpp"

#include <cmath>
#include <stdexcept>

#include "kodm/parallel.hpp"
#include "kodm/rng.hpp"

namespace kodm {

double wrap(double theta) {
  if (!std::isfinite(theta)) throw std::domain_error("wrap: non-finite angle");
  if (theta >= -pi && theta < pi) return theta;  // exact idempotence
  double w = std::fmod(theta + pi, two_pi);
  if (w < 0.0) w += two_pi;
  double result = w - pi;
  if (result >= pi) result = -pi;  // rounding at the seam
  return result;
}

PhaseField PhaseField::flat(std::vector<double> values) {
  if (values.empty()) throw std::domain_error("PhaseField: empty field");
  PhaseField f;
  f.width = static_cast<int>(values.size());
  f.phases = std::move(values);
  f.kind = ShapeKind::Flat;
  f.height = 1;
  f.rewrap();
  return f;
}

PhaseField PhaseField::lattice(int height, int width,
                               std::vector<double> values) {
  if (height < 1 || width < 1)
    throw std::domain_error("PhaseField: lattice dims must be positive");
  if (values.size() != static_cast<std::size_t>(height) * width)
    throw std::domain_error("PhaseField: lattice size mismatch");
  PhaseField f;
  f.phases = std::move(values);
  f.kind = ShapeKind::Lattice;
  f.height = height;
  f.width = width;
  f.rewrap();
  return f;
}

void PhaseField::rewrap() {
  for (double& p : phases) p = wrap(p);
}

OrderParameter order_parameter(const PhaseField& field) {
  const std::size_t n = field.size();
  if (n == 0) throw std::domain_error("order_parameter: empty field");
  const auto sums = parallel::det_sums<2>(n, [&](std::size_t i, double* acc) {
    acc[0] += std::sin(field.phases[i]);
    acc[1] += std::cos(field.phases[i]);
  });
  const double s = sums[0] / static_cast<double>(n);
  const double c = sums[1] / static_cast<double>(n);
  OrderParameter op;
  op.r = std::hypot(s, c);
  if (op.r > 1.0) op.r = 1.0;
  op.psi = op.r == 0.0 ? 0.0 : wrap(std::atan2(s, c));
  return op;
}

double circular_distance(double a, double b) {
  return std::fabs(wrap(a - b));
}

double bessel_i0(double x) {
  const double half = 0.5 * std::fabs(x);
  double term = 1.0;
  double sum = 1.0;
  for (int m = 1; m < 1000; ++m) {
    const double factor = half / m;
    term *= factor * factor;
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

double von_mises_log_density(double theta, const VonMisesParams& params) {
  if (params.kappa < 0.0)
    throw std::domain_error("von Mises: kappa must be nonnegative");
  return params.kappa * std::cos(theta - params.mu) -
         std::log(two_pi * bessel_i0(params.kappa));
}

double von_mises_density(double theta, const VonMisesParams& params) {
  return std::exp(von_mises_log_density(theta, params));
}

PhaseField von_mises_sample(const VonMisesParams& params, std::size_t n,
                            std::uint64_t seed) {
  if (params.kappa < 0.0)
    throw std::domain_error("von Mises: kappa must be nonnegative");
  if (n == 0) throw std::domain_error("von_mises_sample: n must be positive");
  const auto stream = rng::derive_stream(seed, rng::tag_von_mises);
  std::vector<double> out(n);
  const double kappa = params.kappa;

  if (kappa < 1e-8) {
    parallel::parallel_for(n, [&](std::size_t i) {
      out[i] = wrap(-pi + two_pi * rng::u01(stream, i, 0));
    });
    return PhaseField::flat(std::move(out));
  }

  const double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
  const double rho = (1.0 + b * b) / (2.0 * b);
  parallel::parallel_for(n, [&](std::size_t i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const double u1 = rng::u01(stream, i, 3 * attempt);
      const double u2 = rng::u01(stream, i, 3 * attempt + 1);
      const double z = std::cos(pi * u1);
      const double f = (1.0 + rho * z) / (rho + z);
      const double c = kappa * (rho - f);
      if (c * (2.0 - c) - u2 > 0.0 ||
          (u2 > 0.0 && std::log(c / u2) + 1.0 - c >= 0.0)) {
        const double u3 = rng::u01(stream, i, 3 * attempt + 2);
        const double angle = u3 < 0.5 ? -std::acos(f) : std::acos(f);
        out[i] = wrap(params.mu + angle);
        return;
      }
    }
  });
  return PhaseField::flat(std::move(out));
}

} // namespace kodm
