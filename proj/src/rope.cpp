#include "attnthermo/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace thermo::rope {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const RotaryParams& params) {
  if (!(params.theta_base > 0.0) || !(params.theta_base < kPi))
    throw std::invalid_argument("RotaryParams: theta_base must be in (0, pi)");
  if (params.position < 0)
    throw std::invalid_argument("RotaryParams: position must be >= 0");
}

}  // namespace

std::pair<double, double> rotate_pair(double q1, double q2,
                                      const RotaryParams& params) {
  validate(params);
  const double angle = static_cast<double>(params.position) * params.theta_base;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {q1 * c - q2 * s, q1 * s + q2 * c};
}

double rope_energy_shift(double q1, double q2, const RotaryParams& params,
                         const langevin::CWPotentialParams& pot) {
  const auto [r1, r2] = rotate_pair(q1, q2, params);
  return langevin::cw_potential(r1, r2, pot) -
         langevin::cw_potential(q1, q2, pot);
}

CurvatureSplit curvature_split(const langevin::CWPotentialParams& pot) {
  if (!(pot.alpha < pot.beta))
    throw std::invalid_argument(
        "curvature_split: no broken-phase minimum (requires alpha < beta)");
  const double r = langevin::trough_radius(pot);

  CurvatureSplit out;
  {
    const double h = 1e-4 * r;
    const double vp = langevin::cw_potential(r + h, 0.0, pot);
    const double v0 = langevin::cw_potential(r, 0.0, pot);
    const double vm = langevin::cw_potential(r - h, 0.0, pot);
    out.radial = (vp - 2.0 * v0 + vm) / (h * h);
  }
  {
    // Arc step of length h: rotate the trough point by +/- h/r.
    const double h = 1e-3 * r;
    const double phi = h / r;
    const double c = std::cos(phi), s = std::sin(phi);
    const double vp = langevin::cw_potential(r * c, r * s, pot);
    const double v0 = langevin::cw_potential(r, 0.0, pot);
    const double vm = langevin::cw_potential(r * c, -r * s, pot);
    out.angular = (vp - 2.0 * v0 + vm) / (h * h);
  }
  return out;
}

std::vector<double> apply_rope(std::span<const double> query_or_key,
                               std::int64_t position,
                               std::span<const double> theta_schedule) {
  const std::size_t d = query_or_key.size();
  if (d == 0 || d % 2 != 0)
    throw std::invalid_argument("apply_rope: dimension must be even");
  if (theta_schedule.size() != d / 2)
    throw std::invalid_argument("apply_rope: schedule length must be d/2");
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double angle =
        static_cast<double>(position) * theta_schedule[i];
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double a = query_or_key[2 * i];
    const double b = query_or_key[2 * i + 1];
    out[2 * i] = a * c - b * s;
    out[2 * i + 1] = a * s + b * c;
  }
  return out;
}

std::vector<double> default_theta_schedule(std::int64_t d, double base) {
  if (d < 2 || d % 2 != 0)
    throw std::invalid_argument("default_theta_schedule: d must be even, >= 2");
  std::vector<double> theta(static_cast<std::size_t>(d / 2));
  for (std::size_t i = 0; i < theta.size(); ++i)
    theta[i] = std::pow(base, -2.0 * static_cast<double>(i) /
                                  static_cast<double>(d));
  return theta;
}

}  // namespace thermo::rope
