#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "attnthermo/langevin.hpp"

// Rotary positional embedding as a phase rotation, plus the numerical checks
// that the rotation costs no potential energy and that the trough of the
// Coleman-Weinberg potential is stiff radially but flat along the angular
// (Goldstone) direction.
namespace thermo::rope {

struct RotaryParams {
  double theta_base = 0.1;    // per-position rotation angle, in (0, pi)
  std::int64_t position = 0;  // nonnegative token position m
};

// (q1, q2) rotated by angle m * theta_base. Norm-preserving.
std::pair<double, double> rotate_pair(double q1, double q2,
                                      const RotaryParams& params);

// V(rotate_pair(q)) - V(q) with (q1, q2) as the two-component field.
// Identically zero: the potential depends only on |Phi|.
double rope_energy_shift(double q1, double q2, const RotaryParams& params,
                         const langevin::CWPotentialParams& pot);

struct CurvatureSplit {
  double radial = 0.0;   // second difference of V along the radius: > 0
  double angular = 0.0;  // second difference along the trough arc: ~ 0
};

// Second finite differences of V at the trough. The radial direction uses a
// chord step h = 1e-4 * r_trough. The angular direction walks along the arc
// (exact rotations, arc-length step 1e-3 * r_trough): a straight tangent
// chord at this scale picks up a beta h^2 / r^2 bias that would swamp the
// flat-direction signal. Requires the broken-phase regime alpha < beta.
CurvatureSplit curvature_split(const langevin::CWPotentialParams& pot);

// Per-pair rotary embedding over a vector of even dimension d: pair
// (2i, 2i+1) is rotated by position * theta_schedule[i].
std::vector<double> apply_rope(std::span<const double> query_or_key,
                               std::int64_t position,
                               std::span<const double> theta_schedule);

// Default frequency schedule theta_i = base^(-2i/d), the usual geometric
// spacing; d must be even.
std::vector<double> default_theta_schedule(std::int64_t d, double base = 10000.0);

}  // namespace thermo::rope
