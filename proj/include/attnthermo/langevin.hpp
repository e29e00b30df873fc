#pragma once

#include <array>
#include <cstdint>
#include <vector>

// Overdamped Langevin simulation of an order-parameter field in the
// logarithmic Coleman-Weinberg potential V = alpha |Phi|^2 + beta |Phi|^2
// ln(|Phi|^2 / v^2), with a linear anneal of alpha and windowed fluctuation
// observables. The field is a single particle (scalar or two-component); there
// is no spatial lattice.
namespace thermo::langevin {

struct CWPotentialParams {
  double alpha = 1.0;  // quadratic coefficient; annealed over time
  double beta = 1.0;   // log-term coefficient, > 0
  double v = 1.0;      // vacuum scale, > 0
};

// alpha(t) interpolates linearly from alpha_start at t = 0 to alpha_end at
// t = total_time and holds alpha_end afterwards. The defaults sweep fast
// enough through the instability that the ensemble lags equilibrium there;
// a slow (quasi-adiabatic) sweep tracks the deepening trough smoothly and
// produces no fluctuation spike at all.
struct AnnealSchedule {
  double alpha_start = 8.0;
  double alpha_end = -2.0;
  double total_time = 16.0;

  double alpha_at(double t) const {
    if (t <= 0.0) return alpha_start;
    if (t >= total_time) return alpha_end;
    return alpha_start + (alpha_end - alpha_start) * (t / total_time);
  }
};

struct LangevinConfig {
  double dt = 0.01;
  double diffusion = 0.02;        // D; the bath temperature by convention
  std::int64_t n_particles = 256;
  std::int64_t n_steps = 4000;    // the default anneal crosses over mid-run
  std::uint64_t seed = 0;
  int field_dim = 1;              // 1 = scalar Phi, 2 = complex Phi
  std::int64_t window = 100;      // steps per observable window
  double init_radius = 0.0;       // all particles start at (init_radius, 0)
  std::int64_t snapshot_every = 0;  // 0 = off; else record particle states
};

// Windowed observable series. cv = energy_var / D^2 (Einstein relation:
// the noise temperature is D at mobility 1). Within each window the
// cross-particle population variance of the energy is averaged over steps.
struct LangevinTrajectory {
  std::vector<double> times;          // window end times
  std::vector<double> mean_abs_phi;   // order parameter <|Phi|>
  std::vector<double> energy_mean;
  std::vector<double> energy_var;
  std::vector<double> cv;
  // Final ensemble state, one row per particle (second component zero for
  // scalar fields), plus optional mid-run snapshots for distribution tests.
  std::vector<std::array<double, 2>> final_states;
  std::vector<std::vector<std::array<double, 2>>> snapshots;
};

// V(Phi) = alpha |Phi|^2 + beta |Phi|^2 ln(|Phi|^2 / v^2); V(0) := 0 by
// continuity. |phi|^2 = phi1^2 + phi2^2 (pass phi2 = 0 for scalar fields).
double cw_potential(double phi1, double phi2, const CWPotentialParams& params);
double cw_potential(double phi, const CWPotentialParams& params);

// Gradient of V. Radial: d/dPhi_k = 2 Phi_k [alpha + beta(ln(|Phi|^2/v^2)+1)];
// zero at the origin by continuity, and tangentially zero everywhere (the
// potential is phase-independent).
std::array<double, 2> cw_gradient(double phi1, double phi2,
                                  const CWPotentialParams& params);
double cw_gradient(double phi, const CWPotentialParams& params);

// Radius of the potential trough, found by golden-section search on V(r).
// (The closed form v e^{-(alpha+beta)/(2 beta)} is used as a test oracle.)
double trough_radius(const CWPotentialParams& params);

// Euler-Maruyama: Phi <- Phi - grad V(Phi, alpha(t)) dt + sqrt(2 D dt) eta,
// eta standard Gaussian per component. Each particle owns a noise stream
// derived from (seed, particle index), so the result is independent of any
// evaluation order. Throws on a non-finite field value with the offending
// step index.
LangevinTrajectory simulate(const CWPotentialParams& params,
                            const AnnealSchedule& schedule,
                            const LangevinConfig& cfg);

// Peak diagnostics used by the CLI and the acceptance checks: index of the
// cv maximum, the pre-transition cv median (windows before the order
// parameter first crosses the midpoint between its initial and final
// plateaus), and their ratio.
struct CrossoverSummary {
  std::int64_t peak_window = 0;
  double peak_cv = 0.0;
  double pre_transition_median_cv = 0.0;
  double peak_ratio = 0.0;
  std::int64_t transition_window = -1;  // -1 when no crossing detected
  double initial_order_param = 0.0;     // mean over the first decile
  double final_order_param = 0.0;       // mean over the last decile
};
CrossoverSummary summarize_crossover(const LangevinTrajectory& traj);

}  // namespace thermo::langevin
