#include "attnthermo/langevin.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "attnthermo/util/numerics.hpp"
#include "attnthermo/util/rng.hpp"

namespace thermo::langevin {

namespace {

void validate(const CWPotentialParams& p) {
  if (!(p.beta > 0.0)) throw std::invalid_argument("CWPotentialParams: beta <= 0");
  if (!(p.v > 0.0)) throw std::invalid_argument("CWPotentialParams: v <= 0");
  if (!std::isfinite(p.alpha))
    throw std::invalid_argument("CWPotentialParams: alpha not finite");
}

}  // namespace

double cw_potential(double phi1, double phi2, const CWPotentialParams& params) {
  validate(params);
  const double r2 = phi1 * phi1 + phi2 * phi2;
  if (r2 == 0.0) return 0.0;  // x ln x -> 0
  return params.alpha * r2 + params.beta * r2 * std::log(r2 / (params.v * params.v));
}

double cw_potential(double phi, const CWPotentialParams& params) {
  return cw_potential(phi, 0.0, params);
}

std::array<double, 2> cw_gradient(double phi1, double phi2,
                                  const CWPotentialParams& params) {
  validate(params);
  const double r2 = phi1 * phi1 + phi2 * phi2;
  if (r2 == 0.0) return {0.0, 0.0};
  const double radial =
      2.0 * (params.alpha +
             params.beta * (std::log(r2 / (params.v * params.v)) + 1.0));
  return {radial * phi1, radial * phi2};
}

double cw_gradient(double phi, const CWPotentialParams& params) {
  return cw_gradient(phi, 0.0, params)[0];
}

double trough_radius(const CWPotentialParams& params) {
  validate(params);
  // V(r) is unimodal on (0, inf): bracket the minimum by geometric expansion
  // from the vacuum scale, then golden-section.
  auto V = [&](double r) { return cw_potential(r, 0.0, params); };
  double lo = params.v;
  while (lo > 1e-300 && cw_gradient(lo, params) > 0.0) lo *= 0.5;
  double hi = params.v;
  while (hi < 1e300 && cw_gradient(hi, params) < 0.0) hi *= 2.0;
  const double gr = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  for (int it = 0; it < 200 && (b - a) > 1e-14 * params.v; ++it) {
    if (V(c) < V(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - gr * (b - a);
    d = a + gr * (b - a);
  }
  return 0.5 * (a + b);
}

LangevinTrajectory simulate(const CWPotentialParams& params,
                            const AnnealSchedule& schedule,
                            const LangevinConfig& cfg) {
  validate(params);
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("LangevinConfig: dt <= 0");
  if (!(cfg.diffusion > 0.0))
    throw std::invalid_argument("LangevinConfig: diffusion <= 0");
  if (cfg.n_particles < 2)
    throw std::invalid_argument("LangevinConfig: n_particles < 2");
  if (cfg.n_steps < 1) throw std::invalid_argument("LangevinConfig: n_steps < 1");
  if (cfg.window < 1 || cfg.window > cfg.n_steps)
    throw std::invalid_argument("LangevinConfig: bad window");
  if (cfg.field_dim != 1 && cfg.field_dim != 2)
    throw std::invalid_argument("LangevinConfig: field_dim must be 1 or 2");
  if (!(schedule.total_time > 0.0))
    throw std::invalid_argument("AnnealSchedule: total_time <= 0");

  const std::size_t n = static_cast<std::size_t>(cfg.n_particles);
  std::vector<std::array<double, 2>> phi(n, {0.0, 0.0});
  std::vector<util::Rng> rng;
  rng.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    rng.emplace_back(util::Rng::substream(cfg.seed, k));

  if (cfg.init_radius != 0.0) {
    for (std::size_t k = 0; k < n; ++k) phi[k] = {cfg.init_radius, 0.0};
  }

  const double noise_scale = std::sqrt(2.0 * cfg.diffusion * cfg.dt);

  LangevinTrajectory traj;
  const std::int64_t n_windows = cfg.n_steps / cfg.window;
  traj.times.reserve(n_windows);
  traj.mean_abs_phi.reserve(n_windows);
  traj.energy_mean.reserve(n_windows);
  traj.energy_var.reserve(n_windows);
  traj.cv.reserve(n_windows);

  std::vector<double> energies(n);
  double win_abs = 0.0, win_emean = 0.0, win_evar = 0.0;
  std::int64_t win_count = 0;

  CWPotentialParams pt = params;
  for (std::int64_t step = 0; step < cfg.n_steps; ++step) {
    const double t = static_cast<double>(step) * cfg.dt;
    pt.alpha = schedule.alpha_at(t);

    double abs_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto g = cw_gradient(phi[k][0], phi[k][1], pt);
      phi[k][0] += -g[0] * cfg.dt + noise_scale * rng[k].gauss();
      if (cfg.field_dim == 2)
        phi[k][1] += -g[1] * cfg.dt + noise_scale * rng[k].gauss();
      if (!std::isfinite(phi[k][0]) || !std::isfinite(phi[k][1]))
        throw std::runtime_error(
            "langevin::simulate: non-finite field at step " +
            std::to_string(step) + " (step too large)");
      energies[k] = cw_potential(phi[k][0], phi[k][1], pt);
      abs_sum += std::hypot(phi[k][0], phi[k][1]);
    }

    win_abs += abs_sum / static_cast<double>(n);
    win_emean += util::mean(energies);
    win_evar += util::population_variance(energies);
    ++win_count;

    if (cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0)
      traj.snapshots.push_back(phi);

    if (win_count == cfg.window) {
      const double inv = 1.0 / static_cast<double>(win_count);
      traj.times.push_back(static_cast<double>(step + 1) * cfg.dt);
      traj.mean_abs_phi.push_back(win_abs * inv);
      traj.energy_mean.push_back(win_emean * inv);
      traj.energy_var.push_back(win_evar * inv);
      traj.cv.push_back(win_evar * inv / (cfg.diffusion * cfg.diffusion));
      win_abs = win_emean = win_evar = 0.0;
      win_count = 0;
    }
  }

  traj.final_states = std::move(phi);
  return traj;
}

CrossoverSummary summarize_crossover(const LangevinTrajectory& traj) {
  if (traj.cv.empty())
    throw std::invalid_argument("summarize_crossover: empty trajectory");
  CrossoverSummary s;
  const std::size_t n = traj.cv.size();
  const std::size_t decile = std::max<std::size_t>(1, n / 10);

  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < decile; ++i) {
    head += traj.mean_abs_phi[i];
    tail += traj.mean_abs_phi[n - 1 - i];
  }
  s.initial_order_param = head / static_cast<double>(decile);
  s.final_order_param = tail / static_cast<double>(decile);

  // Transition = first window where the order parameter crosses the midpoint
  // between its initial and final plateaus.
  const double midpoint = 0.5 * (s.initial_order_param + s.final_order_param);
  s.transition_window = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (traj.mean_abs_phi[i] >= midpoint) {
      s.transition_window = static_cast<std::int64_t>(i);
      break;
    }
  }

  s.peak_window = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (traj.cv[i] > traj.cv[static_cast<std::size_t>(s.peak_window)])
      s.peak_window = static_cast<std::int64_t>(i);
  s.peak_cv = traj.cv[static_cast<std::size_t>(s.peak_window)];

  if (s.transition_window > 0) {
    std::vector<double> pre(traj.cv.begin(),
                            traj.cv.begin() + s.transition_window);
    s.pre_transition_median_cv = util::median(std::move(pre));
  } else {
    // No crossing: fall back to the first decile as the baseline.
    std::vector<double> pre(traj.cv.begin(), traj.cv.begin() + decile);
    s.pre_transition_median_cv = util::median(std::move(pre));
  }
  s.peak_ratio = s.pre_transition_median_cv > 0.0
                     ? s.peak_cv / s.pre_transition_median_cv
                     : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace thermo::langevin
