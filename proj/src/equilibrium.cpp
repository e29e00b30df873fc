#include "attnthermo/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "attnthermo/util/numerics.hpp"

namespace thermo::equilibrium {

using infogeom::ProbabilityVector;
using infogeom::TangentVector;

EnergyVector::EnergyVector(std::vector<double> e) : e_(std::move(e)) {
  if (e_.empty()) throw std::invalid_argument("EnergyVector: empty");
  for (double x : e_) {
    if (!std::isfinite(x))
      throw std::invalid_argument("EnergyVector: non-finite component");
  }
}

AttentionState::AttentionState(EnergyVector energies_in, double temperature_in,
                               ProbabilityVector rho_in)
    : energies(std::move(energies_in)),
      temperature(temperature_in),
      rho(std::move(rho_in)) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("AttentionState: temperature must be > 0");
  if (energies.size() != rho.size())
    throw std::invalid_argument("AttentionState: energy/rho length mismatch");
}

AttentionState softmax_equilibrium(const EnergyVector& e, double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("softmax_equilibrium: temperature must be > 0");
  std::vector<double> logw(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) logw[i] = -e[i] / temperature;
  const double lz = util::log_sum_exp(logw);
  std::vector<double> rho(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) rho[i] = std::exp(logw[i] - lz);
  return AttentionState(e, temperature,
                        ProbabilityVector::normalized(std::move(rho)));
}

PartitionFunction partition_function(const EnergyVector& e,
                                     double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("partition_function: temperature must be > 0");
  std::vector<double> logw(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) logw[i] = -e[i] / temperature;
  PartitionFunction pf;
  pf.log_Z = util::log_sum_exp(logw);
  pf.Z = std::exp(pf.log_Z);
  return pf;
}

ThermoObservables observables(const AttentionState& s,
                              std::int64_t context_volume) {
  if (context_volume < 1)
    throw std::invalid_argument("observables: context_volume must be >= 1");
  const auto pf = partition_function(s.energies, s.temperature);
  ThermoObservables obs;
  obs.Z = pf.Z;
  obs.log_Z = pf.log_Z;
  double u = 0.0;
  std::vector<double> energies(s.energies.values().begin(),
                               s.energies.values().end());
  for (std::size_t i = 0; i < s.rho.size(); ++i) u += s.rho[i] * energies[i];
  obs.U = u;
  obs.S = util::shannon_entropy(s.rho.values());
  obs.F = -s.temperature * pf.log_Z;
  obs.Cv = util::weighted_variance(energies, s.rho.values()) /
           (s.temperature * s.temperature);
  obs.context_volume = context_volume;
  obs.pressure = s.temperature / static_cast<double>(context_volume);
  return obs;
}

double free_energy_functional(const EnergyVector& e, double temperature,
                              const ProbabilityVector& rho) {
  if (e.size() != rho.size())
    throw std::invalid_argument("free_energy_functional: size mismatch");
  double u = 0.0, neg_s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    u += rho[i] * e[i];
    if (rho[i] > 0.0) neg_s += rho[i] * std::log(rho[i]);
  }
  return u + temperature * neg_s;
}

std::vector<double> free_energy_gradient(const AttentionState& s) {
  std::vector<double> g(s.rho.size());
  for (std::size_t i = 0; i < s.rho.size(); ++i) {
    if (s.rho[i] <= 0.0)
      throw std::invalid_argument(
          "free_energy_gradient: boundary state (rho_i = 0)");
    g[i] = s.energies[i] + s.temperature * (std::log(s.rho[i]) + 1.0);
  }
  return g;
}

std::vector<double> project_gradient(std::span<const double> g) {
  const double m = util::mean(g);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] - m;
  return out;
}

namespace {

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Renormalize log-probabilities and exponentiate.
std::vector<double> softmax_of_log(std::vector<double> logp) {
  const double lz = util::log_sum_exp(logp);
  for (double& v : logp) v = std::exp(v - lz);
  return logp;
}

}  // namespace

RelaxResult relax_to_equilibrium(const EnergyVector& e, double temperature,
                                 const ProbabilityVector& init,
                                 const DynamicsConfig& cfg) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("relax_to_equilibrium: temperature must be > 0");
  if (e.size() != init.size())
    throw std::invalid_argument("relax_to_equilibrium: size mismatch");
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (init[i] <= 0.0)
      throw std::invalid_argument("relax_to_equilibrium: init not interior");
  }
  if (cfg.max_steps < 1)
    throw std::invalid_argument("relax_to_equilibrium: max_steps < 1");

  const double eta0 = cfg.step > 0.0 ? cfg.step : 0.5 / temperature;

  std::vector<double> rho(init.values().begin(), init.values().end());
  RelaxResult result{AttentionState(e, temperature, init), {}, false, 0};
  result.trajectory.push_back(init);

  double f_cur = free_energy_functional(e, temperature, init);
  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    // Gradient at the current iterate.
    std::vector<double> g(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i)
      g[i] = e[i] + temperature * (std::log(rho[i]) + 1.0);
    if (max_abs(project_gradient(g)) < cfg.convergence_tol) {
      result.converged = true;
      break;
    }

    // Mirror step rho <- rho * exp(-eta g), renormalized. F is convex on the
    // simplex and the default rate keeps the iteration monotone; the halving
    // backtrack only fires on a genuine increase (beyond roundoff noise,
    // which sits far below the 1e-12 monotonicity slack), so that aggressive
    // caller-supplied steps still cannot climb.
    double eta = eta0;
    std::vector<double> next;
    double f_next = 0.0;
    const double slack = 1e-13 * (1.0 + std::abs(f_cur));
    for (int attempt = 0; attempt < 60; ++attempt) {
      std::vector<double> logp(rho.size());
      for (std::size_t i = 0; i < rho.size(); ++i)
        logp[i] = std::log(rho[i]) - eta * g[i];
      next = softmax_of_log(std::move(logp));
      f_next = free_energy_functional(
          e, temperature, ProbabilityVector::normalized(next));
      if (f_next <= f_cur + slack) break;
      eta *= 0.5;
    }
    rho = next;
    f_cur = f_next;
    result.trajectory.push_back(ProbabilityVector::normalized(rho));
    result.steps = step + 1;
  }

  result.state = AttentionState(e, temperature,
                                ProbabilityVector::normalized(rho));
  if (!result.converged) {
    // Final iterate may still satisfy the tolerance when the loop ran out
    // exactly at max_steps.
    const auto g = free_energy_gradient(result.state);
    result.converged = max_abs(project_gradient(g)) < cfg.convergence_tol;
  }
  return result;
}

SecondOrderResult integrate_second_order(const EnergyVector& e,
                                         double temperature,
                                         const ProbabilityVector& init,
                                         const TangentVector& init_velocity,
                                         const DynamicsConfig& cfg) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("integrate_second_order: temperature must be > 0");
  if (!(cfg.mass > 0.0))
    throw std::invalid_argument("integrate_second_order: mass must be > 0");
  if (cfg.damping < 0.0)
    throw std::invalid_argument("integrate_second_order: damping must be >= 0");
  if (!(cfg.step > 0.0))
    throw std::invalid_argument("integrate_second_order: step must be > 0");
  const std::size_t n = init.size();
  if (e.size() != n || init_velocity.size() != n)
    throw std::invalid_argument("integrate_second_order: size mismatch");

  // Amplitude coordinates: x_i = 2 sqrt(rho_i), u = x_dot. In these
  // coordinates the kinetic term is flat, (m/2)|u|^2, and the simplex
  // constraint becomes |x|^2 = 4, handled by SHAKE/RATTLE. The raw force is
  //   f_i = -(x_i/2) (E_i + T ln rho_i) - gamma rho_i u_i,
  // the image of the rho-space force -(E_i + T ln rho_i) - gamma rho_dot_i;
  // the constraint multiplier plays the role of Lambda.
  std::vector<double> x(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (init[i] <= 0.0)
      throw std::invalid_argument("integrate_second_order: init not interior");
    x[i] = 2.0 * std::sqrt(init[i]);
    u[i] = init_velocity[i] / std::sqrt(init[i]);
  }

  const double dt = cfg.step;
  const double inv_m = 1.0 / cfg.mass;

  auto force = [&](const std::vector<double>& xs, const std::vector<double>& us,
                   std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      const double rho_i = xs[i] * xs[i] / 4.0;
      out[i] = -(xs[i] / 2.0) * (e[i] + temperature * std::log(rho_i)) -
               cfg.damping * rho_i * us[i];
    }
  };

  auto to_rho_pair = [&](const std::vector<double>& xs,
                         const std::vector<double>& us) {
    std::vector<double> rho(n), rho_dot(n);
    for (std::size_t i = 0; i < n; ++i) {
      rho[i] = xs[i] * xs[i] / 4.0;
      rho_dot[i] = xs[i] * us[i] / 2.0;
    }
    // RATTLE keeps x.u = 0, i.e. sum rho_dot = 0, up to roundoff; sweep the
    // residual into the largest component so TangentVector construction holds.
    double resid = 0.0;
    for (double rd : rho_dot) resid += rd;
    std::size_t imax = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (rho[i] > rho[imax]) imax = i;
    rho_dot[imax] -= resid;
    return std::make_pair(ProbabilityVector::normalized(std::move(rho)),
                          TangentVector(std::move(rho_dot)));
  };

  SecondOrderResult result;
  result.trajectory.reserve(static_cast<std::size_t>(cfg.max_steps) + 1);
  result.trajectory.push_back(to_rho_pair(x, u));

  std::vector<double> f(n), f_new(n);
  force(x, u, f);
  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    // Half kick.
    std::vector<double> uh(n);
    for (std::size_t i = 0; i < n; ++i) uh[i] = u[i] + 0.5 * dt * inv_m * f[i];

    // Drift, then SHAKE back onto |x|^2 = 4 along the old configuration.
    std::vector<double> xn(n);
    for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + dt * uh[i];
    double a = 0.0, b = 0.0, c = -4.0;
    for (std::size_t i = 0; i < n; ++i) {
      a += x[i] * x[i];
      b += 2.0 * xn[i] * x[i];
      c += xn[i] * xn[i];
    }
    const double disc = b * b - 4.0 * a * c;
    if (!(disc >= 0.0))
      throw std::runtime_error(
          "integrate_second_order: constraint projection failed at step " +
          std::to_string(step) + " (step size too large)");
    // Root of smallest magnitude (stable quadratic formula).
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    const double lam = c / q;
    for (std::size_t i = 0; i < n; ++i) {
      xn[i] += lam * x[i];
      uh[i] += (lam / dt) * x[i];
    }

    // Step rejection: components must stay strictly inside (0, 1) in rho.
    for (std::size_t i = 0; i < n; ++i) {
      const double rho_i = xn[i] * xn[i] / 4.0;
      if (!(rho_i > 0.0) || !(rho_i < 1.0))
        throw std::runtime_error(
            "integrate_second_order: component left (0,1) at step " +
            std::to_string(step) + "; reduce cfg.step");
    }

    // Second half kick (force uses the half-step velocity estimate; exact
    // for gamma = 0), then RATTLE velocity projection onto x.u = 0.
    force(xn, uh, f_new);
    std::vector<double> un(n);
    for (std::size_t i = 0; i < n; ++i)
      un[i] = uh[i] + 0.5 * dt * inv_m * f_new[i];
    double xu = 0.0, xx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      xu += xn[i] * un[i];
      xx += xn[i] * xn[i];
    }
    for (std::size_t i = 0; i < n; ++i) un[i] -= (xu / xx) * xn[i];

    x.swap(xn);
    u.swap(un);
    f.swap(f_new);
    result.trajectory.push_back(to_rho_pair(x, u));
  }

  // Convergence readout for damped runs: stationarity of the final state.
  const auto& [rho_f, v_f] = result.trajectory.back();
  double vmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) vmax = std::max(vmax, std::abs(v_f[i]));
  result.converged = cfg.damping > 0.0 && vmax < cfg.convergence_tol;
  return result;
}

double effective_temperature(std::int64_t d_k, double weight_norm_sq) {
  if (d_k < 1) throw std::invalid_argument("effective_temperature: d_k < 1");
  if (!(weight_norm_sq > 0.0))
    throw std::invalid_argument("effective_temperature: |W|^2 must be > 0");
  return std::sqrt(static_cast<double>(d_k)) / weight_norm_sq;
}

}  // namespace thermo::equilibrium
