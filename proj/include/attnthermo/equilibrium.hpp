#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "attnthermo/infogeom.hpp"

// Canonical-ensemble engine for attention: partition function, softmax
// equilibrium, free-energy gradient, relaxation and second-order dynamics on
// the simplex, and the thermodynamic observable stack (U, S, F, C_v,
// pressure). Pure functions over immutable values; trajectories are returned,
// not streamed.
namespace thermo::equilibrium {

// Interaction energies E_i = -q.k_i, dimensionless model units.
class EnergyVector {
 public:
  explicit EnergyVector(std::vector<double> e);

  std::size_t size() const { return e_.size(); }
  double operator[](std::size_t i) const { return e_[i]; }
  std::span<const double> values() const { return e_; }

 private:
  std::vector<double> e_;
};

// Canonical microstate: energy landscape, temperature, and the attention
// distribution living on it. rho need not be the equilibrium distribution;
// relaxation trajectories pass through non-equilibrium states.
struct AttentionState {
  AttentionState(EnergyVector energies, double temperature,
                 infogeom::ProbabilityVector rho);

  EnergyVector energies;
  double temperature;
  infogeom::ProbabilityVector rho;
};

// Macroscopic readout. F = -T ln Z; at equilibrium F = U - T S (checked by
// tests, not enforced here, since off-equilibrium states are legal inputs).
struct ThermoObservables {
  double Z = 0.0;        // partition function
  double log_Z = 0.0;
  double U = 0.0;        // internal energy, sum rho_i E_i
  double S = 0.0;        // Shannon entropy, nats
  double F = 0.0;        // Helmholtz free energy, -T ln Z
  double Cv = 0.0;       // (1/T^2) Var_rho(E)
  double pressure = 0.0; // T / V_ctx
  std::int64_t context_volume = 1;
};

struct DynamicsConfig {
  double mass = 1.0;
  double damping = 0.0;          // gamma; artifact extension of the dynamics
  double step = 0.0;             // relax: mirror-descent rate; 2nd order: dt
  std::int64_t max_steps = 10000;
  double convergence_tol = 1e-10;  // max-norm of the projected gradient
};

struct RelaxResult {
  AttentionState state;
  std::vector<infogeom::ProbabilityVector> trajectory;
  bool converged = false;
  std::int64_t steps = 0;
};

struct SecondOrderResult {
  std::vector<std::pair<infogeom::ProbabilityVector, infogeom::TangentVector>>
      trajectory;
  bool converged = false;  // meaningful only for damped runs
};

// rho_i = exp(-E_i/T) / sum_j exp(-E_j/T), computed with max subtraction.
AttentionState softmax_equilibrium(const EnergyVector& e, double temperature);

// Z = sum_i exp(-E_i/T). Computed in the log domain; both views exposed.
struct PartitionFunction {
  double Z = 0.0;
  double log_Z = 0.0;
};
PartitionFunction partition_function(const EnergyVector& e, double temperature);

// Full observable stack for a state over a context window of V_ctx slots.
// U and S are evaluated under s.rho; F comes from the partition function.
ThermoObservables observables(const AttentionState& s,
                              std::int64_t context_volume);

// Free-energy functional F(rho) = sum rho_i E_i + T sum rho_i ln rho_i.
// Agrees with -T ln Z exactly at the softmax equilibrium.
double free_energy_functional(const EnergyVector& e, double temperature,
                              const infogeom::ProbabilityVector& rho);

// Unconstrained gradient g_i = E_i + T (ln rho_i + 1). The simplex-projected
// gradient (g minus its mean) vanishes iff rho is the softmax equilibrium.
// Requires an interior state.
std::vector<double> free_energy_gradient(const AttentionState& s);

// g minus its mean: the component of the gradient tangent to the simplex.
std::vector<double> project_gradient(std::span<const double> g);

// Entropic mirror descent (multiplicative updates) on F over the simplex,
// from `init`, until the projected gradient max-norm falls below
// cfg.convergence_tol or cfg.max_steps is reached. Multiplicative updates
// keep the iterate strictly interior; a halving backtrack on the step keeps
// F non-increasing. cfg.step <= 0 selects the default rate 0.5/T.
RelaxResult relax_to_equilibrium(const EnergyVector& e, double temperature,
                                 const infogeom::ProbabilityVector& init,
                                 const DynamicsConfig& cfg);

// Second-order dynamics m(rho_ddot_i/rho_i - rho_dot_i^2/(2 rho_i^2)) + E_i
// + T ln rho_i = Lambda, with damping -gamma rho_dot_i added as a force.
// Integrated in amplitude coordinates x_i = 2 sqrt(rho_i), where the same
// dynamics is a particle on the radius-2 sphere and the constraint multiplier
// (the per-step resolution of Lambda) has the RATTLE closed form; sum rho = 1
// is then conserved exactly and the undamped integrator is symplectic.
// Rejects any step that would push a component out of (0, 1).
SecondOrderResult integrate_second_order(const EnergyVector& e,
                                         double temperature,
                                         const infogeom::ProbabilityVector& init,
                                         const infogeom::TangentVector& init_velocity,
                                         const DynamicsConfig& cfg);

// Dynamical effective temperature sqrt(d_k) / |W|^2 (proportionality
// constant fixed to 1; only ratios and peak locations matter downstream).
double effective_temperature(std::int64_t d_k, double weight_norm_sq);

}  // namespace thermo::equilibrium
