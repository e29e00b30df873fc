#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "attnthermo/equilibrium.hpp"
#include "attnthermo/util/numerics.hpp"
#include "attnthermo/util/rng.hpp"

using namespace thermo;
using equilibrium::AttentionState;
using equilibrium::EnergyVector;
using infogeom::ProbabilityVector;

namespace {

EnergyVector random_energies(std::size_t n, util::Rng& rng, double scale = 2.0) {
  std::vector<double> e(n);
  for (auto& x : e) x = rng.gauss(0.0, scale);
  return EnergyVector(std::move(e));
}

}  // namespace

TEST_CASE("softmax equilibrium closed forms") {
  const auto sym = equilibrium::softmax_equilibrium(EnergyVector({0, 0, 0}), 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(sym.rho[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const auto two =
      equilibrium::softmax_equilibrium(EnergyVector({0.0, std::log(2.0)}), 1.0);
  CHECK(two.rho[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two.rho[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  // Independent evaluation of the Boltzmann weights for E = [0, 1, 2], T = 1.
  const double z = 1.0 + std::exp(-1.0) + std::exp(-2.0);
  const auto three =
      equilibrium::softmax_equilibrium(EnergyVector({0, 1, 2}), 1.0);
  CHECK(three.rho[0] == doctest::Approx(1.0 / z).epsilon(1e-13));
  CHECK(three.rho[1] == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-13));
  CHECK(three.rho[2] == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-13));
  CHECK(three.rho[0] == doctest::Approx(0.66524).epsilon(1e-4));
  CHECK(three.rho[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(three.rho[2] == doctest::Approx(0.09003).epsilon(1e-3));

  CHECK_THROWS_AS(equilibrium::softmax_equilibrium(EnergyVector({0, 1}), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(equilibrium::softmax_equilibrium(EnergyVector({0, 1}), -2.0),
                  std::invalid_argument);
}

TEST_CASE("partition function values and overflow safety") {
  CHECK(equilibrium::partition_function(EnergyVector({0, 0}), 1.0).Z ==
        doctest::Approx(2.0).epsilon(1e-14));
  CHECK(equilibrium::partition_function(EnergyVector({0.0, std::log(2.0)}), 1.0).Z ==
        doctest::Approx(1.5).epsilon(1e-14));
  const double z = 1.0 + std::exp(-1.0) + std::exp(-2.0);
  CHECK(equilibrium::partition_function(EnergyVector({0, 1, 2}), 1.0).Z ==
        doctest::Approx(z).epsilon(1e-13));
  CHECK(z == doctest::Approx(1.50321).epsilon(1e-5));

  // Energies that would overflow exp() directly.
  const auto pf = equilibrium::partition_function(
      EnergyVector({-2000.0, -2000.0}), 1.0);
  CHECK(pf.log_Z == doctest::Approx(2000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(std::isinf(pf.Z));  // Z itself overflows; log_Z is the usable view
  const auto st = equilibrium::softmax_equilibrium(
      EnergyVector({-2000.0, -2000.0}), 1.0);
  CHECK(st.rho[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("observables: degenerate two-level and the worked two-level case") {
  const auto deg = equilibrium::observables(
      equilibrium::softmax_equilibrium(EnergyVector({0, 0}), 1.0), 2);
  CHECK(deg.U == doctest::Approx(0.0));
  CHECK(deg.S == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(deg.F == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
  CHECK(deg.Cv == doctest::Approx(0.0));
  CHECK(deg.pressure == doctest::Approx(0.5));

  const auto two = equilibrium::observables(
      equilibrium::softmax_equilibrium(EnergyVector({0.0, std::log(2.0)}), 1.0), 2);
  const double ln2 = std::log(2.0);
  CHECK(two.U == doctest::Approx(ln2 / 3.0).epsilon(1e-13));
  // weighted variance evaluated directly: (1/3)ln2^2 - (ln2/3)^2 = (2/9)ln2^2
  CHECK(two.Cv == doctest::Approx(2.0 * ln2 * ln2 / 9.0).epsilon(1e-13));
  CHECK(two.Cv == doctest::Approx(0.10675).epsilon(2e-4));

  // pressure = T / V_ctx
  const auto pr = equilibrium::observables(
      equilibrium::softmax_equilibrium(EnergyVector({0, 1}), 1.0), 10);
  CHECK(pr.pressure == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(
      equilibrium::observables(
          equilibrium::softmax_equilibrium(EnergyVector({0, 1}), 1.0), 0),
      std::invalid_argument);
}

TEST_CASE("F = -T ln Z = U - T S at equilibrium") {
  util::Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(63);
    const double T = 0.1 + rng.uniform01() * 99.9;
    const auto e = random_energies(n, rng, 3.0);
    const auto s = equilibrium::softmax_equilibrium(e, T);
    const auto obs = equilibrium::observables(s, static_cast<std::int64_t>(n));
    CHECK(std::abs(obs.F - (obs.U - T * obs.S)) <
          1e-10 * std::max(1.0, std::abs(obs.F)));
    CHECK(obs.S >= 0.0);
    CHECK(obs.S <= std::log(static_cast<double>(n)) + 1e-12);
    CHECK(obs.Cv >= 0.0);
    // The free-energy functional agrees with -T ln Z at equilibrium.
    CHECK(equilibrium::free_energy_functional(e, T, s.rho) ==
          doctest::Approx(obs.F).epsilon(1e-10));
  }
}

TEST_CASE("entropy matches -dF/dT by central differences") {
  util::Rng rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.below(32);
    const double T = 0.5 + rng.uniform01() * 10.0;
    const auto e = random_energies(n, rng);
    const double h = 1e-5 * T;
    const auto up = equilibrium::observables(
        equilibrium::softmax_equilibrium(e, T + h), 1);
    const auto dn = equilibrium::observables(
        equilibrium::softmax_equilibrium(e, T - h), 1);
    const double S_fd = -(up.F - dn.F) / (2.0 * h);
    const auto obs = equilibrium::observables(
        equilibrium::softmax_equilibrium(e, T), 1);
    CHECK(S_fd == doctest::Approx(obs.S).epsilon(1e-4));
  }
}

TEST_CASE("fluctuation-dissipation: dU/dT = Var(E)/T^2") {
  util::Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(63);
    const double T = 0.1 + rng.uniform01() * 99.9;
    const auto e = random_energies(n, rng);
    const double h = 1e-4 * T;
    const auto up = equilibrium::observables(
        equilibrium::softmax_equilibrium(e, T + h), 1);
    const auto dn = equilibrium::observables(
        equilibrium::softmax_equilibrium(e, T - h), 1);
    const double dU_dT = (up.U - dn.U) / (2.0 * h);
    const auto obs = equilibrium::observables(
        equilibrium::softmax_equilibrium(e, T), 1);
    if (obs.Cv > 1e-12)
      CHECK(dU_dT == doctest::Approx(obs.Cv).epsilon(1e-4));
  }
}

TEST_CASE("softmax is invariant under a uniform energy shift") {
  util::Rng rng(37);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(32);
    const double T = 0.1 + rng.uniform01() * 10.0;
    std::vector<double> e(n);
    for (auto& x : e) x = rng.gauss(0.0, 2.0);
    const double c = rng.gauss(0.0, 50.0);
    std::vector<double> shifted = e;
    for (auto& x : shifted) x += c;
    const auto a = equilibrium::softmax_equilibrium(EnergyVector(e), T);
    const auto b = equilibrium::softmax_equilibrium(EnergyVector(shifted), T);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(a.rho[i] - b.rho[i]) < 1e-12);
  }
}

TEST_CASE("temperature limits: argmin concentration and uniformity") {
  const EnergyVector e({0.4, -1.2, 2.0, 0.9});
  const auto cold = equilibrium::softmax_equilibrium(e, 1e-6);
  CHECK(cold.rho[1] > 1.0 - 1e-9);  // argmin is index 1
  const auto hot = equilibrium::softmax_equilibrium(e, 1e9);
  for (std::size_t i = 0; i < e.size(); ++i)
    CHECK(std::abs(hot.rho[i] - 0.25) < 1e-6);
}

TEST_CASE("free energy gradient: stationarity and the worked example") {
  const double ln2 = std::log(2.0);
  const AttentionState mid(EnergyVector({0.0, ln2}), 1.0,
                           ProbabilityVector({0.5, 0.5}));
  const auto g = equilibrium::free_energy_gradient(mid);
  CHECK(g[0] == doctest::Approx(1.0 - ln2).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-14));
  const auto proj = equilibrium::project_gradient(g);
  CHECK(proj[0] == doctest::Approx(-ln2 / 2.0).epsilon(1e-13));
  CHECK(proj[1] == doctest::Approx(ln2 / 2.0).epsilon(1e-13));

  // At equilibrium the projected gradient vanishes.
  util::Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto e = random_energies(2 + rng.below(16), rng);
    const double T = 0.2 + rng.uniform01() * 5.0;
    const auto s = equilibrium::softmax_equilibrium(e, T);
    double mx = 0.0;
    for (double v : equilibrium::project_gradient(
             equilibrium::free_energy_gradient(s)))
      mx = std::max(mx, std::abs(v));
    CHECK(mx < 1e-10);
  }

  // Uniform rho over non-constant energies is not stationary.
  const AttentionState uni(EnergyVector({0.0, 1.0, 2.0}), 1.0,
                           ProbabilityVector({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  double mx = 0.0;
  for (double v :
       equilibrium::project_gradient(equilibrium::free_energy_gradient(uni)))
    mx = std::max(mx, std::abs(v));
  CHECK(mx > 0.1);

  // Boundary states are rejected.
  const AttentionState boundary(EnergyVector({0.0, 1.0}), 1.0,
                                ProbabilityVector({1.0, 0.0}));
  CHECK_THROWS_AS(equilibrium::free_energy_gradient(boundary),
                  std::invalid_argument);
}

TEST_CASE("effective temperature") {
  CHECK(equilibrium::effective_temperature(64, 1.0) == doctest::Approx(8.0));
  CHECK(equilibrium::effective_temperature(64, 2.0) == doctest::Approx(4.0));
  CHECK(equilibrium::effective_temperature(128, 10.0) ==
        doctest::Approx(std::sqrt(128.0) / 10.0).epsilon(1e-14));
  CHECK(equilibrium::effective_temperature(128, 10.0) ==
        doctest::Approx(1.13137).epsilon(1e-5));
  CHECK_THROWS_AS(equilibrium::effective_temperature(64, 0.0),
                  std::invalid_argument);
}
