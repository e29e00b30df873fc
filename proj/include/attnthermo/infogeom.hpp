#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Geometry of the attention probability simplex: the amplitude map onto the
// radius-2 hypersphere, tangent (velocity) vectors, Fisher information, and
// the kinetic energy of a moving belief state. All types are immutable values
// and all operations are pure; everything here is safe to share across
// threads.
namespace thermo::infogeom {

inline constexpr double kSimplexTol = 1e-12;    // sum-to-one / zero-sum
inline constexpr double kSphereTol = 1e-10;     // sum of squared amplitudes

// Point on the probability simplex. Construction validates; `normalized`
// rescales nonnegative data instead.
class ProbabilityVector {
 public:
  explicit ProbabilityVector(std::vector<double> rho);

  // Rescales a nonnegative, nonzero vector to sum exactly to one.
  static ProbabilityVector normalized(std::vector<double> raw);

  std::size_t size() const { return rho_.size(); }
  double operator[](std::size_t i) const { return rho_[i]; }
  std::span<const double> values() const { return rho_; }

 private:
  std::vector<double> rho_;
};

// Amplitude coordinates x_i = 2 sqrt(rho_i); |x|^2 = 4 (radius-2 sphere).
class AmplitudeVector {
 public:
  explicit AmplitudeVector(std::vector<double> x);

  std::size_t size() const { return x_.size(); }
  double operator[](std::size_t i) const { return x_[i]; }
  std::span<const double> values() const { return x_; }

 private:
  std::vector<double> x_;
};

// Velocity of the probability state; components sum to zero so that motion
// stays on the simplex.
class TangentVector {
 public:
  explicit TangentVector(std::vector<double> rho_dot);

  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  std::span<const double> values() const { return v_; }

 private:
  std::vector<double> v_;
};

// x_i = 2 sqrt(rho_i). Zero components map to zero amplitudes.
AmplitudeVector to_amplitude(const ProbabilityVector& p);

// rho_i = x_i^2 / 4. Inverse of to_amplitude; round trips are the identity
// for interior points.
ProbabilityVector from_amplitude(const AmplitudeVector& x);

// Fisher information I(rho) = (1/4) sum_i rho_dot_i^2 / rho_i. Rejects
// singular directions (rho_i = 0 with rho_dot_i != 0) rather than returning
// infinity: downstream integrators must never see non-finite values.
double fisher_information(const ProbabilityVector& p, const TangentVector& v);

// Kinetic energy of the moving belief state,
// K = (m/2) sum_i rho_dot_i^2 / rho_i = 2 m I(rho).
double kinetic_energy(const ProbabilityVector& p, const TangentVector& v,
                      double mass);

}  // namespace thermo::infogeom
