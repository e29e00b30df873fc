#include "attnthermo/infogeom.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace thermo::infogeom {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": non-finite component");
  }
}

}  // namespace

ProbabilityVector::ProbabilityVector(std::vector<double> rho)
    : rho_(std::move(rho)) {
  if (rho_.empty()) throw std::invalid_argument("ProbabilityVector: empty");
  require_finite(rho_, "ProbabilityVector");
  double sum = 0.0;
  for (double x : rho_) {
    if (x < 0.0)
      throw std::invalid_argument("ProbabilityVector: negative component");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSimplexTol)
    throw std::invalid_argument("ProbabilityVector: sum deviates from 1 by " +
                                std::to_string(sum - 1.0));
}

ProbabilityVector ProbabilityVector::normalized(std::vector<double> raw) {
  require_finite(raw, "ProbabilityVector::normalized");
  double sum = 0.0;
  for (double x : raw) {
    if (x < 0.0)
      throw std::invalid_argument(
          "ProbabilityVector::normalized: negative component");
    sum += x;
  }
  if (sum <= 0.0)
    throw std::invalid_argument("ProbabilityVector::normalized: zero mass");
  for (double& x : raw) x /= sum;
  return ProbabilityVector(std::move(raw));
}

AmplitudeVector::AmplitudeVector(std::vector<double> x) : x_(std::move(x)) {
  if (x_.empty()) throw std::invalid_argument("AmplitudeVector: empty");
  require_finite(x_, "AmplitudeVector");
  double ss = 0.0;
  for (double v : x_) {
    if (v < 0.0)
      throw std::invalid_argument("AmplitudeVector: negative component");
    ss += v * v;
  }
  if (std::abs(ss - 4.0) > kSphereTol)
    throw std::invalid_argument(
        "AmplitudeVector: |x|^2 deviates from 4 by " + std::to_string(ss - 4.0));
}

TangentVector::TangentVector(std::vector<double> rho_dot)
    : v_(std::move(rho_dot)) {
  if (v_.empty()) throw std::invalid_argument("TangentVector: empty");
  require_finite(v_, "TangentVector");
  double sum = 0.0;
  for (double x : v_) sum += x;
  if (std::abs(sum) > kSimplexTol)
    throw std::invalid_argument("TangentVector: components sum to " +
                                std::to_string(sum) + ", expected 0");
}

AmplitudeVector to_amplitude(const ProbabilityVector& p) {
  std::vector<double> x(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) x[i] = 2.0 * std::sqrt(p[i]);
  return AmplitudeVector(std::move(x));
}

ProbabilityVector from_amplitude(const AmplitudeVector& x) {
  std::vector<double> rho(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) rho[i] = x[i] * x[i] / 4.0;
  // |x|^2 = 4 was checked at construction; renormalize the residual so the
  // round trip stays inside the simplex tolerance.
  double sum = 0.0;
  for (double r : rho) sum += r;
  for (double& r : rho) r /= sum;
  return ProbabilityVector(std::move(rho));
}

double fisher_information(const ProbabilityVector& p, const TangentVector& v) {
  if (p.size() != v.size())
    throw std::invalid_argument("fisher_information: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (v[i] == 0.0) continue;
    if (p[i] <= 0.0)
      throw std::invalid_argument(
          "fisher_information: singular direction (rho_i = 0, rho_dot_i != 0)");
    s += v[i] * v[i] / p[i];
  }
  return 0.25 * s;
}

double kinetic_energy(const ProbabilityVector& p, const TangentVector& v,
                      double mass) {
  if (!(mass > 0.0)) throw std::invalid_argument("kinetic_energy: mass <= 0");
  return 2.0 * mass * fisher_information(p, v);
}

}  // namespace thermo::infogeom
