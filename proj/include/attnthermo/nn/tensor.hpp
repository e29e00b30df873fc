#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnthermo/util/rng.hpp"

namespace thermo::nn {

// Dense row-major tensor. Real is double by default throughout the library;
// instantiate with float where speed matters more than the gradient-oracle
// tolerances.
template <class Real>
struct TensorT {
  std::vector<std::int64_t> shape;
  std::vector<Real> data;

  TensorT() = default;
  explicit TensorT(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(checked_numel(shape)), Real(0));
  }

  static TensorT zeros(std::vector<std::int64_t> s) { return TensorT(std::move(s)); }

  static TensorT zeros_like(const TensorT& other) {
    return TensorT(other.shape);
  }

  static TensorT full(std::vector<std::int64_t> s, Real v) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static TensorT randn(std::vector<std::int64_t> s, util::Rng& rng,
                       double stddev) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = static_cast<Real>(rng.gauss(0.0, stddev));
    return t;
  }

  static TensorT from_values(std::vector<std::int64_t> s,
                             std::vector<Real> values) {
    if (checked_numel(s) != static_cast<std::int64_t>(values.size()))
      throw std::invalid_argument("TensorT::from_values: size mismatch");
    TensorT t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // Dimension lookup with Python-style negative indexing.
  std::int64_t dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw std::out_of_range("TensorT::dim");
    return shape[static_cast<std::size_t>(i)];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  static std::int64_t checked_numel(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      if (d <= 0) throw std::invalid_argument("TensorT: nonpositive dimension");
      n *= d;
    }
    return n;
  }

  static std::string shape_string(const std::vector<std::int64_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ", ";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }
};

using Tensor = TensorT<double>;

}  // namespace thermo::nn
