#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "attnthermo/nn/tensor.hpp"

namespace thermo::nn {

struct OptimizerConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("OptimizerConfig: learning_rate <= 0");
    if (weight_decay < 0.0)
      throw std::invalid_argument("OptimizerConfig: weight_decay < 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("OptimizerConfig: betas must be in (0,1)");
    if (!(epsilon > 0.0))
      throw std::invalid_argument("OptimizerConfig: epsilon <= 0");
  }
};

// AdamW with decoupled weight decay: the adaptive step uses bias-corrected
// moments, and the decay p <- p - lr*wd*p is applied separately so that a
// zero gradient still shrinks every parameter by exactly (1 - lr*wd).
template <class Real>
class AdamWT {
 public:
  explicit AdamWT(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }

  void step(std::vector<TensorT<Real>>& params,
            const std::vector<TensorT<Real>>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("AdamW: params/grads count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(TensorT<Real>::zeros_like(p));
        v_.push_back(TensorT<Real>::zeros_like(p));
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].same_shape(grads[i]))
        throw std::invalid_argument("AdamW: shape mismatch at param " +
                                    std::to_string(i));
      for (Real g : grads[i].data)
        if (!std::isfinite(static_cast<double>(g)))
          throw std::runtime_error("AdamW: non-finite gradient at param " +
                                   std::to_string(i));
    }
    ++t_;
    const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Real* p = params[i].data.data();
      const Real* g = grads[i].data.data();
      Real* m = m_[i].data.data();
      Real* v = v_[i].data.data();
      const std::size_t n = params[i].data.size();
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = static_cast<Real>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j]);
        v[j] = static_cast<Real>(cfg_.beta2 * v[j] +
                                 (1.0 - cfg_.beta2) * g[j] * g[j]);
        const double mhat = m[j] / bias1;
        const double vhat = v[j] / bias2;
        p[j] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
        p[j] -= static_cast<Real>(lr * cfg_.weight_decay * p[j]);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<TensorT<Real>> m_, v_;
  std::int64_t t_ = 0;
};

using AdamW = AdamWT<double>;

}  // namespace thermo::nn
