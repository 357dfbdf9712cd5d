#pragma once

#include <cmath>
#include <vector>

#include "svqa/tensor.hpp"

namespace svqa {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.05;
};

struct AdamWState {
  Tensor m, v;
};

// Decoupled weight decay first, then the bias-corrected Adam update.
inline void adamw_step(Tensor& param, const Tensor& grad, AdamWState& state, long t, double lr,
                       const AdamWConfig& cfg) {
  require_same_shape(param, grad, "adamw: param/grad");
  require_finite(grad, "adamw: gradient");
  if (t < 1) throw TensorError("adamw: step index must be >= 1");
  if (state.m.empty()) {
    state.m = Tensor::zeros(param.shape);
    state.v = Tensor::zeros(param.shape);
  }
  const real decay = static_cast<real>(1.0 - lr * cfg.weight_decay);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    param.data[i] *= decay;
    state.m.data[i] = static_cast<real>(cfg.beta1) * state.m.data[i] +
                      static_cast<real>(1.0 - cfg.beta1) * grad.data[i];
    state.v.data[i] = static_cast<real>(cfg.beta2) * state.v.data[i] +
                      static_cast<real>(1.0 - cfg.beta2) * grad.data[i] * grad.data[i];
    const double mhat = static_cast<double>(state.m.data[i]) / bc1;
    const double vhat = static_cast<double>(state.v.data[i]) / bc2;
    param.data[i] -= static_cast<real>(lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
  }
}

// peak * 0.5 * (1 + cos(pi * step / total)), decaying to exactly 0.
inline double cosine_lr(long step, long total_steps, double peak) {
  if (total_steps <= 0) throw TensorError("cosine_lr: total_steps must be > 0");
  if (step < 0 || step > total_steps) throw TensorError("cosine_lr: step out of range");
  return peak * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// Convenience wrapper for updating a fixed-order set of tensors.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, double lr) {
    if (params.size() != grads.size()) throw TensorError("adamw: param/grad count mismatch");
    if (states_.empty()) states_.resize(params.size());
    if (states_.size() != params.size()) throw TensorError("adamw: parameter set changed");
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i)
      adamw_step(*params[i], grads[i], states_[i], t_, lr, cfg_);
  }

  long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::vector<AdamWState> states_;
  long t_ = 0;
};

}  // namespace svqa
