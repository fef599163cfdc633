#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmt/autodiff/tensor.hpp"

namespace mmt::train {

struct AdamConfig {
    double base_lr = 1e-3;
    std::size_t warmup_steps = 4000;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;

    /// base_lr * min(1, t / warmup_steps); t counts from 1.
    double lr_at(std::size_t t) const;
};

/// Moments for one group of parameters (one module).
struct OptimizerState {
    AdamConfig config;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;

    OptimizerState() = default;
    OptimizerState(AdamConfig config, std::span<const ad::Tensor> params);
};

/// One Adam update with bias correction. Parameters with trainable() == false
/// keep their values and moments even when a gradient is supplied.
/// Shape mismatches are an Error.
void adam_step(std::span<ad::Tensor> params, std::span<const std::vector<double>> grads, OptimizerState& state);

/// Adam bound to a fixed parameter list.
class Adam {
  public:
    Adam(std::vector<ad::Tensor> params, AdamConfig config);

    void step(const ad::Gradients& grads);
    std::size_t steps() const { return state_.step; }
    const OptimizerState& state() const { return state_; }

  private:
    std::vector<ad::Tensor> params_;
    OptimizerState state_;
};

} // namespace mmt::train
