#include "mmt/train/adam.hpp"

#include <algorithm>
#include <cmath>

namespace mmt::train {

double AdamConfig::lr_at(std::size_t t) const {
    if (warmup_steps == 0) return base_lr;
    return base_lr * std::min(1.0, static_cast<double>(t) / static_cast<double>(warmup_steps));
}

OptimizerState::OptimizerState(AdamConfig cfg, std::span<const ad::Tensor> params) : config(cfg) {
    for (const auto& p : params) {
        m.emplace_back(p.numel(), 0.0);
        v.emplace_back(p.numel(), 0.0);
    }
}

void adam_step(std::span<ad::Tensor> params, std::span<const std::vector<double>> grads, OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw Error("adam_step: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                    " gradients, " + std::to_string(state.m.size()) + " moment slots");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].numel() || state.m[i].size() != params[i].numel()) {
            throw Error("adam_step: shape mismatch for parameter " + std::to_string(i) + " " +
                        ad::shape_string(params[i].shape()));
        }
    }
    const auto& c = state.config;
    const std::size_t t = ++state.step;
    const double lr = c.lr_at(t);
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable()) continue;
        auto w = params[i].mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
        }
    }
}

Adam::Adam(std::vector<ad::Tensor> params, AdamConfig config)
    : params_(std::move(params)), state_(config, params_) {}

void Adam::step(const ad::Gradients& grads) {
    std::vector<std::vector<double>> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.push_back(grads.of(p));
    adam_step(params_, g, state_);
}

} // namespace mmt::train
