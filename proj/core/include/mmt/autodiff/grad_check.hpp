#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mmt/autodiff/tensor.hpp"

namespace mmt::ad {

struct GradCheckOptions {
    double eps = 1e-5;
    /// Coordinates sampled per parameter; 0 checks every coordinate.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
    /// Coordinates whose error exceeds `retry_above` are re-measured with each
    /// step in `retry_eps` and keep the smallest error. A ReLU kink within eps
    /// of the point spoils one step size but not a smaller one, while a wrong
    /// gradient disagrees at every step size.
    std::vector<double> retry_eps;
    double retry_above = 0.0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t param_index = 0;
    std::size_t coord = 0;
    std::size_t coords_checked = 0;
    // Both gradients at the worst coordinate.
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares backward() against central differences of a scalar function.
/// Relative error per coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// `f` must rebuild its graph from the current parameter values on every call.
/// Throws Error naming the coordinate when f yields a non-finite value.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  const GradCheckOptions& options = {});

} // namespace mmt::ad
