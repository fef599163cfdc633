#pragma once

#include <vector>

#include "mmt/autodiff/tensor.hpp"
#include "mmt/common.hpp"

namespace mmt::testing {

inline std::vector<double> random_values(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

inline ad::Tensor random_param(ad::Shape shape, Rng& rng, double scale = 1.0) {
    auto n = ad::shape_numel(shape);
    return ad::Tensor::parameter(std::move(shape), random_values(n, rng, scale));
}

} // namespace mmt::testing
