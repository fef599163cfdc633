#include "mmt/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mmt::ad {

namespace {
double evaluate(const std::function<Tensor()>& f, std::size_t param, std::size_t coord) {
    NoGradGuard no_grad;
    const double value = f().item();
    if (!std::isfinite(value)) {
        throw Error("finite_diff_check: non-finite function value at parameter " + std::to_string(param) +
                    ", coordinate " + std::to_string(coord));
    }
    return value;
}
} // namespace

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  const GradCheckOptions& options) {
    if (!(options.eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
    const Tensor loss = f();
    if (!std::isfinite(loss.item())) throw Error("finite_diff_check: non-finite function value at the base point");
    const Gradients grads = backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(grads.of(p));

    GradCheckResult result;
    Rng rng(options.seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto values = params[pi].mutable_data();
        std::vector<std::size_t> coords(values.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (options.max_coords_per_param != 0 && coords.size() > options.max_coords_per_param) {
            rng.shuffle(coords);
            coords.resize(options.max_coords_per_param);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t c : coords) {
            const double original = values[c];
            auto central = [&](double h) {
                values[c] = original + h;
                const double up = evaluate(f, pi, c);
                values[c] = original - h;
                const double down = evaluate(f, pi, c);
                values[c] = original;
                return (up - down) / (2.0 * h);
            };
            const double exact = analytic[pi][c];
            auto rel_error = [&](double numeric) {
                const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
                return std::abs(exact - numeric) / denom;
            };
            double numeric = central(options.eps);
            double rel = rel_error(numeric);
            if (rel > options.retry_above) {
                for (double h : options.retry_eps) {
                    const double n2 = central(h);
                    if (const double r2 = rel_error(n2); r2 < rel) {
                        rel = r2;
                        numeric = n2;
                    }
                }
            }
            ++result.coords_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.param_index = pi;
                result.coord = c;
                result.analytic = exact;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace mmt::ad
