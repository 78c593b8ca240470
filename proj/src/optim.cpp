#include "mvc/optim.hpp"

#include <cmath>

namespace mvc {

OptimizerState make_optimizer_state(std::span<const Tensor> params, const AdamWConfig& config) {
    OptimizerState state;
    state.config = config;
    for (const Tensor& p : params) {
        state.first_moment.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        state.second_moment.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
    return state;
}

void adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ShapeError("adamw_step: parameter, gradient and state counts differ");
    }
    const AdamWConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].mutable_values();
        const auto& g = grads[k];
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (g.size() != p.size() || m.size() != p.size()) throw ShapeError("adamw_step: shape mismatch");
        for (size_t i = 0; i < p.size(); ++i) {
            p[i] *= 1.0 - c.lr * c.weight_decay;
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

void adamw_step(std::span<Tensor> params, OptimizerState& state) {
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const Tensor& p : params) grads.push_back(p.grad());
    adamw_step(params, grads, state);
}

}  // namespace mvc
