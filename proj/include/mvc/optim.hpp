#pragma once

#include <span>
#include <vector>

#include "mvc/tensor.hpp"

namespace mvc {

struct AdamWConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Moments are shape-congruent with the parameters they were created for.
struct OptimizerState {
    AdamWConfig config;
    int64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

OptimizerState make_optimizer_state(std::span<const Tensor> params, const AdamWConfig& config);

// Decoupled weight decay: p <- p * (1 - lr * wd), then the bias-corrected Adam
// update from the moments.
void adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, OptimizerState& state);
// Same, reading each parameter's accumulated gradient.
void adamw_step(std::span<Tensor> params, OptimizerState& state);

}  // namespace mvc
