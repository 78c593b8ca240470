#pragma once

// Noise schedule, forward noising, the joint multi-view objective and the
// deterministic DDIM sampler.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mvc/camera.hpp"
#include "mvc/tensor.hpp"
#include "mvc/unet.hpp"

namespace mvc {

struct NoiseSchedule {
    int64_t steps = 0;  // T
    std::vector<double> beta;       // index t - 1 for t in [1, T]
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    // alpha_bar(0) is 1 by convention.
    double alpha_bar_at(int64_t t) const;
};

NoiseSchedule make_schedule(int64_t steps = 1000, double beta_min = 1e-4, double beta_max = 0.02);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& x0, int64_t t, const Tensor& eps, const NoiseSchedule& schedule);

// Mean over views of mse(eps_hat_i, eps_i).
Tensor denoising_loss(std::span<const Tensor> eps_hat, std::span<const Tensor> eps);

// Noises every view at the same t and scores the joint prediction with
// denoising_loss.
Tensor multiview_loss(std::span<const Tensor> x0, std::span<const Conditioning> cond, std::span<const Tensor> eps,
                      int64_t t, const NoiseSchedule& schedule, const UNetParams& params, const BlockStack* blocks,
                      const LayerGeometry* geometry, bool concurrent = false);

// Deterministic (eta = 0) update from t to t_prev < t.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int64_t t, int64_t t_prev, const NoiseSchedule& schedule);

// Uniformly strided timesteps, descending: T, T - T/n, ..., T/n.
std::vector<int64_t> ddim_timesteps(int64_t total, int64_t count);

using NoisePredictor = std::function<std::vector<Tensor>(std::span<const Tensor> x_t, int64_t t)>;

// Runs the joint trajectory from x_T; every step calls `predict` once for all views.
std::vector<Tensor> ddim_sample(std::vector<Tensor> x_T, const NoisePredictor& predict, const NoiseSchedule& schedule,
                                int64_t count);

// Initial latent of view v for a sampling seed.
Tensor initial_noise(uint64_t seed, int64_t view, const Shape& shape);

struct SampleRequest {
    Tensor reference_latent;
    CameraPose reference_pose;
    std::vector<CameraPose> poses;  // target views
    int64_t steps = 50;
    uint64_t seed = 0;
    bool concurrent = false;
};

// `blocks` may be null (backbone only); otherwise `geometry` matches the poses.
std::vector<Tensor> sample_multiview(const SampleRequest& request, const NoiseSchedule& schedule,
                                     const UNetParams& params, const BlockStack* blocks, const LayerGeometry* geometry);

}  // namespace mvc
