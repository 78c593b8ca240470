#include "mvc/diffusion.hpp"

#include <cmath>

#include "mvc/errors.hpp"
#include "mvc/ops.hpp"
#include "mvc/rng.hpp"

namespace mvc {

double NoiseSchedule::alpha_bar_at(int64_t t) const {
    if (t < 0 || t > steps) throw ValueError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps) + "]");
    return t == 0 ? 1.0 : alpha_bar[static_cast<size_t>(t - 1)];
}

NoiseSchedule make_schedule(int64_t steps, double beta_min, double beta_max) {
    if (steps < 1) throw ValueError("schedule needs at least one step");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        throw ValueError("schedule requires 0 < beta_min <= beta_max < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    double prod = 1.0;
    for (int64_t i = 0; i < steps; ++i) {
        const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        const double b = beta_min + (beta_max - beta_min) * f;
        s.beta.push_back(b);
        s.alpha.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bar.push_back(prod);
    }
    return s;
}

Tensor q_sample(const Tensor& x0, int64_t t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (x0.shape() != eps.shape()) throw ShapeError("q_sample: noise must match the latent's shape");
    if (t < 1) throw ValueError("q_sample: t must be in [1, T]");
    const double ab = schedule.alpha_bar_at(t);
    return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor denoising_loss(std::span<const Tensor> eps_hat, std::span<const Tensor> eps) {
    if (eps_hat.empty() || eps_hat.size() != eps.size()) throw ShapeError("denoising_loss: one prediction per view");
    Tensor loss = mse(eps_hat[0], eps[0]);
    for (size_t v = 1; v < eps.size(); ++v) loss = add(loss, mse(eps_hat[v], eps[v]));
    return eps.size() == 1 ? loss : scale(loss, 1.0 / static_cast<double>(eps.size()));
}

Tensor multiview_loss(std::span<const Tensor> x0, std::span<const Conditioning> cond, std::span<const Tensor> eps,
                      int64_t t, const NoiseSchedule& schedule, const UNetParams& params, const BlockStack* blocks,
                      const LayerGeometry* geometry, bool concurrent) {
    if (x0.empty() || x0.size() != eps.size() || x0.size() != cond.size()) {
        throw ShapeError("multiview_loss: one latent, noise and conditioning per view");
    }
    std::vector<Tensor> x_t;
    for (size_t v = 0; v < x0.size(); ++v) x_t.push_back(q_sample(x0[v], t, eps[v], schedule));
    return denoising_loss(unet_forward_multi(x_t, cond, t, params, blocks, geometry, concurrent), eps);
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int64_t t, int64_t t_prev, const NoiseSchedule& schedule) {
    if (x_t.shape() != eps_hat.shape()) throw ShapeError("ddim_step: prediction must match the latent's shape");
    if (t < 1 || t_prev < 0 || t_prev >= t) {
        throw ValueError("ddim_step: need 0 <= t_prev < t, got " + std::to_string(t_prev) + ", " + std::to_string(t));
    }
    const double ab = schedule.alpha_bar_at(t);
    const double ab_prev = schedule.alpha_bar_at(t_prev);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    const double sa_prev = std::sqrt(ab_prev), sn_prev = std::sqrt(1.0 - ab_prev);
    std::vector<double> out(static_cast<size_t>(x_t.numel()));
    const auto x = x_t.values();
    const auto e = eps_hat.values();
    for (size_t i = 0; i < out.size(); ++i) {
        const double x0 = (x[i] - sn * e[i]) / sa;
        out[i] = t_prev == 0 ? x0 : sa_prev * x0 + sn_prev * e[i];
    }
    return Tensor(x_t.shape(), std::move(out));
}

std::vector<int64_t> ddim_timesteps(int64_t total, int64_t count) {
    if (count < 1 || count > total) throw ValueError("DDIM step count must be in [1, T]");
    std::vector<int64_t> ts;
    for (int64_t i = count; i >= 1; --i) ts.push_back(i * total / count);
    return ts;
}

std::vector<Tensor> ddim_sample(std::vector<Tensor> x, const NoisePredictor& predict, const NoiseSchedule& schedule,
                                int64_t count) {
    NoGradGuard no_grad;
    const auto ts = ddim_timesteps(schedule.steps, count);
    for (size_t k = 0; k < ts.size(); ++k) {
        const int64_t t = ts[k];
        const int64_t t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        const auto eps = predict(x, t);
        if (eps.size() != x.size()) throw ShapeError("noise predictor returned the wrong number of views");
        for (size_t v = 0; v < x.size(); ++v) x[v] = ddim_step(x[v], eps[v], t, t_prev, schedule);
    }
    return x;
}

Tensor initial_noise(uint64_t seed, int64_t view, const Shape& shape) {
    Rng rng = Rng(seed).fork(static_cast<uint64_t>(view));
    return rng.normal_tensor(shape);
}

std::vector<Tensor> sample_multiview(const SampleRequest& request, const NoiseSchedule& schedule,
                                     const UNetParams& params, const BlockStack* blocks, const LayerGeometry* geometry) {
    if (request.poses.empty()) throw ValueError("sampling needs at least one target pose");
    const Shape& shape = request.reference_latent.shape();
    std::vector<Tensor> x;
    std::vector<Conditioning> cond;
    for (size_t v = 0; v < request.poses.size(); ++v) {
        x.push_back(initial_noise(request.seed, static_cast<int64_t>(v), shape));
        cond.push_back(make_conditioning(request.reference_latent, request.reference_pose, request.poses[v]));
    }
    auto predict = [&](std::span<const Tensor> x_t, int64_t t) {
        return unet_forward_multi(x_t, cond, t, params, blocks, geometry, request.concurrent);
    };
    return ddim_sample(std::move(x), predict, schedule, request.steps);
}

}  // namespace mvc
