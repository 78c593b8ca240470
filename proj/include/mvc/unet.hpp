#pragma once

// Toy conditional denoiser.
//
//   [x_t ; reference latent] -> conv_in -> enc(32) -> pool -> enc(64) -> pool -> enc(64) -> pool -> mid(64)
//   -> up + skip -> dec(64) @h/4 -> up + skip -> dec(64) @h/2 -> up + skip -> dec(32) @h -> conv_out
//
// Every ResBlock receives an embedding of the timestep and of the target
// pose relative to the reference. A consistency block may be attached after
// each of the three decoder stages; at those points all views exchange their
// decoder features before any view continues.

#include <cstdint>
#include <span>
#include <vector>

#include "mvc/block.hpp"
#include "mvc/camera.hpp"
#include "mvc/params.hpp"
#include "mvc/rng.hpp"
#include "mvc/tensor.hpp"
#include "mvc/volume.hpp"

namespace mvc {

struct UNetConfig {
    int64_t latent_channels = 12;
    int64_t width1 = 32;
    int64_t width2 = 64;
    int64_t width3 = 64;
    int64_t embed_dim = 64;
    int64_t time_dim = 16;
    int64_t groups = 8;
    int64_t timesteps = 1000;  // T; the step index fed to the embedding is t - 1
    // Output head. When set, the trunk output F is read as a velocity and the
    // noise estimate is sqrt(1 - ab_t) x_t + sqrt(ab_t) F (ab_t = alpha_bar[t - 1]);
    // empty means the trunk predicts the noise directly.
    std::vector<double> alpha_bar;

    static constexpr int kDecoderStages = 3;
    // Channel width of decoder stage s (0 = coarsest).
    int64_t decoder_width(int s) const { return s == 2 ? width1 : (s == 1 ? width2 : width3); }
};

struct ConvParams {
    Tensor w, b;
};
struct LinearParams {
    Tensor w, b;
};
struct NormParams {
    Tensor gamma, beta;
};

struct ResBlockParams {
    NormParams norm1;
    ConvParams conv1;
    LinearParams embed;
    NormParams norm2;
    ConvParams conv2;
    ConvParams skip;  // 1x1, only when the channel count changes
};

struct UNetParams {
    UNetConfig config;
    LinearParams time1, time2, pose1, pose2;
    ConvParams conv_in;
    ResBlockParams enc1, enc2, enc3, mid, dec1, dec2, dec3;
    NormParams norm_out;
    ConvParams conv_out;
    bool frozen = false;

    ParamList named() const;
    // Sets the frozen flag and turns gradient recording off/on for all tensors.
    void freeze(bool flag);
};

UNetParams init_unet(const UNetConfig& config, Rng& rng);

// One independent block per decoder stage.
struct BlockStack {
    std::vector<BlockParams> layers;
    ParamList named() const;
};

struct BlockStackConfig {
    int64_t width = 16;
    int64_t heads = 4;
    int64_t hidden = 32;
    int64_t n_freq = 6;
};

BlockStack init_blocks(const UNetConfig& unet, const BlockStackConfig& config, Rng& rng, bool zero_final = true);

// Geometry of every view at every decoder stage.
struct LayerGeometry {
    std::vector<std::vector<ViewGeometry>> stages;  // [stage][view]
};

LayerGeometry make_layer_geometry(std::span<const CameraPose> poses, const GridSpec& grid, const FrustumSpec& frustum,
                                  int64_t latent_extent, int64_t n_freq);

struct Conditioning {
    Tensor reference;  // clean reference latent, same shape as x_t
    double d_azimuth = 0.0;
    double d_elevation = 0.0;
    double d_radius = 0.0;
};

Conditioning make_conditioning(const Tensor& reference_latent, const CameraPose& reference, const CameraPose& target);

// Channels [sin(pi x), cos(pi x), sin(2 pi x), cos(2 pi x), ...] of x = t / T.
Tensor embed_timestep(int64_t t, int64_t dim, int64_t timesteps);

// Noise prediction for one view without blocks; t in [1, T].
Tensor unet_forward(const Tensor& x_t, const Conditioning& cond, int64_t t, const UNetParams& params);

// Joint prediction for N views. `blocks` may be null; otherwise `geometry`
// must cover every stage and view. With `concurrent` (and recording off) the
// per-view work between rendezvous points runs on worker threads.
std::vector<Tensor> unet_forward_multi(std::span<const Tensor> x_t, std::span<const Conditioning> cond, int64_t t,
                                       const UNetParams& params, const BlockStack* blocks,
                                       const LayerGeometry* geometry, bool concurrent = false);

}  // namespace mvc
