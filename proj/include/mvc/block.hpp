#pragma once

// Multi-view consistency block attached to one decoder layer.
//
//   x^1..x^N --lift--> world volumes --per-voxel attention over views--> conv trunk
//            --warp to view i's frustum--> attention along each ray
//            --cross-attention with x^i as query--> per-pixel MLP --> residual
//
// The last MLP layer starts at zero, so a fresh block returns an all-zero
// residual. The caller adds the residual to x^i.

#include <cstdint>
#include <span>
#include <vector>

#include "mvc/params.hpp"
#include "mvc/rng.hpp"
#include "mvc/tensor.hpp"
#include "mvc/volume.hpp"

namespace mvc {

struct BlockConfig {
    int64_t channels = 32;  // width of the decoder layer the block is attached to
    int64_t width = 16;     // internal token width, split over `heads`
    int64_t heads = 4;
    int64_t hidden = 32;    // residual MLP hidden width
    int64_t n_freq = 6;

    int64_t camera_channels() const { return 8 * n_freq; }
    int64_t depth_channels() const { return 2 * n_freq; }
};

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // weights are [in, out]
};

struct BlockParams {
    BlockConfig config;
    AttentionParams view_attn;   // tokens: lifted features + camera encoding
    Tensor conv1_w, conv1_b, conv2_w, conv2_b;
    AttentionParams depth_attn;  // tokens: warped features + depth encoding
    AttentionParams cross_attn;  // query from x^i, keys/values from depth tokens
    Tensor mlp1_w, mlp1_b, mlp2_w, mlp2_b;

    ParamList named(const std::string& prefix = "") const;
};

// Projections get N(0, 1/fan_in) weights and zero biases. With
// `zero_final` the last MLP layer is exactly zero.
BlockParams init_block(const BlockConfig& config, Rng& rng, bool zero_final = true);

// Optional record of every attention distribution of a forward pass.
struct AttentionTrace {
    std::vector<Tensor> view_weights;   // [V, heads, N, N] per call
    std::vector<Tensor> view_mask;      // [V, 1, 1, N]
    std::vector<Tensor> depth_weights;  // [P, heads, D, D]
    std::vector<Tensor> cross_weights;  // [P, heads, 1, D]
    std::vector<Tensor> ray_mask;       // [P, 1, 1, D]
};

// Multi-head attention over batches of token sequences.
// q_in [B, Lq, Dq], kv_in [B, Lk, Dk], key_mask [B, Lk] (0/1, may be undefined).
// Returns [B, Lq, width]; writes the [B, heads, Lq, Lk] weights when asked.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const Tensor& key_mask,
                            const AttentionParams& p, int64_t heads, Tensor* weights = nullptr);

// Per-voxel attention across the N views followed by the conv trunk.
// Outputs carry `width` channels and the input masks.
std::vector<WorldVolume> view_aggregate(std::span<const WorldVolume> volumes, const BlockParams& params,
                                        AttentionTrace* trace = nullptr);

// Depth self-attention along each ray of `frustum`, then cross-attention with
// x as query. Returns x-tilde as [width, h, w].
Tensor ray_aggregate(const Tensor& x, const FrustumVolume& frustum, const BlockParams& params,
                     AttentionTrace* trace = nullptr);

// Residual for view i given every view's feature map and geometry.
Tensor block_forward(int64_t view, std::span<const Tensor> features, std::span<const ViewGeometry> geometry,
                     const BlockParams& params, AttentionTrace* trace = nullptr);

// Residuals for all views, sharing the view aggregation. With `concurrent`
// (and gradient recording off) the per-view stages run on worker threads;
// results are identical to the sequential schedule.
std::vector<Tensor> block_forward_all(std::span<const Tensor> features, std::span<const ViewGeometry> geometry,
                                      const BlockParams& params, bool concurrent = false,
                                      AttentionTrace* trace = nullptr);

}  // namespace mvc
