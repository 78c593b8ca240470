#include "mvc/block.hpp"

#include <cmath>

#include "mvc/errors.hpp"
#include "mvc/ops.hpp"
#include "mvc/parallel.hpp"

namespace mvc {

namespace {

Tensor normal_init(Rng& rng, Shape shape, double fan_in) { return rng.normal_tensor(std::move(shape), 1.0 / std::sqrt(fan_in)); }

AttentionParams init_attention(Rng& rng, int64_t q_in, int64_t kv_in, int64_t width) {
    AttentionParams p;
    p.wq = normal_init(rng, {q_in, width}, static_cast<double>(q_in));
    p.bq = Tensor::zeros({width});
    p.wk = normal_init(rng, {kv_in, width}, static_cast<double>(kv_in));
    p.bk = Tensor::zeros({width});
    p.wv = normal_init(rng, {kv_in, width}, static_cast<double>(kv_in));
    p.bv = Tensor::zeros({width});
    p.wo = normal_init(rng, {width, width}, static_cast<double>(width));
    p.bo = Tensor::zeros({width});
    return p;
}

void add_attention(ParamList& out, const std::string& prefix, const AttentionParams& p) {
    out.push_back({prefix + "wq", p.wq});
    out.push_back({prefix + "bq", p.bq});
    out.push_back({prefix + "wk", p.wk});
    out.push_back({prefix + "bk", p.bk});
    out.push_back({prefix + "wv", p.wv});
    out.push_back({prefix + "bv", p.bv});
    out.push_back({prefix + "wo", p.wo});
    out.push_back({prefix + "bo", p.bo});
}

// [C, spatial...] -> [prod(spatial), C]
Tensor channels_last(const Tensor& t) { return transpose(reshape(t, {t.dim(0), t.numel() / t.dim(0)}), 0, 1); }

Tensor residual_mlp(const Tensor& tokens, const BlockParams& p) {
    return linear(silu(linear(tokens, p.mlp1_w, p.mlp1_b)), p.mlp2_w, p.mlp2_b);
}

void check_views(std::span<const Tensor> features, std::span<const ViewGeometry> geometry, const BlockParams& params) {
    if (features.empty()) throw ValueError("a block needs at least one view");
    if (features.size() != geometry.size()) throw ShapeError("one geometry per view is required");
    for (const Tensor& f : features) {
        if (f.shape() != features[0].shape()) throw ShapeError("all views must share the feature shape");
        if (f.dim(0) != params.config.channels) {
            throw ShapeError("block expects " + std::to_string(params.config.channels) + " channels, got " +
                             shape_str(f.shape()));
        }
    }
}

Tensor view_residual(const Tensor& x, const WorldVolume& fused, const ViewGeometry& geom, const BlockParams& params,
                     AttentionTrace* trace) {
    const FrustumVolume frustum = warp_to_frustum(fused, geom, true);
    const Tensor xt = ray_aggregate(x, frustum, params, trace);
    const Tensor out = residual_mlp(channels_last(xt), params);
    return reshape(transpose(out, 0, 1), x.shape());
}

std::vector<WorldVolume> lift_and_fuse(std::span<const Tensor> features, std::span<const ViewGeometry> geometry,
                                       const BlockParams& params, bool concurrent, AttentionTrace* trace) {
    check_views(features, geometry, params);
    std::vector<WorldVolume> lifted(features.size());
    parallel_for(static_cast<int64_t>(features.size()), concurrent, [&](int64_t n) {
        lifted[static_cast<size_t>(n)] = unproject_features(features[static_cast<size_t>(n)], geometry[static_cast<size_t>(n)]);
    });
    return view_aggregate(lifted, params, trace);
}

}  // namespace

ParamList BlockParams::named(const std::string& prefix) const {
    ParamList out;
    add_attention(out, prefix + "view_attn.", view_attn);
    out.push_back({prefix + "conv1_w", conv1_w});
    out.push_back({prefix + "conv1_b", conv1_b});
    out.push_back({prefix + "conv2_w", conv2_w});
    out.push_back({prefix + "conv2_b", conv2_b});
    add_attention(out, prefix + "depth_attn.", depth_attn);
    add_attention(out, prefix + "cross_attn.", cross_attn);
    out.push_back({prefix + "mlp1_w", mlp1_w});
    out.push_back({prefix + "mlp1_b", mlp1_b});
    out.push_back({prefix + "mlp2_w", mlp2_w});
    out.push_back({prefix + "mlp2_b", mlp2_b});
    return out;
}

BlockParams init_block(const BlockConfig& config, Rng& rng, bool zero_final) {
    if (config.width % config.heads != 0) throw ValueError("block width must be divisible by the head count");
    const int64_t c = config.channels, w = config.width;
    BlockParams p;
    p.config = config;
    p.view_attn = init_attention(rng, c + config.camera_channels(), c + config.camera_channels(), w);
    p.conv1_w = normal_init(rng, {w, w, 3, 3, 3}, static_cast<double>(27 * w));
    p.conv1_b = Tensor::zeros({w});
    p.conv2_w = normal_init(rng, {w, w, 3, 3, 3}, static_cast<double>(27 * w));
    p.conv2_b = Tensor::zeros({w});
    p.depth_attn = init_attention(rng, w + config.depth_channels(), w + config.depth_channels(), w);
    p.cross_attn = init_attention(rng, c, w, w);
    p.mlp1_w = normal_init(rng, {w, config.hidden}, static_cast<double>(w));
    p.mlp1_b = Tensor::zeros({config.hidden});
    if (zero_final) {
        p.mlp2_w = Tensor::zeros({config.hidden, c});
        p.mlp2_b = Tensor::zeros({c});
    } else {
        p.mlp2_w = normal_init(rng, {config.hidden, c}, static_cast<double>(config.hidden));
        p.mlp2_b = rng.normal_tensor({c}, 0.1);
    }
    return p;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const Tensor& key_mask,
                            const AttentionParams& p, int64_t heads, Tensor* weights) {
    const Tensor q = linear(q_in, p.wq, p.bq);
    const Tensor k = linear(kv_in, p.wk, p.bk);
    const Tensor v = linear(kv_in, p.wv, p.bv);
    return linear(attention(q, k, v, key_mask, heads, weights), p.wo, p.bo);
}

std::vector<WorldVolume> view_aggregate(std::span<const WorldVolume> volumes, const BlockParams& params,
                                        AttentionTrace* trace) {
    if (volumes.empty()) throw ValueError("view_aggregate needs at least one volume");
    const int64_t n = static_cast<int64_t>(volumes.size());
    const Shape& shape = volumes[0].features.shape();
    const int64_t cin = shape[0], r = shape[1], vox = r * r * r;
    if (cin != params.view_attn.wq.dim(0)) {
        throw ShapeError("volume has " + std::to_string(cin) + " channels, block expects " +
                         std::to_string(params.view_attn.wq.dim(0)));
    }
    std::vector<Tensor> feats, masks;
    for (const WorldVolume& v : volumes) {
        if (v.features.shape() != shape) throw ShapeError("world volumes must share one grid and channel count");
        feats.push_back(reshape(v.features, {cin, vox}));
        masks.push_back(reshape(v.mask, {vox}));
    }
    const Tensor tokens = permute(stack(feats, 0), {2, 0, 1});  // [V, N, Cin]
    const Tensor mask = transpose(stack(masks, 0), 0, 1);        // [V, N]
    Tensor weights;
    Tensor attended = multi_head_attention(tokens, tokens, mask, params.view_attn, params.config.heads,
                                           trace ? &weights : nullptr);
    attended = mul(attended, reshape(mask, {vox, n, 1}));
    if (trace) {
        trace->view_weights.push_back(weights);
        trace->view_mask.push_back(reshape(mask, {vox, 1, 1, n}));
    }

    const int64_t w = params.config.width;
    std::vector<WorldVolume> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const Tensor& m = volumes[static_cast<size_t>(i)].mask;
        const Tensor a = reshape(transpose(reshape(slice(attended, 1, i, 1), {vox, w}), 0, 1), {w, r, r, r});
        const Tensor h = mul(silu(conv3d(a, params.conv1_w, params.conv1_b)), m);
        out[static_cast<size_t>(i)] = {mul(add(a, conv3d(h, params.conv2_w, params.conv2_b)), m), m};
    }
    return out;
}

Tensor ray_aggregate(const Tensor& x, const FrustumVolume& frustum, const BlockParams& params, AttentionTrace* trace) {
    const Shape& fs = frustum.features.shape();
    const int64_t cf = fs[0], d = fs[1], h = fs[2], w = fs[3], pix = h * w;
    if (x.rank() != 3 || x.dim(1) != h || x.dim(2) != w) {
        throw ShapeError("frustum " + shape_str(fs) + " does not match feature map " + shape_str(x.shape()));
    }
    const int64_t width = params.config.width;
    const int64_t heads = params.config.heads;

    const Tensor tokens = permute(reshape(frustum.features, {cf, d, pix}), {2, 1, 0});  // [P, D, Cf]
    const Tensor mask = transpose(reshape(frustum.mask, {d, pix}), 0, 1);               // [P, D]
    const Tensor mask3 = reshape(mask, {pix, d, 1});

    Tensor depth_w;
    const Tensor attended = multi_head_attention(tokens, tokens, mask, params.depth_attn, heads, trace ? &depth_w : nullptr);
    const Tensor rays = mul(add(slice(tokens, 2, 0, width), attended), mask3);

    std::vector<double> any(static_cast<size_t>(pix), 0.0);
    for (int64_t p = 0; p < pix; ++p)
        for (int64_t k = 0; k < d; ++k) any[static_cast<size_t>(p)] = std::max(any[static_cast<size_t>(p)], mask[p * d + k]);

    Tensor cross_w;
    const Tensor query = reshape(channels_last(x), {pix, 1, x.dim(0)});
    Tensor xt = multi_head_attention(query, rays, mask, params.cross_attn, heads, trace ? &cross_w : nullptr);
    xt = mul(reshape(xt, {pix, width}), Tensor(Shape{pix, 1}, std::move(any)));
    if (trace) {
        trace->depth_weights.push_back(depth_w);
        trace->cross_weights.push_back(cross_w);
        trace->ray_mask.push_back(reshape(mask, {pix, 1, 1, d}));
    }
    return reshape(transpose(xt, 0, 1), {width, h, w});
}

Tensor block_forward(int64_t view, std::span<const Tensor> features, std::span<const ViewGeometry> geometry,
                     const BlockParams& params, AttentionTrace* trace) {
    if (view < 0 || view >= static_cast<int64_t>(features.size())) throw ValueError("view index out of range");
    const auto fused = lift_and_fuse(features, geometry, params, false, trace);
    const auto i = static_cast<size_t>(view);
    return view_residual(features[i], fused[i], geometry[i], params, trace);
}

std::vector<Tensor> block_forward_all(std::span<const Tensor> features, std::span<const ViewGeometry> geometry,
                                      const BlockParams& params, bool concurrent, AttentionTrace* trace) {
    const bool threads = concurrent && trace == nullptr;
    const auto fused = lift_and_fuse(features, geometry, params, threads, trace);
    std::vector<Tensor> out(features.size());
    parallel_for(static_cast<int64_t>(features.size()), threads, [&](int64_t n) {
        const auto i = static_cast<size_t>(n);
        out[i] = view_residual(features[i], fused[i], geometry[i], params, trace);
    });
    return out;
}

}  // namespace mvc
