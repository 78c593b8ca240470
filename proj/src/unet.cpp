#include "mvc/unet.hpp"

#include <cmath>

#include "mvc/errors.hpp"
#include "mvc/ops.hpp"
#include "mvc/parallel.hpp"

namespace mvc {

namespace {

ConvParams init_conv(Rng& rng, int64_t cin, int64_t cout, int64_t k) {
    return {rng.normal_tensor({cout, cin, k, k}, 1.0 / std::sqrt(static_cast<double>(cin * k * k))), Tensor::zeros({cout})};
}

LinearParams init_linear(Rng& rng, int64_t in, int64_t out) {
    return {rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in))), Tensor::zeros({out})};
}

NormParams init_norm(int64_t c) { return {Tensor::ones({c}), Tensor::zeros({c})}; }

ResBlockParams init_res(Rng& rng, int64_t cin, int64_t cout, int64_t embed) {
    ResBlockParams r;
    r.norm1 = init_norm(cin);
    r.conv1 = init_conv(rng, cin, cout, 3);
    r.embed = init_linear(rng, embed, cout);
    r.norm2 = init_norm(cout);
    r.conv2 = init_conv(rng, cout, cout, 3);
    if (cin != cout) r.skip = init_conv(rng, cin, cout, 1);
    return r;
}

void add(ParamList& out, const std::string& name, const ConvParams& p) {
    out.push_back({name + ".w", p.w});
    out.push_back({name + ".b", p.b});
}
void add(ParamList& out, const std::string& name, const LinearParams& p) {
    out.push_back({name + ".w", p.w});
    out.push_back({name + ".b", p.b});
}
void add(ParamList& out, const std::string& name, const NormParams& p) {
    out.push_back({name + ".gamma", p.gamma});
    out.push_back({name + ".beta", p.beta});
}
void add(ParamList& out, const std::string& name, const ResBlockParams& p) {
    add(out, name + ".norm1", p.norm1);
    add(out, name + ".conv1", p.conv1);
    add(out, name + ".embed", p.embed);
    add(out, name + ".norm2", p.norm2);
    add(out, name + ".conv2", p.conv2);
    if (p.skip.w.defined()) add(out, name + ".skip", p.skip);
}

Tensor conv(const Tensor& x, const ConvParams& p) { return conv2d(x, p.w, p.b); }

Tensor res_block(const Tensor& x, const Tensor& emb, const ResBlockParams& p, int64_t groups) {
    Tensor h = conv(silu(group_norm(x, p.norm1.gamma, p.norm1.beta, groups)), p.conv1);
    const Tensor e = linear(emb, p.embed.w, p.embed.b);
    h = add(h, reshape(e, {e.numel(), 1, 1}));
    h = conv(silu(group_norm(h, p.norm2.gamma, p.norm2.beta, groups)), p.conv2);
    const Tensor skip = p.skip.w.defined() ? conv(x, p.skip) : x;
    return add(skip, h);
}

Tensor conditioning_embedding(const Conditioning& cond, int64_t t, const UNetParams& p) {
    const UNetConfig& c = p.config;
    const Tensor te = embed_timestep(t - 1, c.time_dim, c.timesteps);
    const Tensor time = linear(silu(linear(te, p.time1.w, p.time1.b)), p.time2.w, p.time2.b);
    const Tensor pose_feat(Shape{4}, {cond.d_elevation, std::sin(cond.d_azimuth), std::cos(cond.d_azimuth), cond.d_radius});
    const Tensor pose = linear(silu(linear(pose_feat, p.pose1.w, p.pose1.b)), p.pose2.w, p.pose2.b);
    return silu(add(time, pose));
}

struct ViewState {
    Tensor x;
    int64_t t = 0;
    Tensor emb;
    Tensor e1, e2, e3;
    Tensor h;
};

void check_input(const Tensor& x, const Conditioning& cond, const UNetConfig& c) {
    if (x.rank() != 3 || x.dim(0) != c.latent_channels) {
        throw ShapeError("latent must be [" + std::to_string(c.latent_channels) + ", h, w], got " + shape_str(x.shape()));
    }
    if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0) throw ShapeError("latent extent must be divisible by 8");
    if (!cond.reference.defined() || cond.reference.shape() != x.shape()) {
        throw ShapeError("reference latent must match the noisy latent's shape");
    }
}

ViewState encode(const Tensor& x, const Conditioning& cond, int64_t t, const UNetParams& p) {
    const int64_t g = p.config.groups;
    ViewState s;
    s.x = x;
    s.t = t;
    s.emb = conditioning_embedding(cond, t, p);
    const Tensor inputs[] = {x, cond.reference};
    const Tensor h0 = conv(concat(inputs, 0), p.conv_in);
    s.e1 = res_block(h0, s.emb, p.enc1, g);
    s.e2 = res_block(avg_pool2(s.e1), s.emb, p.enc2, g);
    s.e3 = res_block(avg_pool2(s.e2), s.emb, p.enc3, g);
    s.h = res_block(avg_pool2(s.e3), s.emb, p.mid, g);
    return s;
}

void decode_stage(ViewState& s, int stage, const UNetParams& p) {
    const Tensor& skip = stage == 0 ? s.e3 : (stage == 1 ? s.e2 : s.e1);
    const ResBlockParams& rp = stage == 0 ? p.dec1 : (stage == 1 ? p.dec2 : p.dec3);
    const Tensor parts[] = {upsample_nearest2(s.h), skip};
    s.h = res_block(concat(parts, 0), s.emb, rp, p.config.groups);
}

Tensor finish(const ViewState& s, const UNetParams& p) {
    const Tensor f = conv(silu(group_norm(s.h, p.norm_out.gamma, p.norm_out.beta, p.config.groups)), p.conv_out);
    const auto& ab = p.config.alpha_bar;
    if (ab.empty()) return f;
    if (static_cast<int64_t>(ab.size()) != p.config.timesteps) throw ValueError("alpha_bar must hold T values");
    const double a = ab[static_cast<size_t>(s.t - 1)];
    return add(scale(s.x, std::sqrt(1.0 - a)), scale(f, std::sqrt(a)));
}

}  // namespace

ParamList UNetParams::named() const {
    ParamList out;
    add(out, "time1", time1);
    add(out, "time2", time2);
    add(out, "pose1", pose1);
    add(out, "pose2", pose2);
    add(out, "conv_in", conv_in);
    add(out, "enc1", enc1);
    add(out, "enc2", enc2);
    add(out, "enc3", enc3);
    add(out, "mid", mid);
    add(out, "dec1", dec1);
    add(out, "dec2", dec2);
    add(out, "dec3", dec3);
    add(out, "norm_out", norm_out);
    add(out, "conv_out", conv_out);
    return out;
}

void UNetParams::freeze(bool flag) {
    frozen = flag;
    set_requires_grad(named(), !flag);
}

UNetParams init_unet(const UNetConfig& c, Rng& rng) {
    if (c.width1 % c.groups || c.width2 % c.groups || c.width3 % c.groups) {
        throw ValueError("UNet widths must be divisible by the group count");
    }
    UNetParams p;
    p.config = c;
    p.time1 = init_linear(rng, c.time_dim, c.embed_dim);
    p.time2 = init_linear(rng, c.embed_dim, c.embed_dim);
    p.pose1 = init_linear(rng, 4, c.embed_dim);
    p.pose2 = init_linear(rng, c.embed_dim, c.embed_dim);
    p.conv_in = init_conv(rng, 2 * c.latent_channels, c.width1, 3);
    p.enc1 = init_res(rng, c.width1, c.width1, c.embed_dim);
    p.enc2 = init_res(rng, c.width1, c.width2, c.embed_dim);
    p.enc3 = init_res(rng, c.width2, c.width3, c.embed_dim);
    p.mid = init_res(rng, c.width3, c.width3, c.embed_dim);
    p.dec1 = init_res(rng, 2 * c.width3, c.decoder_width(0), c.embed_dim);
    p.dec2 = init_res(rng, c.decoder_width(0) + c.width2, c.decoder_width(1), c.embed_dim);
    p.dec3 = init_res(rng, c.decoder_width(1) + c.width1, c.decoder_width(2), c.embed_dim);
    p.norm_out = init_norm(c.width1);
    p.conv_out = init_conv(rng, c.width1, c.latent_channels, 3);
    set_requires_grad(p.named(), true);
    return p;
}

ParamList BlockStack::named() const {
    ParamList out;
    for (size_t s = 0; s < layers.size(); ++s) {
        ParamList l = layers[s].named("block" + std::to_string(s) + ".");
        out.insert(out.end(), l.begin(), l.end());
    }
    return out;
}

BlockStack init_blocks(const UNetConfig& unet, const BlockStackConfig& config, Rng& rng, bool zero_final) {
    BlockStack stack;
    for (int s = 0; s < UNetConfig::kDecoderStages; ++s) {
        BlockConfig bc;
        bc.channels = unet.decoder_width(s);
        bc.width = config.width;
        bc.heads = config.heads;
        bc.hidden = config.hidden;
        bc.n_freq = config.n_freq;
        stack.layers.push_back(init_block(bc, rng, zero_final));
    }
    set_requires_grad(stack.named(), true);
    return stack;
}

LayerGeometry make_layer_geometry(std::span<const CameraPose> poses, const GridSpec& grid, const FrustumSpec& frustum,
                                  int64_t latent_extent, int64_t n_freq) {
    LayerGeometry g;
    for (int s = 0; s < UNetConfig::kDecoderStages; ++s) {
        const int64_t e = latent_extent >> (UNetConfig::kDecoderStages - 1 - s);
        std::vector<ViewGeometry> views;
        for (const CameraPose& pose : poses) views.push_back(make_view_geometry(pose, grid, frustum, e, e, n_freq));
        g.stages.push_back(std::move(views));
    }
    return g;
}

Conditioning make_conditioning(const Tensor& reference_latent, const CameraPose& reference, const CameraPose& target) {
    Conditioning c;
    c.reference = reference_latent;
    c.d_azimuth = target.azimuth - reference.azimuth;
    c.d_elevation = target.elevation - reference.elevation;
    c.d_radius = target.radius - reference.radius;
    return c;
}

Tensor embed_timestep(int64_t t, int64_t dim, int64_t timesteps) {
    if (t < 0 || t >= timesteps) throw ValueError("timestep " + std::to_string(t) + " outside [0, T)");
    if (dim < 2 || dim % 2) throw ValueError("timestep embedding width must be even");
    return reshape(pos_encode(Tensor(Shape{1}, static_cast<double>(t) / static_cast<double>(timesteps)), dim / 2), {dim});
}

Tensor unet_forward(const Tensor& x_t, const Conditioning& cond, int64_t t, const UNetParams& params) {
    check_input(x_t, cond, params.config);
    ViewState s = encode(x_t, cond, t, params);
    for (int stage = 0; stage < UNetConfig::kDecoderStages; ++stage) decode_stage(s, stage, params);
    return finish(s, params);
}

std::vector<Tensor> unet_forward_multi(std::span<const Tensor> x_t, std::span<const Conditioning> cond, int64_t t,
                                       const UNetParams& params, const BlockStack* blocks,
                                       const LayerGeometry* geometry, bool concurrent) {
    const auto n = static_cast<int64_t>(x_t.size());
    if (n == 0 || cond.size() != x_t.size()) throw ShapeError("one conditioning per view is required");
    for (int64_t v = 0; v < n; ++v) check_input(x_t[static_cast<size_t>(v)], cond[static_cast<size_t>(v)], params.config);
    if (blocks) {
        if (!geometry || geometry->stages.size() != blocks->layers.size() ||
            static_cast<int64_t>(blocks->layers.size()) != UNetConfig::kDecoderStages) {
            throw ValueError("blocks need geometry for every decoder stage");
        }
        for (const auto& stage : geometry->stages) {
            if (static_cast<int64_t>(stage.size()) != n) throw ValueError("missing view geometry at a rendezvous point");
        }
    }

    std::vector<ViewState> states(static_cast<size_t>(n));
    parallel_for(n, concurrent, [&](int64_t v) {
        const auto i = static_cast<size_t>(v);
        states[i] = encode(x_t[i], cond[i], t, params);
    });
    for (int stage = 0; stage < UNetConfig::kDecoderStages; ++stage) {
        parallel_for(n, concurrent, [&](int64_t v) { decode_stage(states[static_cast<size_t>(v)], stage, params); });
        if (!blocks) continue;
        // Rendezvous: every view's decoder features are complete here.
        std::vector<Tensor> feats;
        for (const auto& s : states) feats.push_back(s.h);
        const auto residuals = block_forward_all(feats, geometry->stages[static_cast<size_t>(stage)],
                                                 blocks->layers[static_cast<size_t>(stage)], concurrent);
        for (size_t v = 0; v < states.size(); ++v) states[v].h = add(states[v].h, residuals[v]);
    }
    std::vector<Tensor> out(static_cast<size_t>(n));
    parallel_for(n, concurrent, [&](int64_t v) {
        const auto i = static_cast<size_t>(v);
        out[i] = finish(states[i], params);
    });
    return out;
}

}  // namespace mvc
