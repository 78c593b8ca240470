#include <cmath>
#include <set>

#include "doctest.h"
#include "block_cases.hpp"
#include "gradcheck.hpp"
#include "mvc/block.hpp"
#include "mvc/ops.hpp"

using namespace mvc;

namespace {

using mvc::testing::make_fixture;
using mvc::testing::small_config;
using Fixture = mvc::testing::BlockFixture;

constexpr double kDeg = M_PI / 180.0;

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("fresh blocks return an exactly zero residual") {
    Rng rng(31);
    for (int trial = 0; trial < 3; ++trial) {
        Fixture f = make_fixture(rng, 3, 6, 8, 8, 4);
        BlockParams p = init_block(small_config(6), rng);
        for (const Tensor& r : block_forward_all(f.features, f.geometry, p)) {
            CHECK(r.shape() == Shape{6, 8, 8});
            double m = 0.0;
            for (int64_t i = 0; i < r.numel(); ++i) m = std::max(m, std::abs(r[i]));
            CHECK(m == 0.0);
        }
        CHECK(bitwise_equal(block_forward(1, f.features, f.geometry, p), Tensor::zeros({6, 8, 8})));
    }
}

TEST_CASE("single-token attention returns the projected value") {
    Rng rng(32);
    BlockParams p = init_block(small_config(5), rng, false);
    // One key: softmax of a singleton is 1 for any query.
    Tensor q = rng.normal_tensor({7, 3, 8 + 12});
    Tensor kv = rng.normal_tensor({7, 1, 8 + 12});
    Tensor weights;
    Tensor out = multi_head_attention(q, kv, Tensor{}, p.depth_attn, 4, &weights);
    Tensor expected = linear(linear(kv, p.depth_attn.wv, p.depth_attn.bv), p.depth_attn.wo, p.depth_attn.bo);
    for (int64_t b = 0; b < 7; ++b)
        for (int64_t l = 0; l < 3; ++l)
            for (int64_t c = 0; c < 8; ++c) CHECK(out.at({b, l, c}) == doctest::Approx(expected.at({b, 0, c})).epsilon(1e-14));
    for (int64_t i = 0; i < weights.numel(); ++i) CHECK(weights[i] == 1.0);

    // Identical keys: the output ignores the query.
    std::vector<double> rep;
    Tensor token = rng.normal_tensor({1, 1, 8});
    for (int k = 0; k < 6; ++k) rep.insert(rep.end(), token.values().begin(), token.values().end());
    Tensor same(Shape{1, 6, 8}, rep);
    Tensor q1 = rng.normal_tensor({1, 1, 5}), q2 = rng.normal_tensor({1, 1, 5});
    Tensor o1 = multi_head_attention(q1, same, Tensor{}, p.cross_attn, 4);
    Tensor o2 = multi_head_attention(q2, same, Tensor{}, p.cross_attn, 4);
    Tensor direct = linear(linear(token, p.cross_attn.wv, p.cross_attn.bv), p.cross_attn.wo, p.cross_attn.bo);
    for (int64_t c = 0; c < 8; ++c) {
        CHECK(o1[c] == doctest::Approx(direct[c]).epsilon(1e-12));
        CHECK(o2[c] == doctest::Approx(direct[c]).epsilon(1e-12));
    }

    // N = 1 view aggregation: every valid voxel attends to itself with weight 1.
    Fixture f = make_fixture(rng, 1, 5, 8, 8, 4);
    WorldVolume lifted = unproject_features(f.features[0], f.geometry[0]);
    AttentionTrace trace;
    view_aggregate(std::span<const WorldVolume>(&lifted, 1), p, &trace);
    REQUIRE(trace.view_weights.size() == 1);
    const Tensor& vw = trace.view_weights[0];
    for (int64_t v = 0; v < 512; ++v)
        for (int64_t h = 0; h < 4; ++h) CHECK(vw[v * 4 + h] == (lifted.mask[v] > 0 ? 1.0 : 0.0));
}

TEST_CASE("ray aggregation with a single depth sample") {
    Rng rng(33);
    BlockParams p = init_block(small_config(3, 2), rng, false);
    // D = 1 frustum of 2x2 pixels, all valid.
    Tensor feats = rng.normal_tensor({8 + 4, 1, 2, 2});
    FrustumVolume fr{feats, Tensor::ones({1, 1, 2, 2}), {3.0}};
    Tensor x = rng.normal_tensor({3, 2, 2});
    Tensor xt = ray_aggregate(x, fr, p);
    for (int64_t px = 0; px < 4; ++px) {
        // The ray token after depth attention over itself.
        std::vector<double> tok(12);
        for (int64_t c = 0; c < 12; ++c) tok[size_t(c)] = feats[c * 4 + px];
        Tensor t(Shape{1, 1, 12}, tok);
        Tensor self = multi_head_attention(t, t, Tensor{}, p.depth_attn, 4);
        Tensor ray = add(slice(t, 2, 0, 8), self);
        Tensor expected = linear(linear(ray, p.cross_attn.wv, p.cross_attn.bv), p.cross_attn.wo, p.cross_attn.bo);
        for (int64_t c = 0; c < 8; ++c) CHECK(xt[c * 4 + px] == doctest::Approx(expected[c]).epsilon(1e-12));
    }
    // A fully masked ray gives a zero output.
    FrustumVolume masked{feats, Tensor::zeros({1, 1, 2, 2}), {3.0}};
    Tensor z = ray_aggregate(x, masked, p);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("view aggregation is equivariant to view order") {
    Rng rng(34);
    BlockParams p = init_block(small_config(4), rng, false);
    Fixture f = make_fixture(rng, 4, 4, 8, 8, 4);
    std::vector<WorldVolume> lifted;
    for (int v = 0; v < 4; ++v) lifted.push_back(unproject_features(f.features[size_t(v)], f.geometry[size_t(v)]));
    const std::vector<int> perm{2, 0, 3, 1};
    std::vector<WorldVolume> permuted;
    for (int v : perm) permuted.push_back(lifted[size_t(v)]);
    auto a = view_aggregate(lifted, p);
    auto b = view_aggregate(permuted, p);
    for (size_t i = 0; i < perm.size(); ++i) {
        const Tensor& x = a[size_t(perm[i])].features;
        const Tensor& y = b[i].features;
        double worst = 0.0;
        for (int64_t k = 0; k < x.numel(); ++k) worst = std::max(worst, std::abs(x[k] - y[k]));
        CHECK(worst <= 1e-9);
        CHECK(bitwise_equal(a[size_t(perm[i])].mask, b[i].mask));
    }
}

TEST_CASE("attention weights are probability vectors") {
    Rng rng(35);
    mvc::testing::DistributionCheck d;
    for (int trial = 0; trial < 10; ++trial) mvc::testing::check_block_attention(rng, 2 + trial % 3, d);
    CHECK(d.rows > 10000);
    CHECK(d.violations == 0);
    CHECK(d.worst_sum <= 1e-6);
}

TEST_CASE("concurrent and sequential schedules agree bitwise") {
    Rng rng(36);
    BlockParams p = init_block(small_config(4), rng, false);
    Fixture f = make_fixture(rng, 4, 4, 8, 8, 4);
    NoGradGuard guard;
    auto seq = block_forward_all(f.features, f.geometry, p, false);
    auto par = block_forward_all(f.features, f.geometry, p, true);
    for (size_t i = 0; i < seq.size(); ++i) {
        CHECK(bitwise_equal(seq[i], par[i]));
        CHECK(bitwise_equal(seq[i], block_forward(static_cast<int64_t>(i), f.features, f.geometry, p)));
    }
}

TEST_CASE("block gradients pass the finite-difference check") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = mvc::testing::block_grad_check(seed);
        INFO("seed " << seed);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("information flows across views") {
    Rng rng(37);
    Fixture f = make_fixture(rng, 3, 4, 8, 8, 4);
    BlockParams p = init_block(small_config(4), rng, false);
    for (auto& x : f.features) x.set_requires_grad(true);
    Tensor res = block_forward(0, f.features, f.geometry, p);
    backward(mvc::testing::random_projection(res, 5));
    for (const Tensor& x : f.features) {
        double g = 0.0;
        for (double v : x.grad()) g = std::max(g, std::abs(v));
        CHECK(g > 1e-6);
    }
}

TEST_CASE("pixels outside the reachable set cannot change another view") {
    // View 0 is a narrow camera, view 1 a wide one a quarter turn away.
    const int64_t e = 8, r = 8, depth = 4;
    const GridSpec grid{r, 1.0};
    std::vector<ViewGeometry> geom{
        make_view_geometry(CameraPose::orbit(0.0, 10.0 * kDeg, 3.0, 60.0, e, e), grid, FrustumSpec{depth}, e, e),
        make_view_geometry(CameraPose::orbit(0.5 * M_PI, 20.0 * kDeg, 3.0, 4.0, e, e), grid, FrustumSpec{depth}, e, e)};

    // Voxels touched by view 0's frustum samples (trilinear corners).
    std::set<int64_t> touched;
    const Tensor& fv = geom[0].frustum_voxels;
    for (int64_t s = 0; s < fv.dim(0); ++s) {
        const double a = fv.at({s, 0}), b = fv.at({s, 1}), c = fv.at({s, 2});
        if (a < 0 || b < 0 || c < 0 || a > r - 1 || b > r - 1 || c > r - 1) continue;
        const auto a0 = int64_t(std::floor(a)), b0 = int64_t(std::floor(b)), c0 = int64_t(std::floor(c));
        for (int64_t da = 0; da < 2; ++da)
            for (int64_t db = 0; db < 2; ++db)
                for (int64_t dc = 0; dc < 2; ++dc) {
                    const int64_t i = std::min(a0 + da, r - 1), j = std::min(b0 + db, r - 1), k = std::min(c0 + dc, r - 1);
                    touched.insert((i * r + j) * r + k);
                }
    }
    // Two 3x3x3 convolutions widen the footprint by two voxels.
    std::set<int64_t> widened;
    for (int64_t v : touched) {
        const int64_t i = v / (r * r), j = (v / r) % r, k = v % r;
        for (int64_t di = -2; di <= 2; ++di)
            for (int64_t dj = -2; dj <= 2; ++dj)
                for (int64_t dk = -2; dk <= 2; ++dk) {
                    const int64_t a = i + di, b = j + dj, c = k + dk;
                    if (a >= 0 && b >= 0 && c >= 0 && a < r && b < r && c < r) widened.insert((a * r + b) * r + c);
                }
    }
    // Voxel attention couples the views only where both see the voxel; view
    // 1's token there reads the four bilinear corners of its projection.
    std::set<int64_t> reachable;
    for (int64_t v : widened) {
        if (geom[0].voxel_mask[v] == 0.0 || geom[1].voxel_mask[v] == 0.0) continue;
        const double row = geom[1].voxel_pixels.at({v, 0}), col = geom[1].voxel_pixels.at({v, 1});
        const auto r0 = int64_t(std::floor(row)), c0 = int64_t(std::floor(col));
        for (int64_t dr = 0; dr < 2; ++dr)
            for (int64_t dc = 0; dc < 2; ++dc) reachable.insert(std::min(r0 + dr, e - 1) * e + std::min(c0 + dc, e - 1));
    }
    REQUIRE(!reachable.empty());
    REQUIRE(reachable.size() < size_t(e * e));

    Rng rng(38);
    BlockParams p = init_block(small_config(4), rng, false);
    std::vector<Tensor> xs{rng.normal_tensor({4, e, e}), rng.normal_tensor({4, e, e})};
    const Tensor base = block_forward(0, xs, geom, p);

    for (int trial = 0; trial < 5; ++trial) {
        Tensor moved = xs[1].clone();
        auto v = moved.mutable_values();
        for (int64_t c = 0; c < 4; ++c)
            for (int64_t px = 0; px < e * e; ++px)
                if (!reachable.count(px)) v[size_t(c * e * e + px)] += rng.normal() * 3.0;
        std::vector<Tensor> ys{xs[0], moved};
        CHECK(bitwise_equal(block_forward(0, ys, geom, p), base));
    }
    // Positive control: disturbing the reachable pixels does move the residual.
    Tensor moved = xs[1].clone();
    auto v = moved.mutable_values();
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t px : reachable) v[size_t(c * e * e + px)] += 1.0;
    std::vector<Tensor> ys{xs[0], moved};
    CHECK_FALSE(bitwise_equal(block_forward(0, ys, geom, p), base));
}
