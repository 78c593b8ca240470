#include <cmath>

#include <Eigen/LU>

#include "doctest.h"
#include "geometry_oracles.hpp"
#include "gradcheck.hpp"
#include "mvc/camera.hpp"
#include "mvc/ops.hpp"
#include "mvc/rng.hpp"
#include "mvc/volume.hpp"

using namespace mvc;

namespace {

constexpr double kDeg = M_PI / 180.0;

CameraPose random_pose(Rng& rng, int64_t extent = 16, double radius = 3.0) {
    return CameraPose::orbit(rng.uniform(0.0, 2.0 * M_PI), rng.uniform(-30.0, 30.0) * kDeg, radius,
                             1.2 * static_cast<double>(extent), extent, extent);
}

// Independent bilinear read with the same border rule (all corners inside).
double bilinear_ref(const Tensor& map, int64_t c, double row, double col, bool* ok) {
    const int64_t h = map.dim(1), w = map.dim(2);
    *ok = row >= 0.0 && col >= 0.0 && row <= static_cast<double>(h - 1) && col <= static_cast<double>(w - 1);
    if (!*ok) return 0.0;
    const int64_t r0 = std::min<int64_t>(static_cast<int64_t>(std::floor(row)), h - 2 < 0 ? 0 : h - 2);
    const int64_t c0 = std::min<int64_t>(static_cast<int64_t>(std::floor(col)), w - 2 < 0 ? 0 : w - 2);
    const double fr = row - static_cast<double>(r0), fc = col - static_cast<double>(c0);
    auto at = [&](int64_t r, int64_t cc) { return map.at({c, std::min(r, h - 1), std::min(cc, w - 1)}); };
    return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) + fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
}

}  // namespace

TEST_CASE("pose_to_transform examples") {
    const CameraPose p0 = CameraPose::orbit(0.0, 0.0, 2.0, 10.0, 8, 8);
    const Vec3 c0 = camera_center(p0);
    CHECK((c0 - Vec3(2, 0, 0)).norm() < 1e-15);
    const RigidTransform x0 = pose_to_transform(p0);
    CHECK((x0.apply(Vec3::Zero()) - Vec3(0, 0, 2)).norm() < 1e-15);

    const CameraPose p1 = CameraPose::orbit(M_PI, 0.0, 2.0, 10.0, 8, 8);
    CHECK((camera_center(p1) - Vec3(-2, 0, 0)).norm() < 1e-15);

    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const CameraPose p = random_pose(rng, 16, rng.uniform(0.5, 10.0));
        const RigidTransform xf = pose_to_transform(p);
        const Mat3 e = xf.rotation.transpose() * xf.rotation - Mat3::Identity();
        CHECK(e.cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(xf.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(xf.apply(camera_center(p)).norm() <= 1e-12);
        const Vec3 o = xf.apply(Vec3::Zero());
        CHECK(std::abs(o.x()) < 1e-12);
        CHECK(std::abs(o.y()) < 1e-12);
        CHECK(o.z() == doctest::Approx(p.radius).epsilon(1e-12));
        // Image "down" points against world +Z.
        CHECK(xf.rotation.row(1).z() < 0.0);
    }
    CHECK_THROWS_AS(pose_to_transform(CameraPose::orbit(0.0, 0.0, 0.0, 10.0, 8, 8)), ValueError);
    CHECK_THROWS_AS(pose_to_transform(CameraPose::orbit(0.0, 0.0, -1.0, 10.0, 8, 8)), ValueError);
}

TEST_CASE("project and unproject") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const CameraPose pose = random_pose(rng, 32, rng.uniform(2.0, 6.0));
        const Projection o = project(Vec3::Zero(), pose);
        CHECK(o.valid);
        CHECK(std::abs(o.u - pose.intrinsics.cx) < 1e-9);
        CHECK(std::abs(o.v - pose.intrinsics.cy) < 1e-9);
        CHECK(std::abs(o.depth - pose.radius) < 1e-12);
        CHECK(unproject(pose.intrinsics.cx, pose.intrinsics.cy, pose.radius, pose).norm() < 1e-12);

        const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Projection q = project(p, pose);
        REQUIRE(q.valid);
        CHECK((unproject(q.u, q.v, q.depth, pose) - p).cwiseAbs().maxCoeff() <= 1e-9);

        const double u = rng.uniform(0, 31), v = rng.uniform(0, 31), d = rng.uniform(0.5, 5.0);
        const Vec3 c = camera_center(pose);
        const Vec3 a = unproject(u, v, d, pose) - c;
        const Vec3 b = unproject(u, v, 2.0 * d, pose) - c;
        CHECK((b - 2.0 * a).cwiseAbs().maxCoeff() <= 1e-12);
    }
    const CameraPose pose = CameraPose::orbit(0.0, 0.0, 2.0, 10.0, 8, 8);
    CHECK_FALSE(project(Vec3(3, 0, 0), pose).valid);
    CHECK_FALSE(project(Vec3(2, 0.5, 0), pose).valid);
    CHECK_THROWS_AS(unproject(1.0, 1.0, 0.0, pose), ValueError);
}

TEST_CASE("resampled intrinsics follow average pooling") {
    const CameraPose full = CameraPose::orbit(0.3, 0.2, 3.0, 76.8, 64, 64);
    const CameraPose half = full.at_resolution(32, 32);
    // The centre of a 2x2 block of fine pixels is the coarse pixel centre.
    const Vec3 p = unproject(2.5, 6.5, 2.7, full);
    const Projection q = project(p, half);
    CHECK(q.u == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.v == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("pos_encode examples") {
    Tensor z = pos_encode(Tensor(Shape{1}, 0.0), 6);
    REQUIRE(z.numel() == 12);
    for (int i = 0; i < 12; ++i) CHECK(z[i] == (i % 2 == 0 ? 0.0 : 1.0));

    Tensor one = pos_encode(Tensor(Shape{1}, 1.0), 3);
    CHECK(std::abs(one[0]) < 1e-15);
    CHECK(one[1] == -1.0);
    CHECK(std::abs(one[2]) < 1e-15);
    CHECK(one[3] == 1.0);

    Rng rng(13);
    Tensor x = rng.uniform_tensor({2, 50}, -100.0, 100.0);
    Tensor e = pos_encode(x, 6);
    CHECK(e.shape() == Shape{24, 50});
    for (int64_t i = 0; i < e.numel(); ++i) CHECK(std::abs(e[i]) <= 1.0);
    // Channel layout: block of input channel 1, frequency 2, cos part.
    CHECK(e.at({12 + 5, 7}) == std::cos(4.0 * M_PI * x.at({1, 7})));
    CHECK_THROWS_AS(pos_encode(x, 0), ValueError);
}

TEST_CASE("frustum_depths examples") {
    const auto d = frustum_depths(1.0, 2.0, 3);
    REQUIRE(d.size() == 3);
    CHECK(d[0] == 1.0);
    CHECK(d[1] == 1.5);
    CHECK(d[2] == 2.0);
    const auto two = frustum_depths(0.7, 5.3, 2);
    CHECK(two == std::vector<double>{0.7, 5.3});
    const auto many = frustum_depths(1.2679491924311228, 4.732050807568877, 16);
    const double step = many[1] - many[0];
    for (size_t i = 1; i < many.size(); ++i) {
        CHECK(many[i] > many[i - 1]);
        CHECK(std::abs((many[i] - many[i - 1]) - step) <= 1e-12);
    }
    CHECK_THROWS_AS(frustum_depths(2.0, 1.0, 3), ValueError);
    CHECK_THROWS_AS(frustum_depths(0.0, 1.0, 3), ValueError);
    CHECK_THROWS_AS(frustum_depths(1.0, 2.0, 1), ValueError);

    const DepthRange r = grid_depth_range(3.0, GridSpec{});
    CHECK(r.near == doctest::Approx(3.0 - std::sqrt(3.0)));
    CHECK(r.far == doctest::Approx(3.0 + std::sqrt(3.0)));
}

TEST_CASE("camera_param_volume examples") {
    GridSpec grid{5, 1.0};
    CHECK(grid.voxel_center(2, 2, 2).norm() == 0.0);
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        const CameraPose pose = random_pose(rng);
        Tensor v = camera_param_volume(pose, grid);
        CHECK(v.shape() == Shape{4, 5, 5, 5});
        const Vec3 expected = -camera_center(pose) / pose.radius;
        CHECK(std::abs(v.at({0, 2, 2, 2}) - expected.x()) < 1e-12);
        CHECK(std::abs(v.at({1, 2, 2, 2}) - expected.y()) < 1e-12);
        CHECK(std::abs(v.at({2, 2, 2, 2}) - expected.z()) < 1e-12);
        CHECK(std::abs(v.at({3, 2, 2, 2}) - pose.radius) < 1e-12);
        for (int64_t i = 0; i < 125; ++i) {
            const double n = std::sqrt(v[i] * v[i] + v[125 + i] * v[125 + i] + v[250 + i] * v[250 + i]);
            CHECK(std::abs(n - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("voxel alignment is pose independent") {
    GridSpec grid{8, 1.0};
    Rng rng(15);
    const CameraPose a = random_pose(rng), b = random_pose(rng);
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j)
            for (int64_t k = 0; k < 8; ++k) {
                const Vec3 p = grid.voxel_center(i, j, k);
                const Projection pa = project(p, a), pb = project(p, b);
                CHECK((unproject(pa.u, pa.v, pa.depth, a) - unproject(pb.u, pb.v, pb.depth, b)).cwiseAbs().maxCoeff() <= 1e-9);
                const Vec3 lc = grid.lattice_coord(p);
                CHECK((lc - Vec3(double(i), double(j), double(k))).cwiseAbs().maxCoeff() <= 1e-12);
            }
}

TEST_CASE("unproject_features examples") {
    GridSpec grid{9, 1.0};
    Rng rng(16);
    const CameraPose pose = random_pose(rng, 16);
    const ViewGeometry g = make_view_geometry(pose, grid, FrustumSpec{4}, 16, 16);
    const int64_t n = grid.voxel_count();

    WorldVolume w = unproject_features(Tensor(Shape{2, 16, 16}, 0.625), g);
    CHECK(w.features.shape() == Shape{2 + 48, 9, 9, 9});
    int64_t seen = 0;
    for (int64_t q = 0; q < n; ++q) {
        const double m = w.mask[q];
        seen += m > 0 ? 1 : 0;
        for (int64_t c = 0; c < 2; ++c) CHECK(w.features[c * n + q] == doctest::Approx(m > 0 ? 0.625 : 0.0).epsilon(1e-14));
        if (m == 0)
            for (int64_t c = 2; c < 50; ++c) CHECK(w.features[c * n + q] == 0.0);
    }
    CHECK(seen > 0);

    // The origin voxel projects onto the principal point (7.5, 7.5); move the
    // principal point onto a pixel centre so the projection is exact.
    CameraPose shifted = pose;
    shifted.intrinsics.cx = 7.0;
    shifted.intrinsics.cy = 9.0;
    const ViewGeometry gs = make_view_geometry(shifted, grid, FrustumSpec{4}, 16, 16);
    Tensor x = rng.normal_tensor({3, 16, 16});
    WorldVolume ws = unproject_features(x, gs);
    for (int64_t c = 0; c < 3; ++c) CHECK(ws.features.at({c, 4, 4, 4}) == x.at({c, 9, 7}));
}

TEST_CASE("a single bright pixel lights only voxels next to its ray") {
    Rng rng(17);
    int64_t lit_total = 0;
    for (int trial = 0; trial < 2; ++trial) {
        const CameraPose pose = random_pose(rng, 16);
        const auto r = mvc::testing::pixel_reachability(pose, GridSpec{8, 1.0}, 6 + trial, 8 - trial);
        INFO("trial " << trial);
        CHECK(r.lit_outside_mask == 0);
        CHECK(r.lit_too_far == 0);
        CHECK(r.missed == 0);
        lit_total += r.lit;
    }
    CHECK(lit_total > 0);
}

TEST_CASE("warp_to_frustum examples") {
    GridSpec grid{8, 1.0};
    Rng rng(18);
    const CameraPose pose = random_pose(rng, 12);
    const ViewGeometry g = make_view_geometry(pose, grid, FrustumSpec{5}, 12, 12);
    const int64_t k = 5 * 12 * 12;

    WorldVolume full{Tensor(Shape{3, 8, 8, 8}, -0.4), Tensor(Shape{1, 8, 8, 8}, 1.0)};
    FrustumVolume f = warp_to_frustum(full, g);
    CHECK(f.features.shape() == Shape{3 + 12, 5, 12, 12});
    int64_t valid = 0;
    for (int64_t s = 0; s < k; ++s) {
        if (f.mask[s] == 0.0) continue;
        ++valid;
        for (int64_t c = 0; c < 3; ++c) CHECK(f.features[c * k + s] == doctest::Approx(-0.4).epsilon(1e-14));
    }
    CHECK(valid > 0);

    WorldVolume empty{Tensor(Shape{3, 8, 8, 8}, 0.0), Tensor(Shape{1, 8, 8, 8}, 0.0)};
    FrustumVolume fe = warp_to_frustum(empty, g);
    for (int64_t i = 0; i < fe.features.numel(); ++i) CHECK(fe.features[i] == 0.0);
    for (int64_t i = 0; i < k; ++i) CHECK(fe.mask[i] == 0.0);
}

TEST_CASE("warp of an unprojected map matches the composed projections") {
    GridSpec grid{8, 1.0};
    Rng rng(19);
    const CameraPose pose = random_pose(rng, 16);
    const ViewGeometry g = make_view_geometry(pose, grid, FrustumSpec{6}, 16, 16);
    const RigidTransform xf = pose_to_transform(g.pose);
    Tensor x = rng.normal_tensor({2, 16, 16});
    FrustumVolume f = warp_to_frustum(unproject_features(x, g), g, false);
    const int64_t k = 6 * 16 * 16;

    // Oracle: trilinear weights over the 8 surrounding voxel centres, each
    // voxel read by projecting it into the image directly.
    double worst = 0.0;
    int64_t compared = 0;
    for (int64_t d = 0; d < 6; ++d)
        for (int64_t row = 0; row < 16; ++row)
            for (int64_t col = 0; col < 16; ++col) {
                const int64_t s = (d * 16 + row) * 16 + col;
                const Vec3 lc = grid.lattice_coord(unproject(double(col), double(row), g.depths[size_t(d)], g.pose, xf));
                if ((lc.array() < 0.0).any() || (lc.array() > 7.0).any()) {
                    CHECK(f.mask[s] == 0.0);
                    continue;
                }
                const Eigen::Vector3i base = lc.array().floor().cast<int>().min(6).matrix();
                const Vec3 fr = lc - base.cast<double>();
                for (int64_t c = 0; c < 2; ++c) {
                    double acc = 0.0;
                    bool any_valid = false;
                    for (int corner = 0; corner < 8; ++corner) {
                        const int a = base.x() + (corner >> 2 & 1), b = base.y() + (corner >> 1 & 1), e = base.z() + (corner & 1);
                        const double wgt = ((corner >> 2 & 1) ? fr.x() : 1 - fr.x()) * ((corner >> 1 & 1) ? fr.y() : 1 - fr.y()) *
                                           ((corner & 1) ? fr.z() : 1 - fr.z());
                        const Projection p = project(grid.voxel_center(a, b, e), g.pose, xf);
                        bool ok = false;
                        const double val = p.valid ? bilinear_ref(x, c, p.v, p.u, &ok) : 0.0;
                        any_valid = any_valid || (ok && wgt > 0.0);
                        acc += wgt * (ok ? val : 0.0);
                    }
                    worst = std::max(worst, std::abs(acc - f.features[c * k + s]));
                    if (c == 0) CHECK(f.mask[s] == (any_valid ? 1.0 : 0.0));
                    ++compared;
                }
            }
    CHECK(compared > 100);
    CHECK(worst <= 1e-12);
}

TEST_CASE("warp at a voxel-centred sample reproduces the pixel within interpolation error") {
    // Linear image: bilinear lifting reads it exactly, so the only error left
    // is the trilinear interpolation of the projected field.
    GridSpec grid{16, 1.0};
    Rng rng(20);
    const CameraPose pose = CameraPose::orbit(0.4, 0.2, 3.0, 38.4, 32, 32);
    const ViewGeometry g = make_view_geometry(pose, grid, FrustumSpec{16}, 32, 32);
    std::vector<double> lin(32 * 32);
    for (int64_t r = 0; r < 32; ++r)
        for (int64_t c = 0; c < 32; ++c) lin[size_t(r * 32 + c)] = 0.1 * double(r) - 0.05 * double(c);
    FrustumVolume f = warp_to_frustum(unproject_features(Tensor(Shape{1, 32, 32}, lin), g), g, false);
    double worst = 0.0;
    int64_t count = 0;
    const int64_t k = 16 * 32 * 32;
    for (int64_t s = 0; s < k; ++s) {
        // Only samples whose 8 voxels are all seen by the camera.
        const Vec3 lc(g.frustum_voxels.at({s, 0}), g.frustum_voxels.at({s, 1}), g.frustum_voxels.at({s, 2}));
        if ((lc.array() < 0.0).any() || (lc.array() > 15.0).any()) continue;
        const Eigen::Vector3i b = lc.array().floor().cast<int>().min(14).matrix();
        bool all = true;
        for (int corner = 0; corner < 8; ++corner)
            all = all && g.voxel_mask.at({0, b.x() + (corner >> 2 & 1), b.y() + (corner >> 1 & 1), b.z() + (corner & 1)}) == 1.0;
        if (!all) continue;
        const int64_t row = (s / 32) % 32, col = s % 32;
        worst = std::max(worst, std::abs(f.features[s] - lin[size_t(row * 32 + col)]));
        ++count;
    }
    CHECK(count > 1000);
    // Projected field curvature over one voxel stays well below a tenth of a
    // pixel here, i.e. < 0.015 in feature units.
    CHECK(worst < 0.015);
}

TEST_CASE("lifts are linear in the features") {
    GridSpec grid{8, 1.0};
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const CameraPose pose = random_pose(rng, 12);
        const ViewGeometry g = make_view_geometry(pose, grid, FrustumSpec{4}, 12, 12);
        Tensor x = rng.normal_tensor({3, 12, 12}), y = rng.normal_tensor({3, 12, 12});
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        WorldVolume fx = unproject_features(x, g), fy = unproject_features(y, g);
        WorldVolume fxy = unproject_features(add(scale(x, a), scale(y, b)), g);
        const int64_t n = 3 * 512;
        for (int64_t i = 0; i < n; ++i) CHECK(std::abs(fxy.features[i] - (a * fx.features[i] + b * fy.features[i])) <= 1e-9);

        Tensor vx = rng.normal_tensor({3, 8, 8, 8}), vy = rng.normal_tensor({3, 8, 8, 8});
        Tensor m = fx.mask;
        FrustumVolume wx = warp_to_frustum({vx, m}, g, false), wy = warp_to_frustum({vy, m}, g, false);
        FrustumVolume wxy = warp_to_frustum({add(scale(vx, a), scale(vy, b)), m}, g, false);
        for (int64_t i = 0; i < wx.features.numel(); ++i)
            CHECK(std::abs(wxy.features[i] - (a * wx.features[i] + b * wy.features[i])) <= 1e-9);
    }
}

TEST_CASE("lifts pass the finite-difference check") {
    GridSpec grid{4, 1.0};
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(300 + seed);
        const CameraPose pose = random_pose(rng, 6, 2.5);
        const ViewGeometry g = make_view_geometry(pose, grid, FrustumSpec{3}, 6, 6);
        const auto r = mvc::testing::grad_check(
            [&g, seed](const std::vector<Tensor>& in) {
                WorldVolume v = unproject_features(in[0], g);
                return mvc::testing::random_projection(warp_to_frustum(v, g).features, seed);
            },
            {rng.normal_tensor({2, 6, 6})}, seed);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("pose table round trip") {
    Rng rng(22);
    std::vector<CameraPose> poses;
    for (int i = 0; i < 16; ++i) poses.push_back(random_pose(rng, 64));
    const auto back = parse_pose_table(format_pose_table(poses));
    REQUIRE(back.size() == poses.size());
    for (size_t i = 0; i < poses.size(); ++i) {
        CHECK(back[i].azimuth == poses[i].azimuth);
        CHECK(back[i].elevation == poses[i].elevation);
        CHECK(back[i].intrinsics.focal == poses[i].intrinsics.focal);
        CHECK(back[i].intrinsics.width == 64);
    }
}
