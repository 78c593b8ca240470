#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "mvc/errors.hpp"
#include "mvc/ops.hpp"
#include "mvc/rng.hpp"
#include "mvc/synth.hpp"
#include "mvc/tensor_io.hpp"

using namespace mvc;

namespace {

constexpr double kDeg = M_PI / 180.0;

bool same_primitive(const Primitive& a, const Primitive& b) {
    return a.kind == b.kind && a.center == b.center && a.half_size == b.half_size && a.albedo == b.albedo;
}

// Distance from p to the surface of one primitive.
double surface_distance(const Primitive& prim, const Vec3& p) {
    if (prim.kind == PrimitiveKind::Sphere) return std::abs((p - prim.center).norm() - prim.half_size.x());
    const Vec3 q = (p - prim.center).cwiseAbs() - prim.half_size;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return std::abs(outside + inside);
}

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("mvcons_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::string tree_bytes(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += std::filesystem::relative(f, dir).string() + "\n" + read_file(f);
    return all;
}

DataConfig small_data() {
    DataConfig c;
    c.train_objects = 3;
    c.eval_objects = 2;
    c.views = 4;
    c.image_size = 16;
    return c;
}

}  // namespace

TEST_CASE("scenes are deterministic and stay inside the unit cube") {
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const Scene a = gen_scene(seed);
        const Scene b = gen_scene(seed);
        REQUIRE(a.primitives.size() == b.primitives.size());
        REQUIRE(!a.primitives.empty());
        REQUIRE(a.primitives.size() <= 4);
        for (size_t i = 0; i < a.primitives.size(); ++i) {
            REQUIRE(same_primitive(a.primitives[i], b.primitives[i]));
            REQUIRE(a.primitives[i].aabb_min().minCoeff() >= -1.0);
            REQUIRE(a.primitives[i].aabb_max().maxCoeff() <= 1.0);
        }
    }
    int differing = 0;
    for (uint64_t pair = 0; pair < 100; ++pair) {
        const Scene a = gen_scene(2 * pair), b = gen_scene(2 * pair + 1);
        bool differ = a.primitives.size() != b.primitives.size();
        for (size_t i = 0; !differ && i < a.primitives.size(); ++i) differ = !same_primitive(a.primitives[i], b.primitives[i]);
        differing += differ;
    }
    CHECK(differing == 100);
    const Scene s = gen_scene(5);
    const Scene back = parse_scene(format_scene(s));
    REQUIRE(back.primitives.size() == s.primitives.size());
    for (size_t i = 0; i < s.primitives.size(); ++i) CHECK(same_primitive(back.primitives[i], s.primitives[i]));
}

TEST_CASE("render examples") {
    const CameraPose pose = CameraPose::orbit(0.0, 0.0, 3.0, 40.0, 33, 33);
    Scene empty;
    empty.background = Vec3(0.25, 0.5, 0.75);
    const RenderedView e = render_view(empty, pose);
    for (int64_t i = 0; i < 33 * 33; ++i) {
        REQUIRE(e.image[i] == 0.25);
        REQUIRE(e.image[33 * 33 + i] == 0.5);
        REQUIRE(e.image[2 * 33 * 33 + i] == 0.75);
        REQUIRE(std::isinf(e.depth[i]));
    }

    Scene cube;
    Primitive p;
    p.half_size = Vec3::Constant(0.5);
    p.albedo = Vec3(1.0, 0.5, 0.25);
    cube.primitives.push_back(p);
    const RenderedView r = render_view(cube, pose);
    CHECK(r.depth.at({16, 16}) == doctest::Approx(2.5).epsilon(1e-15));
    // Head-on face: n.l = 1 at the centre pixel.
    CHECK(r.image.at({0, 16, 16}) == 1.0);
    CHECK(r.image.at({1, 16, 16}) == 0.5);
    CHECK(r.image.at({2, 16, 16}) == 0.25);
    for (int64_t i = 0; i < r.image.numel(); ++i) {
        REQUIRE(r.image[i] >= 0.0);
        REQUIRE(r.image[i] <= 1.0);
        REQUIRE(r.image[i] * 256.0 == std::round(r.image[i] * 256.0));
    }
}

TEST_CASE("rendered depth lands on a primitive surface") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const Scene s = gen_scene(1000 + seed);
        Rng rng(seed);
        const CameraPose pose =
            CameraPose::orbit(rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 30.0) * kDeg, 3.0, 38.4, 32, 32);
        const RenderedView r = render_view(s, pose);
        int64_t foreground = 0;
        for (int64_t row = 0; row < 32; ++row)
            for (int64_t col = 0; col < 32; ++col) {
                const double d = r.depth.at({row, col});
                if (std::isinf(d)) continue;
                REQUIRE(d > 0.0);
                ++foreground;
                const Vec3 x = unproject(static_cast<double>(col), static_cast<double>(row), d, pose);
                double best = 1e300;
                for (const Primitive& p : s.primitives) best = std::min(best, surface_distance(p, x));
                REQUIRE(best <= 1e-6);
            }
        CHECK(foreground > 0);
    }
}

TEST_CASE("orbit poses") {
    DataConfig c;
    const auto poses = orbit_poses(c, 0.0);
    REQUIRE(poses.size() == 16);
    for (size_t k = 1; k < poses.size(); ++k) {
        CHECK((poses[k].azimuth - poses[k - 1].azimuth) / kDeg == doctest::Approx(22.5).epsilon(1e-14));
    }
    for (const CameraPose& p : poses) CHECK(std::abs(camera_center(p).z()) == 0.0);
    const auto high = orbit_poses(c, 30.0 * kDeg);
    for (const CameraPose& p : high) CHECK(camera_center(p).z() == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("dataset container round-trips and is byte-identical across runs") {
    const DataConfig c = small_data();
    const Dataset ds = make_dataset(c, 42, "abc123");
    CHECK(ds.split("train").size() == 3);
    CHECK(ds.split("eval").size() == 2);
    for (const ObjectRecord* o : ds.split("train")) {
        CHECK(o->elevation > 0.0);
        CHECK(o->elevation <= 30.0 * kDeg);
    }
    CHECK(ds.split("eval")[0]->elevation == 0.0);
    CHECK(ds.split("eval")[1]->elevation == doctest::Approx(15.0 * kDeg));

    const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
    write_dataset(a, ds);
    write_dataset(b, make_dataset(c, 42, "abc123"));
    CHECK(tree_bytes(a) == tree_bytes(b));
    const auto c2 = temp_dir("ds_c");
    write_dataset(c2, make_dataset(c, 43, "abc123"));
    CHECK(tree_bytes(a) != tree_bytes(c2));

    const Dataset back = read_dataset(a);
    CHECK(back.config_hash == "abc123");
    CHECK(back.seed == 42);
    REQUIRE(back.objects.size() == ds.objects.size());
    for (size_t i = 0; i < ds.objects.size(); ++i) {
        CHECK(back.objects[i].name == ds.objects[i].name);
        CHECK(back.objects[i].elevation == ds.objects[i].elevation);
        REQUIRE(back.objects[i].images.size() == 4);
        for (size_t v = 0; v < 4; ++v) {
            CHECK(std::memcmp(back.objects[i].images[v].values().data(), ds.objects[i].images[v].values().data(),
                              sizeof(double) * 3 * 16 * 16) == 0);
            CHECK(back.objects[i].poses[v].azimuth == ds.objects[i].poses[v].azimuth);
        }
    }
    for (const auto& d : {a, b, c2}) std::filesystem::remove_all(d);

    DataConfig bad = c;
    bad.eval_elevations_deg = {95.0};
    CHECK_THROWS_AS(make_dataset(bad, 1), ConfigError);
    bad = c;
    bad.views = 1;
    CHECK_THROWS_AS(make_dataset(bad, 1), ConfigError);
}

TEST_CASE("latent codec examples") {
    Rng rng(3);
    Tensor img(Shape{3, 8, 6});
    for (int64_t i = 0; i < img.numel(); ++i) img.mutable_values()[static_cast<size_t>(i)] = std::floor(rng.uniform() * 257.0) / 256.0;
    const Tensor z = latent_encode(img);
    CHECK(z.shape() == Shape{12, 4, 3});
    const Tensor back = latent_decode(z);
    for (int64_t i = 0; i < img.numel(); ++i) REQUIRE(back[i] == img[i]);
    CHECK(z.at({4 * 1 + 2 * 1 + 0, 2, 1}) == 2.0 * img.at({1, 5, 2}) - 1.0);

    const Tensor constant = latent_encode(Tensor(Shape{3, 4, 4}, 0.75));
    for (int64_t i = 0; i < constant.numel(); ++i) CHECK(constant[i] == 0.5);

    // Linear up to the affine offset: enc(a a1 + b a2) - (a + b - 1) = a enc(a1) + b enc(a2).
    const Tensor a1 = rng.uniform_tensor({3, 4, 4}, 0.0, 1.0), a2 = rng.uniform_tensor({3, 4, 4}, 0.0, 1.0);
    const Tensor lhs = add_scalar(latent_encode(add(scale(a1, 0.3), scale(a2, 0.6))), -(0.3 + 0.6 - 1.0));
    const Tensor rhs = add(scale(latent_encode(a1), 0.3), scale(latent_encode(a2), 0.6));
    for (int64_t i = 0; i < lhs.numel(); ++i) CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-14));

    CHECK_THROWS_AS(latent_encode(Tensor(Shape{3, 5, 4})), ShapeError);
    CHECK_THROWS_AS(latent_decode(Tensor(Shape{5, 4, 4})), ShapeError);
}
