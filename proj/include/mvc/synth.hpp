#pragma once

// Procedural objects, a ray-cast renderer, the on-disk multi-view dataset and
// the toy latent codec.
//
// Dataset directory layout:
//
//   manifest.txt                      header key=value lines, then one "object" line per object
//   <object>/scene.txt                primitives, one per line
//   <object>/poses.txt                pose table (see camera.hpp)
//   <object>/view_NN.image.mvt        [3, H, W] RGB in [0, 1]
//   <object>/view_NN.depth.mvt        [H, W] camera-z depth, +inf on background

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvc/camera.hpp"
#include "mvc/tensor.hpp"

namespace mvc {

enum class PrimitiveKind { Box, Sphere };

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Box;
    Vec3 center = Vec3::Zero();
    Vec3 half_size = Vec3::Constant(0.5);  // sphere: radius in every component
    Vec3 albedo = Vec3::Constant(0.5);

    Vec3 aabb_min() const { return center - half_size; }
    Vec3 aabb_max() const { return center + half_size; }
};

struct SceneConfig {
    int64_t min_primitives = 1;
    int64_t max_primitives = 4;
};

struct Scene {
    uint64_t seed = 0;
    std::vector<Primitive> primitives;
    Vec3 background = Vec3::Ones();
};

Scene gen_scene(uint64_t seed, const SceneConfig& config = {});
std::string format_scene(const Scene& scene);
Scene parse_scene(const std::string& text);

struct Lighting {
    double ambient = 0.3;
    double headlight = 0.7;
};

struct RenderedView {
    Tensor image;  // [3, H, W]
    Tensor depth;  // [H, W]
    CameraPose pose;
};

// One ray per pixel centre; colour albedo * (ambient + headlight * max(0, n.l))
// with l pointing back to the camera, clamped and rounded to multiples of 1/256.
RenderedView render_view(const Scene& scene, const CameraPose& pose, const Lighting& lighting = {});

struct DataConfig {
    int64_t train_objects = 64;
    int64_t eval_objects = 16;
    int64_t views = 16;
    int64_t image_size = 64;
    double radius = 3.0;
    double focal_scale = 1.2;  // focal = focal_scale * image_size
    double max_train_elevation_deg = 30.0;
    std::vector<double> eval_elevations_deg = {0.0, 15.0, 30.0};
    SceneConfig scene;
    Lighting lighting;

    double focal() const { return focal_scale * static_cast<double>(image_size); }
};

// View k sits at azimuth 2 pi k / views; every view shares `elevation`.
std::vector<CameraPose> orbit_poses(const DataConfig& config, double elevation);

struct ObjectRecord {
    std::string name;
    std::string split;  // "train" or "eval"
    uint64_t scene_seed = 0;
    double elevation = 0.0;  // radians
    Scene scene;
    std::vector<CameraPose> poses;
    std::vector<Tensor> images;
    std::vector<Tensor> depths;
};

struct Dataset {
    DataConfig config;
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<ObjectRecord> objects;

    std::vector<const ObjectRecord*> split(const std::string& name) const;
};

Dataset make_dataset(const DataConfig& config, uint64_t seed, const std::string& config_hash = "");
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
// `with_views` = false reads only the manifest, scenes and poses.
Dataset read_dataset(const std::filesystem::path& dir, bool with_views = true);

// Space-to-channel 2x2 rearrangement then z = 2 v - 1. Latent channel
// 4 c + 2 dy + dx holds colour c at offset (dy, dx) of each patch.
Tensor latent_encode(const Tensor& image);
Tensor latent_decode(const Tensor& latent);

}  // namespace mvc
