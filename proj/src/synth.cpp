#include "mvc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "mvc/errors.hpp"
#include "mvc/rng.hpp"
#include "mvc/tensor_io.hpp"

namespace mvc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Hit {
    double t = kInf;
    Vec3 normal = Vec3::Zero();
    int index = -1;
};

void intersect_box(const Primitive& p, const Vec3& o, const Vec3& d, int index, Hit& hit) {
    const Vec3 lo = p.aabb_min(), hi = p.aabb_max();
    double t_near = -kInf, t_far = kInf;
    int axis = -1;
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) return;
            continue;
        }
        double t1 = (lo[a] - o[a]) / d[a], t2 = (hi[a] - o[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > t_near) {
            t_near = t1;
            axis = a;
        }
        t_far = std::min(t_far, t2);
    }
    if (axis < 0 || t_near > t_far || t_near <= 0.0 || t_near >= hit.t) return;
    hit.t = t_near;
    hit.normal = Vec3::Zero();
    hit.normal[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
    hit.index = index;
}

void intersect_sphere(const Primitive& p, const Vec3& o, const Vec3& d, int index, Hit& hit) {
    const double r = p.half_size.x();
    const Vec3 oc = o - p.center;
    const double a = d.squaredNorm(), b = 2.0 * d.dot(oc), c = oc.squaredNorm() - r * r;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return;
    const double t = (-b - std::sqrt(disc)) / (2.0 * a);
    if (t <= 0.0 || t >= hit.t) return;
    hit.t = t;
    hit.normal = (o + t * d - p.center) / r;
    hit.index = index;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 256.0) / 256.0; }

std::string object_name(const std::string& split, int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03lld", split.c_str(), static_cast<long long>(i));
    return buf;
}

std::string view_stem(int64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%02lld", static_cast<long long>(v));
    return buf;
}

std::string join_list(const std::vector<double>& values) {
    std::string s;
    for (size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + fmt(values[i]);
    return s;
}

std::vector<double> split_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

}  // namespace

Scene gen_scene(uint64_t seed, const SceneConfig& config) {
    if (config.min_primitives < 1 || config.max_primitives < config.min_primitives) {
        throw ConfigError("scene primitive range must satisfy 1 <= min <= max");
    }
    Rng rng(seed);
    Scene scene;
    scene.seed = seed;
    const int64_t n = rng.uniform_int(config.min_primitives, config.max_primitives);
    for (int64_t i = 0; i < n; ++i) {
        Primitive p;
        p.kind = rng.uniform() < 0.5 ? PrimitiveKind::Box : PrimitiveKind::Sphere;
        if (p.kind == PrimitiveKind::Box) {
            for (int a = 0; a < 3; ++a) p.half_size[a] = rng.uniform(0.15, 0.5);
        } else {
            p.half_size = Vec3::Constant(rng.uniform(0.2, 0.5));
        }
        for (int a = 0; a < 3; ++a) {
            const double h = p.half_size[a];
            p.center[a] = std::clamp(rng.uniform(-0.6, 0.6), -1.0 + h, 1.0 - h);
        }
        for (int a = 0; a < 3; ++a) p.albedo[a] = rng.uniform(0.15, 0.95);
        scene.primitives.push_back(p);
    }
    return scene;
}

std::string format_scene(const Scene& scene) {
    std::string out = "seed " + std::to_string(scene.seed) + "\n";
    out += "background " + fmt(scene.background.x()) + " " + fmt(scene.background.y()) + " " +
           fmt(scene.background.z()) + "\n";
    for (const Primitive& p : scene.primitives) {
        out += p.kind == PrimitiveKind::Box ? "box" : "sphere";
        for (const Vec3* v : {&p.center, &p.half_size, &p.albedo}) {
            for (int a = 0; a < 3; ++a) out += " " + fmt((*v)[a]);
        }
        out += "\n";
    }
    return out;
}

Scene parse_scene(const std::string& text) {
    Scene scene;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "seed") {
            ls >> scene.seed;
        } else if (tag == "background") {
            ls >> scene.background.x() >> scene.background.y() >> scene.background.z();
        } else if (tag == "box" || tag == "sphere") {
            Primitive p;
            p.kind = tag == "box" ? PrimitiveKind::Box : PrimitiveKind::Sphere;
            for (Vec3* v : {&p.center, &p.half_size, &p.albedo}) {
                for (int a = 0; a < 3; ++a) ls >> (*v)[a];
            }
            scene.primitives.push_back(p);
        } else {
            throw IoError("scene: unknown record '" + tag + "'");
        }
        if (ls.fail()) throw IoError("scene: malformed line '" + line + "'");
    }
    return scene;
}

RenderedView render_view(const Scene& scene, const CameraPose& pose, const Lighting& lighting) {
    const RigidTransform xf = pose_to_transform(pose);
    const Vec3 origin = camera_center(pose);
    const int64_t h = pose.intrinsics.height, w = pose.intrinsics.width;
    std::vector<double> image(static_cast<size_t>(3 * h * w)), depth(static_cast<size_t>(h * w));
    for (int64_t row = 0; row < h; ++row) {
        for (int64_t col = 0; col < w; ++col) {
            // Unit camera-z step, so the ray parameter is the camera-z depth.
            const Vec3 d = unproject(static_cast<double>(col), static_cast<double>(row), 1.0, pose, xf) - origin;
            Hit hit;
            for (size_t i = 0; i < scene.primitives.size(); ++i) {
                const Primitive& p = scene.primitives[i];
                if (p.kind == PrimitiveKind::Box) {
                    intersect_box(p, origin, d, static_cast<int>(i), hit);
                } else {
                    intersect_sphere(p, origin, d, static_cast<int>(i), hit);
                }
            }
            const int64_t pix = row * w + col;
            Vec3 rgb = scene.background;
            if (hit.index >= 0) {
                const double shade = lighting.ambient + lighting.headlight * std::max(0.0, -hit.normal.dot(d.normalized()));
                rgb = scene.primitives[static_cast<size_t>(hit.index)].albedo * shade;
            }
            depth[static_cast<size_t>(pix)] = hit.t;
            for (int c = 0; c < 3; ++c) image[static_cast<size_t>(c * h * w + pix)] = quantize(rgb[c]);
        }
    }
    return {Tensor(Shape{3, h, w}, std::move(image)), Tensor(Shape{h, w}, std::move(depth)), pose};
}

std::vector<CameraPose> orbit_poses(const DataConfig& config, double elevation) {
    std::vector<CameraPose> poses;
    for (int64_t k = 0; k < config.views; ++k) {
        const double az = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(config.views);
        poses.push_back(CameraPose::orbit(az, elevation, config.radius, config.focal(), config.image_size, config.image_size));
    }
    return poses;
}

std::vector<const ObjectRecord*> Dataset::split(const std::string& name) const {
    std::vector<const ObjectRecord*> out;
    for (const ObjectRecord& o : objects) {
        if (o.split == name) out.push_back(&o);
    }
    return out;
}

Dataset make_dataset(const DataConfig& config, uint64_t seed, const std::string& config_hash) {
    if (config.views < 2) throw ConfigError("a dataset needs at least two views per object");
    if (config.image_size < 2 || config.image_size % 2) throw ConfigError("image size must be even");
    if (config.max_train_elevation_deg <= 0.0 || config.max_train_elevation_deg >= 90.0) {
        throw ConfigError("training elevation bound must be in (0, 90) degrees");
    }
    for (double e : config.eval_elevations_deg) {
        if (std::abs(e) >= 90.0) throw ConfigError("evaluation elevations must be within (-90, 90) degrees");
    }
    if (config.eval_objects > 0 && config.eval_elevations_deg.empty()) {
        throw ConfigError("evaluation objects need at least one elevation");
    }
    Dataset ds;
    ds.config = config;
    ds.seed = seed;
    ds.config_hash = config_hash;
    const Rng root(seed);
    for (const std::string split : {"train", "eval"}) {
        const bool train = split == "train";
        const int64_t count = train ? config.train_objects : config.eval_objects;
        Rng pick = root.fork(train ? 1 : 2);
        for (int64_t i = 0; i < count; ++i) {
            ObjectRecord o;
            o.name = object_name(split, i);
            o.split = split;
            o.scene_seed = pick.next_u64();
            const double deg = train ? config.max_train_elevation_deg * (1.0 - pick.uniform())
                                     : config.eval_elevations_deg[static_cast<size_t>(i) % config.eval_elevations_deg.size()];
            o.elevation = deg * kPi / 180.0;
            o.scene = gen_scene(o.scene_seed, config.scene);
            o.poses = orbit_poses(config, o.elevation);
            for (const CameraPose& pose : o.poses) {
                RenderedView r = render_view(o.scene, pose, config.lighting);
                o.images.push_back(r.image);
                o.depths.push_back(r.depth);
            }
            ds.objects.push_back(std::move(o));
        }
    }
    return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const DataConfig& c = ds.config;
    std::string m = "mvcons-dataset 1\n";
    m += "seed=" + std::to_string(ds.seed) + "\n";
    m += "config_hash=" + ds.config_hash + "\n";
    m += "train_objects=" + std::to_string(c.train_objects) + "\n";
    m += "eval_objects=" + std::to_string(c.eval_objects) + "\n";
    m += "views=" + std::to_string(c.views) + "\n";
    m += "image_size=" + std::to_string(c.image_size) + "\n";
    m += "radius=" + fmt(c.radius) + "\n";
    m += "focal_scale=" + fmt(c.focal_scale) + "\n";
    m += "max_train_elevation_deg=" + fmt(c.max_train_elevation_deg) + "\n";
    m += "eval_elevations_deg=" + join_list(c.eval_elevations_deg) + "\n";
    m += "min_primitives=" + std::to_string(c.scene.min_primitives) + "\n";
    m += "max_primitives=" + std::to_string(c.scene.max_primitives) + "\n";
    m += "ambient=" + fmt(c.lighting.ambient) + "\n";
    m += "headlight=" + fmt(c.lighting.headlight) + "\n";
    for (const ObjectRecord& o : ds.objects) {
        m += "object " + o.name + " " + o.split + " " + std::to_string(o.scene_seed) + " " + fmt(o.elevation) + "\n";
        const auto od = dir / o.name;
        std::filesystem::create_directories(od, ec);
        if (ec) throw IoError("cannot create " + od.string() + ": " + ec.message());
        write_file(od / "scene.txt", format_scene(o.scene));
        write_file(od / "poses.txt", format_pose_table(o.poses));
        for (size_t v = 0; v < o.images.size(); ++v) {
            const std::string stem = view_stem(static_cast<int64_t>(v));
            write_tensor(od / (stem + ".image.mvt"), o.images[v]);
            write_tensor(od / (stem + ".depth.mvt"), o.depths[v]);
        }
    }
    write_file(dir / "manifest.txt", m);
}

Dataset read_dataset(const std::filesystem::path& dir, bool with_views) {
    std::istringstream in(read_file(dir / "manifest.txt"));
    std::string line;
    if (!std::getline(in, line) || line != "mvcons-dataset 1") throw IoError(dir.string() + ": not a dataset manifest");
    Dataset ds;
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line.rfind("object ", 0) == 0) {
            std::istringstream ls(line.substr(7));
            ObjectRecord o;
            if (!(ls >> o.name >> o.split >> o.scene_seed >> o.elevation)) throw IoError("malformed object line: " + line);
            ds.objects.push_back(std::move(o));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw IoError("dataset manifest lacks '" + key + "'");
        return it->second;
    };
    DataConfig& c = ds.config;
    ds.seed = std::stoull(need("seed"));
    ds.config_hash = need("config_hash");
    c.train_objects = std::stoll(need("train_objects"));
    c.eval_objects = std::stoll(need("eval_objects"));
    c.views = std::stoll(need("views"));
    c.image_size = std::stoll(need("image_size"));
    c.radius = std::stod(need("radius"));
    c.focal_scale = std::stod(need("focal_scale"));
    c.max_train_elevation_deg = std::stod(need("max_train_elevation_deg"));
    c.eval_elevations_deg = split_list(need("eval_elevations_deg"));
    c.scene.min_primitives = std::stoll(need("min_primitives"));
    c.scene.max_primitives = std::stoll(need("max_primitives"));
    c.lighting.ambient = std::stod(need("ambient"));
    c.lighting.headlight = std::stod(need("headlight"));
    for (ObjectRecord& o : ds.objects) {
        const auto od = dir / o.name;
        o.scene = parse_scene(read_file(od / "scene.txt"));
        o.poses = parse_pose_table(read_file(od / "poses.txt"));
        if (static_cast<int64_t>(o.poses.size()) != c.views) throw IoError(o.name + ": pose count mismatch");
        if (!with_views) continue;
        for (int64_t v = 0; v < c.views; ++v) {
            const std::string stem = view_stem(v);
            o.images.push_back(read_tensor(od / (stem + ".image.mvt")));
            o.depths.push_back(read_tensor(od / (stem + ".depth.mvt")));
        }
    }
    return ds;
}

Tensor latent_encode(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("latent_encode expects [C, H, W], got " + shape_str(image.shape()));
    const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h % 2 || w % 2) throw ShapeError("image extent must be divisible by 2, got " + shape_str(image.shape()));
    const int64_t lh = h / 2, lw = w / 2;
    std::vector<double> out(static_cast<size_t>(image.numel()));
    const auto in = image.values();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx)
                for (int64_t y = 0; y < lh; ++y)
                    for (int64_t x = 0; x < lw; ++x) {
                        const double v = in[static_cast<size_t>((ch * h + 2 * y + dy) * w + 2 * x + dx)];
                        out[static_cast<size_t>(((ch * 4 + dy * 2 + dx) * lh + y) * lw + x)] = 2.0 * v - 1.0;
                    }
    return Tensor(Shape{4 * c, lh, lw}, std::move(out));
}

Tensor latent_decode(const Tensor& latent) {
    if (latent.rank() != 3 || latent.dim(0) % 4) {
        throw ShapeError("latent_decode expects [4C, h, w], got " + shape_str(latent.shape()));
    }
    const int64_t c = latent.dim(0) / 4, lh = latent.dim(1), lw = latent.dim(2), h = 2 * lh, w = 2 * lw;
    std::vector<double> out(static_cast<size_t>(latent.numel()));
    const auto in = latent.values();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx)
                for (int64_t y = 0; y < lh; ++y)
                    for (int64_t x = 0; x < lw; ++x) {
                        const double z = in[static_cast<size_t>(((ch * 4 + dy * 2 + dx) * lh + y) * lw + x)];
                        out[static_cast<size_t>((ch * h + 2 * y + dy) * w + 2 * x + dx)] = 0.5 * (z + 1.0);
                    }
    return Tensor(Shape{c, h, w}, std::move(out));
}

}  // namespace mvc
