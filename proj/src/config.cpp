#include "mvc/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "mvc/errors.hpp"
#include "mvc/tensor_io.hpp"

namespace mvc {

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

int64_t to_int(const std::string& key, const std::string& s) {
    size_t used = 0;
    int64_t v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
}

double to_double(const std::string& key, const std::string& s) {
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, item));
    return out;
}

std::string from_list(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Get>
Field make_int(const std::string& key, Get ref) {
    return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
            [ref, key](RunConfig& c, const std::string& s) { ref(c) = to_int(key, s); }};
}

template <typename Get>
Field make_double(const std::string& key, Get ref) {
    return {key, [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
            [ref, key](RunConfig& c, const std::string& s) { ref(c) = to_double(key, s); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        make_int("data.train_objects", [](RunConfig& c) -> int64_t& { return c.data.train_objects; }),
        make_int("data.eval_objects", [](RunConfig& c) -> int64_t& { return c.data.eval_objects; }),
        make_int("data.views", [](RunConfig& c) -> int64_t& { return c.data.views; }),
        make_int("data.image_size", [](RunConfig& c) -> int64_t& { return c.data.image_size; }),
        make_double("data.radius", [](RunConfig& c) -> double& { return c.data.radius; }),
        make_double("data.focal_scale", [](RunConfig& c) -> double& { return c.data.focal_scale; }),
        make_double("data.max_train_elevation_deg", [](RunConfig& c) -> double& { return c.data.max_train_elevation_deg; }),
        {"data.eval_elevations_deg", [](const RunConfig& c) { return from_list(c.data.eval_elevations_deg); },
         [](RunConfig& c, const std::string& s) { c.data.eval_elevations_deg = to_list("data.eval_elevations_deg", s); }},
        make_int("data.min_primitives", [](RunConfig& c) -> int64_t& { return c.data.scene.min_primitives; }),
        make_int("data.max_primitives", [](RunConfig& c) -> int64_t& { return c.data.scene.max_primitives; }),
        make_double("data.ambient", [](RunConfig& c) -> double& { return c.data.lighting.ambient; }),
        make_double("data.headlight", [](RunConfig& c) -> double& { return c.data.lighting.headlight; }),
        make_int("unet.width1", [](RunConfig& c) -> int64_t& { return c.unet.width1; }),
        make_int("unet.width2", [](RunConfig& c) -> int64_t& { return c.unet.width2; }),
        make_int("unet.width3", [](RunConfig& c) -> int64_t& { return c.unet.width3; }),
        make_int("unet.embed_dim", [](RunConfig& c) -> int64_t& { return c.unet.embed_dim; }),
        make_int("unet.time_dim", [](RunConfig& c) -> int64_t& { return c.unet.time_dim; }),
        make_int("unet.groups", [](RunConfig& c) -> int64_t& { return c.unet.groups; }),
        {"unet.velocity_head", [](const RunConfig& c) { return std::string(c.velocity_head ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.velocity_head = to_bool("unet.velocity_head", s); }},
        make_int("block.width", [](RunConfig& c) -> int64_t& { return c.blocks.width; }),
        make_int("block.heads", [](RunConfig& c) -> int64_t& { return c.blocks.heads; }),
        make_int("block.hidden", [](RunConfig& c) -> int64_t& { return c.blocks.hidden; }),
        make_int("block.n_freq", [](RunConfig& c) -> int64_t& { return c.blocks.n_freq; }),
        make_int("block.grid_resolution", [](RunConfig& c) -> int64_t& { return c.grid.resolution; }),
        make_double("block.grid_half_extent", [](RunConfig& c) -> double& { return c.grid.half_extent; }),
        make_int("block.depth_samples", [](RunConfig& c) -> int64_t& { return c.frustum.depth_samples; }),
        make_int("schedule.timesteps", [](RunConfig& c) -> int64_t& { return c.schedule.timesteps; }),
        make_double("schedule.beta_min", [](RunConfig& c) -> double& { return c.schedule.beta_min; }),
        make_double("schedule.beta_max", [](RunConfig& c) -> double& { return c.schedule.beta_max; }),
        make_int("train.backbone_steps", [](RunConfig& c) -> int64_t& { return c.train.backbone_steps; }),
        make_int("train.backbone_batch", [](RunConfig& c) -> int64_t& { return c.train.backbone_batch; }),
        make_double("train.backbone_lr", [](RunConfig& c) -> double& { return c.train.backbone_lr; }),
        make_int("train.block_steps", [](RunConfig& c) -> int64_t& { return c.train.block_steps; }),
        make_int("train.views", [](RunConfig& c) -> int64_t& { return c.train.train_views; }),
        make_double("train.block_lr", [](RunConfig& c) -> double& { return c.train.block_lr; }),
        make_double("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; }),
        make_double("train.grad_clip", [](RunConfig& c) -> double& { return c.train.grad_clip; }),
        make_int("train.log_every", [](RunConfig& c) -> int64_t& { return c.train.log_every; }),
        make_int("train.checkpoint_every", [](RunConfig& c) -> int64_t& { return c.train.checkpoint_every; }),
        make_int("sample.steps", [](RunConfig& c) -> int64_t& { return c.sample.steps; }),
        make_int("sample.views", [](RunConfig& c) -> int64_t& { return c.sample.views; }),
        make_int("sample.objects", [](RunConfig& c) -> int64_t& { return c.sample.objects; }),
        make_int("sample.reference_view", [](RunConfig& c) -> int64_t& { return c.sample.reference_view; }),
        {"sample.concurrent", [](const RunConfig& c) { return std::string(c.sample.concurrent ? "true" : "false"); },
         [](RunConfig& c, const std::string& s) { c.sample.concurrent = to_bool("sample.concurrent", s); }},
        make_double("metrics.tau", [](RunConfig& c) -> double& { return c.tau; }),
    };
    return table;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig smoke_config() {
    RunConfig c;
    c.data.train_objects = 4;
    c.data.eval_objects = 4;
    c.data.views = 8;
    c.data.image_size = 32;
    c.unet.width1 = 16;
    c.unet.width2 = 32;
    c.unet.width3 = 32;
    c.unet.embed_dim = 32;
    c.blocks.width = 8;
    c.blocks.hidden = 16;
    c.train.backbone_steps = 40;
    c.train.backbone_batch = 4;
    c.train.block_steps = 10;
    c.train.log_every = 5;
    c.train.checkpoint_every = 20;
    c.sample.steps = 10;
    c.sample.views = 8;
    return c;
}

std::string format_config(const RunConfig& config) {
    std::string out;
    for (const Field& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
    RunConfig c = base;
    std::istringstream in(text);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        bool found = false;
        for (const Field& f : fields()) {
            if (f.key != key) continue;
            f.set(c, value);
            found = true;
            break;
        }
        if (!found) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    validate_config(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse_config(text, base);
}

void validate_config(const RunConfig& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(c.data.train_objects >= 0 && c.data.eval_objects >= 0, "object counts must be non-negative");
    require(c.data.views >= 2, "data.views must be at least 2");
    require(c.data.image_size >= 16 && c.data.image_size % 16 == 0, "data.image_size must be a positive multiple of 16");
    require(c.data.radius > c.grid.half_extent * std::sqrt(3.0), "data.radius must place cameras outside the grid");
    require(c.data.focal_scale > 0.0, "data.focal_scale must be positive");
    require(c.data.max_train_elevation_deg > 0.0 && c.data.max_train_elevation_deg < 90.0,
            "data.max_train_elevation_deg must be in (0, 90)");
    require(!c.data.eval_elevations_deg.empty(), "data.eval_elevations_deg needs at least one value");
    for (double e : c.data.eval_elevations_deg) require(e > -90.0 && e < 90.0, "evaluation elevations must be in (-90, 90)");
    require(c.data.scene.min_primitives >= 1 && c.data.scene.max_primitives >= c.data.scene.min_primitives,
            "primitive range must satisfy 1 <= min <= max");
    require(c.data.lighting.ambient >= 0.0 && c.data.lighting.headlight >= 0.0, "lighting terms must be non-negative");
    for (int64_t w : {c.unet.width1, c.unet.width2, c.unet.width3}) {
        require(w > 0 && c.unet.groups > 0 && w % c.unet.groups == 0, "UNet widths must be multiples of unet.groups");
    }
    require(c.unet.embed_dim > 0 && c.unet.time_dim >= 2 && c.unet.time_dim % 2 == 0, "bad embedding sizes");
    require(c.blocks.width > 0 && c.blocks.heads > 0 && c.blocks.width % c.blocks.heads == 0,
            "block.width must be a multiple of block.heads");
    require(c.blocks.hidden > 0 && c.blocks.n_freq > 0, "block.hidden and block.n_freq must be positive");
    require(c.grid.resolution >= 2 && c.grid.half_extent > 0.0, "bad voxel grid");
    require(c.frustum.depth_samples >= 1, "block.depth_samples must be positive");
    require(c.schedule.timesteps >= 1, "schedule.timesteps must be positive");
    require(c.schedule.beta_min > 0.0 && c.schedule.beta_min <= c.schedule.beta_max && c.schedule.beta_max < 1.0,
            "schedule needs 0 < beta_min <= beta_max < 1");
    require(c.train.backbone_steps >= 0 && c.train.block_steps >= 0, "step counts must be non-negative");
    require(c.train.backbone_batch >= 1, "train.backbone_batch must be positive");
    require(c.train.train_views >= 1 && c.train.train_views <= c.data.views, "train.views must be in [1, data.views]");
    require(c.train.backbone_lr > 0.0 && c.train.block_lr > 0.0, "learning rates must be positive");
    require(c.train.weight_decay >= 0.0 && c.train.grad_clip >= 0.0, "bad regularisation settings");
    require(c.train.log_every >= 1 && c.train.checkpoint_every >= 1, "logging intervals must be positive");
    require(c.sample.steps >= 1 && c.sample.steps <= c.schedule.timesteps, "sample.steps must be in [1, T]");
    require(c.sample.views >= 1 && c.data.views % c.sample.views == 0, "sample.views must divide data.views");
    require(c.sample.objects >= 0, "sample.objects must be non-negative");
    require(c.sample.reference_view >= 0 && c.sample.reference_view < c.data.views, "sample.reference_view out of range");
    require(c.tau > 0.0, "metrics.tau must be positive");
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const RunConfig& config) {
    // The view schedule does not change results, so it stays out of the hash.
    std::string text;
    for (const Field& f : fields()) {
        if (f.key != "sample.concurrent") text += f.key + " = " + f.get(config) + "\n";
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

}  // namespace mvc
