#pragma once

// Run configuration: a flat "key = value" text file. Unknown keys are
// rejected. The content hash is recorded in every artifact.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "mvc/optim.hpp"
#include "mvc/synth.hpp"
#include "mvc/unet.hpp"
#include "mvc/volume.hpp"

namespace mvc {

struct TrainSettings {
    int64_t backbone_steps = 3000;
    int64_t backbone_batch = 8;
    double backbone_lr = 1e-3;
    int64_t block_steps = 3000;
    int64_t train_views = 4;  // N per block-training step
    double block_lr = 5e-4;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // global norm; 0 disables
    int64_t log_every = 50;
    int64_t checkpoint_every = 500;
};

struct SampleSettings {
    int64_t steps = 50;
    int64_t views = 16;
    int64_t objects = 0;  // 0 = every evaluation object
    int64_t reference_view = 0;
    bool concurrent = true;
};

struct ScheduleSettings {
    int64_t timesteps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
};

struct RunConfig {
    DataConfig data;
    UNetConfig unet;
    BlockStackConfig blocks;
    GridSpec grid{8, 1.0};
    FrustumSpec frustum{8};
    ScheduleSettings schedule;
    TrainSettings train;
    SampleSettings sample;
    bool velocity_head = true;  // see UNetConfig::alpha_bar
    double tau = 0.01;  // depth agreement for the reprojection metric

    int64_t latent_extent() const { return data.image_size / 2; }
};

RunConfig default_config();
// Four objects per split, 32x32 renders (16x16 latents), short schedules.
RunConfig smoke_config();

// Canonical text: one "key = value" line per setting in a fixed order.
std::string format_config(const RunConfig& config);
// Starts from `base` and applies the file's assignments.
RunConfig parse_config(const std::string& text, const RunConfig& base = default_config());
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = default_config());

// Throws ConfigError on out-of-range settings.
void validate_config(const RunConfig& config);

// 64-bit FNV-1a of format_config without sample.concurrent, as 16 hex digits.
std::string config_hash(const RunConfig& config);
uint64_t fnv1a64(const std::string& bytes);

}  // namespace mvc
