#pragma once

// End-to-end stages behind the command-line tool. A run directory holds:
//
//   config.txt           the run configuration
//   data/                dataset container (synth.hpp)
//   backbone/            backbone checkpoint + loss.txt
//   blocks/              block checkpoint + loss.txt
//   samples/<variant>/   generated views; variant is "backbone" or "blocks"
//   eval/                report.txt, records.tsv, deltas.tsv

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mvc/config.hpp"
#include "mvc/diffusion.hpp"
#include "mvc/metrics.hpp"
#include "mvc/params.hpp"
#include "mvc/synth.hpp"
#include "mvc/unet.hpp"

namespace mvc {

struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path config() const { return root / "config.txt"; }
    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path backbone() const { return root / "backbone"; }
    std::filesystem::path blocks() const { return root / "blocks"; }
    std::filesystem::path samples(const std::string& variant) const { return root / "samples" / variant; }
    std::filesystem::path eval() const { return root / "eval"; }
};

Dataset run_gen_data(const RunConfig& config, uint64_t seed, const std::filesystem::path& dir, std::ostream& log);

struct TrainLog {
    std::vector<double> losses;  // one per step
};

// Single-view conditional denoising of every backbone parameter.
TrainLog run_train_backbone(const RunConfig& config, const Dataset& data, uint64_t seed,
                            const std::filesystem::path& out, std::ostream& log);

// Freezes the backbone read from `backbone_dir` and trains fresh blocks on the
// joint objective. The backbone files are never written.
TrainLog run_train_blocks(const RunConfig& config, const Dataset& data, const std::filesystem::path& backbone_dir,
                          uint64_t seed, const std::filesystem::path& out, std::ostream& log);

// Loads a checkpoint after checking its config hash against `config`.
UNetParams load_backbone(const RunConfig& config, const std::filesystem::path& dir);
BlockStack load_blocks(const RunConfig& config, const std::filesystem::path& dir);

// Encoded training views: latents[object][view].
std::vector<std::vector<Tensor>> encode_views(const std::vector<const ObjectRecord*>& objects);

// Draw of one block-training step.
struct ViewBatch {
    const ObjectRecord* object = nullptr;
    int64_t reference = 0;
    std::vector<int64_t> views;
    int64_t t = 1;
    std::vector<Tensor> eps;
};
ViewBatch draw_view_batch(const RunConfig& config, const std::vector<const ObjectRecord*>& objects, Rng& rng);

// Generates views for the evaluation objects. `blocks_dir` empty selects the
// backbone-only sampler.
void run_sample(const RunConfig& config, const Dataset& data, const std::filesystem::path& backbone_dir,
                const std::filesystem::path& blocks_dir, uint64_t seed, const std::filesystem::path& out,
                std::ostream& log);

struct ViewScores {
    double psnr = 0.0, ssim = 0.0, ms_ssim = 0.0;
};

struct ObjectScores {
    std::string name;
    double elevation_deg = 0.0;
    std::vector<int64_t> views;
    std::vector<ViewScores> per_view;
    ViewScores mean;
    ReprojectionResult reprojection;
};

// Scores generated views of one object against its ground truth. `views`
// selects the ground-truth view index of each generated image.
ObjectScores score_object(const ObjectRecord& gt, const std::vector<int64_t>& views,
                          const std::vector<Tensor>& generated, double tau);

struct VariantReport {
    std::string variant;
    std::vector<ObjectScores> objects;
    ViewScores mean;
    double reprojection = 0.0;  // mean over objects of the per-object RMSE
};

struct EvalReport {
    std::vector<VariantReport> variants;
};

// Evaluates every sample variant present under `run`; mismatched config
// hashes raise HashMismatchError.
EvalReport run_eval(const RunConfig& config, const Dataset& data, const RunPaths& run, std::ostream& log);

struct SampleSet {
    std::string variant;
    std::string config_hash;
    uint64_t seed = 0;
    std::map<std::string, std::vector<int64_t>> views;      // per object
    std::map<std::string, std::vector<Tensor>> images;      // decoded, clamped
};
SampleSet read_samples(const std::filesystem::path& dir);

}  // namespace mvc
